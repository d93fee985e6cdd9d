#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rrtn/optimizer.hpp"
#include "rrtn/rng.hpp"

using namespace rrtn;

namespace {

// Scalar-by-scalar reference of the decoupled-weight-decay update.
struct ReferenceAdamW {
    std::vector<std::vector<double>> m, v;
    std::uint64_t t = 0;

    explicit ReferenceAdamW(const std::vector<std::vector<double>>& params) {
        for (const auto& p : params) {
            m.emplace_back(p.size(), 0.0);
            v.emplace_back(p.size(), 0.0);
        }
    }

    void step(std::vector<std::vector<double>>& params,
              const std::vector<std::vector<double>>& grads, const AdamWConfig& cfg) {
        t += 1;
        for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t j = 0; j < params[i].size(); ++j) {
                const double g = grads[i][j];
                m[i][j] = cfg.beta1 * m[i][j] + (1.0 - cfg.beta1) * g;
                v[i][j] = cfg.beta2 * v[i][j] + (1.0 - cfg.beta2) * g * g;
                const double m_hat = m[i][j] / (1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
                const double v_hat = v[i][j] / (1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
                params[i][j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps) +
                                cfg.lr * cfg.weight_decay * params[i][j];
            }
    }
};

}  // namespace

TEST_CASE("single step hand evaluation") {
    std::vector<Tensor> params = {Tensor({1}, {1.0})};
    std::vector<Tensor> grads = {Tensor({1}, {1.0})};
    AdamWState state = make_adamw_state(params);
    AdamWConfig cfg;  // defaults: lr 1e-3, eps 1e-8, wd 0.01
    adamw_step(params, grads, state, cfg);

    // mhat = 1, vhat = 1 on the first step with g = 1
    const double expected = 1.0 - 0.001 * (1.0 / (1.0 + 1e-8)) - 0.001 * 0.01 * 1.0;
    CHECK(params[0][0] == doctest::Approx(expected).epsilon(1e-14));
    CHECK(params[0][0] == doctest::Approx(0.99899).epsilon(1e-5));
    CHECK(state.t == 1);
}

TEST_CASE("zero gradient is a fixed point without weight decay") {
    std::vector<Tensor> params = {Tensor({3}, {0.5, -2.0, 7.25})};
    std::vector<Tensor> grads = {Tensor({3}, 0.0)};
    AdamWState state = make_adamw_state(params);
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    adamw_step(params, grads, state, cfg);
    CHECK(params[0][0] == 0.5);
    CHECK(params[0][1] == -2.0);
    CHECK(params[0][2] == 7.25);
}

TEST_CASE("zero gradient with weight decay is pure decoupled decay") {
    const double theta = 3.5;
    std::vector<Tensor> params = {Tensor({1}, {theta})};
    std::vector<Tensor> grads = {Tensor({1}, 0.0)};
    AdamWState state = make_adamw_state(params);
    AdamWConfig cfg;  // wd 0.01
    adamw_step(params, grads, state, cfg);
    CHECK(params[0][0] == doctest::Approx(theta * (1.0 - cfg.lr * cfg.weight_decay)).epsilon(1e-15));
}

TEST_CASE("matches the scalar reference to 1e-12 over random sequences") {
    RngEngine rng(101);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::vector<double>> ref_params = {{}, {}};
        std::vector<Tensor> params;
        for (std::size_t i = 0; i < 2; ++i) {
            const std::size_t n = static_cast<std::size_t>(uniform_int(rng, 1, 6));
            Tensor t(Shape{n}, 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                const double v = uniform(rng, -2.0, 2.0);
                t.mut()[static_cast<Eigen::Index>(j)] = v;
                ref_params[i].push_back(v);
            }
            params.push_back(t);
        }
        AdamWConfig cfg;
        cfg.lr = uniform(rng, 1e-4, 1e-2);
        cfg.weight_decay = uniform(rng, 0.0, 0.05);
        AdamWState state = make_adamw_state(params);
        ReferenceAdamW ref(ref_params);

        for (int step = 0; step < 7; ++step) {
            std::vector<std::vector<double>> ref_grads;
            std::vector<Tensor> grads;
            for (std::size_t i = 0; i < 2; ++i) {
                std::vector<double> g(ref_params[i].size());
                Tensor gt(Shape{g.size()}, 0.0);
                for (std::size_t j = 0; j < g.size(); ++j) {
                    g[j] = uniform(rng, -1.0, 1.0);
                    gt.mut()[static_cast<Eigen::Index>(j)] = g[j];
                }
                ref_grads.push_back(std::move(g));
                grads.push_back(gt);
            }
            adamw_step(params, grads, state, cfg);
            ref.step(ref_params, ref_grads, cfg);
            for (std::size_t i = 0; i < 2; ++i)
                for (std::size_t j = 0; j < ref_params[i].size(); ++j)
                    CHECK(std::abs(params[i][j] - ref_params[i][j]) < 1e-12);
        }
        CHECK(state.t == 7);
    }
}

TEST_CASE("second moments stay non-negative") {
    RngEngine rng(55);
    std::vector<Tensor> params = {Tensor({4}, {1.0, -1.0, 2.0, -2.0})};
    AdamWState state = make_adamw_state(params);
    AdamWConfig cfg;
    for (int step = 0; step < 20; ++step) {
        Tensor g(Shape{4}, 0.0);
        for (Eigen::Index i = 0; i < 4; ++i) g.mut()[i] = uniform(rng, -3.0, 3.0);
        adamw_step(params, {g}, state, cfg);
        CHECK(state.v[0].minCoeff() >= 0.0);
    }
    CHECK(state.t == 20);
}

TEST_CASE("non-finite gradients abort the step and leave parameters untouched") {
    std::vector<Tensor> params = {Tensor({2}, {1.0, 2.0})};
    AdamWState state = make_adamw_state(params);
    AdamWConfig cfg;
    Tensor bad(Shape{2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
    CHECK_THROWS_AS(adamw_step(params, {bad}, state, cfg), std::runtime_error);
    CHECK(params[0][0] == 1.0);
    CHECK(params[0][1] == 2.0);
    CHECK(state.t == 0);
}

TEST_CASE("config validation") {
    AdamWConfig cfg;
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = AdamWConfig{};
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
