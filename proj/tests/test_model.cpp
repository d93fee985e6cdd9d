#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rrtn/losses.hpp"
#include "rrtn/model.hpp"
#include "rrtn/rng.hpp"

using namespace rrtn;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.encoder_dims = {8};
    cfg.rep_dim = 8;
    cfg.emb_dim = 8;
    cfg.n_outputs = 3;
    cfg.input_t = 6;
    cfg.input_f = 4;
    return cfg;
}

Tensor rand_batch(std::size_t b, const ModelConfig& cfg, RngEngine& rng) {
    Tensor x({b, 1, cfg.input_t, cfg.input_f}, 0.0);
    for (Eigen::Index i = 0; i < x.mut().size(); ++i) x.mut()[i] = uniform(rng, 0.0, 1.0);
    return x;
}

}  // namespace

TEST_CASE("identical views produce bitwise identical twin outputs") {
    const ModelConfig cfg = tiny_cfg();
    ModelParams params = init_params(cfg, 3);
    RngEngine rng(1);
    Tensor x = rand_batch(4, cfg, rng);
    TwinOutput out = forward_twin(cfg, params, x, x);
    CHECK((out.rep_a.data() == out.rep_b.data()).all());
    CHECK((out.emb_a.data() == out.emb_b.data()).all());
    CHECK((out.pred_a.data() == out.pred_b.data()).all());
}

TEST_CASE("twin output shapes follow the config") {
    ModelConfig cfg = tiny_cfg();
    cfg.rep_dim = 7;
    cfg.emb_dim = 5;
    cfg.n_outputs = 2;
    ModelParams params = init_params(cfg, 3);
    RngEngine rng(2);
    Tensor xa = rand_batch(3, cfg, rng);
    Tensor xb = rand_batch(3, cfg, rng);
    TwinOutput out = forward_twin(cfg, params, xa, xb);
    CHECK(out.rep_a.shape() == Shape{3, 7});
    CHECK(out.emb_b.shape() == Shape{3, 5});
    CHECK(out.pred_a.shape() == Shape{3, 2});

    CHECK_THROWS_AS(forward_twin(cfg, params, xa, rand_batch(2, cfg, rng)), std::invalid_argument);
    CHECK_THROWS_AS(predict(cfg, params, Tensor({3, 1, 5, 4}, 0.0)), std::invalid_argument);
}

TEST_CASE("initialization is deterministic per seed") {
    const ModelConfig cfg = tiny_cfg();
    ModelParams a = init_params(cfg, 42);
    ModelParams b = init_params(cfg, 42);
    ModelParams c = init_params(cfg, 43);
    REQUIRE(a.entries.size() == b.entries.size());
    bool any_differs = false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        CHECK((a.entries[i].tensor.data() == b.entries[i].tensor.data()).all());
        any_differs = any_differs || !(a.entries[i].tensor.data() == c.entries[i].tensor.data()).all();
    }
    CHECK(any_differs);
}

TEST_CASE("initial weights respect the fan-in bound and biases are zero") {
    const ModelConfig cfg = tiny_cfg();
    ModelParams params = init_params(cfg, 7);
    const double in_dim = static_cast<double>(cfg.input_t * cfg.input_f);
    const double bound = 1.0 / std::sqrt(in_dim);
    const Tensor& w = params.at("encoder.fc0.weight");
    CHECK(w.data().abs().maxCoeff() < bound);
    CHECK(params.at("encoder.fc0.bias").data().abs().maxCoeff() == 0.0);
    CHECK(params.at("head.weight").data().abs().maxCoeff() < 1.0 / std::sqrt(8.0));
}

TEST_CASE("parameters are shared between the twin passes") {
    const ModelConfig cfg = tiny_cfg();
    ModelParams params = init_params(cfg, 5);
    RngEngine rng(4);
    Tensor x = rand_batch(2, cfg, rng);

    TwinOutput before = forward_twin(cfg, params, x, x);
    params.at("head.bias").mut()[0] += 0.25;
    TwinOutput after = forward_twin(cfg, params, x, x);

    // both views move, and identically
    CHECK_FALSE((after.pred_a.data() == before.pred_a.data()).all());
    CHECK((after.pred_a.data() == after.pred_b.data()).all());
}

TEST_CASE("step losses: teacher forcing and identical views") {
    const ModelConfig cfg = tiny_cfg();
    ModelParams params = init_params(cfg, 11);
    RngEngine rng(6);
    Tensor x = rand_batch(4, cfg, rng);

    // teacher forcing: use the model's own predictions as targets; the ccc
    // epsilon leaves a residual proportional to 1/variance, and fresh-model
    // predictions have small variance
    Tensor preds = predict(cfg, params, x);
    std::array<Tensor, 3> losses = rrtn_step_losses(cfg, params, x, x, preds, 0.005);
    CHECK(std::abs(losses[0].value()) < 1e-3);

    // identical views make both regression losses the same computation
    Tensor targets({4, cfg.n_outputs}, 0.0);
    for (Eigen::Index i = 0; i < targets.mut().size(); ++i)
        targets.mut()[i] = uniform(rng, 0.0, 1.0);
    std::array<Tensor, 3> same = rrtn_step_losses(cfg, params, x, x, targets, 0.005);
    CHECK(same[0].value() == same[1].value());
}

TEST_CASE("losses are finite and non-negative across 100 seeded instances") {
    const ModelConfig cfg = tiny_cfg();
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        ModelParams params = init_params(cfg, seed);
        RngEngine rng(mix_seed(seed, 0xabcULL));
        Tensor xa = rand_batch(3, cfg, rng);
        Tensor xb = rand_batch(3, cfg, rng);
        Tensor targets({3, cfg.n_outputs}, 0.0);
        for (Eigen::Index i = 0; i < targets.mut().size(); ++i)
            targets.mut()[i] = uniform(rng, 0.0, 1.0);
        std::array<Tensor, 3> losses = rrtn_step_losses(cfg, params, xa, xb, targets, 0.005);
        for (const Tensor& l : losses) {
            CHECK(l.all_finite());
            CHECK(l.value() >= 0.0);
        }
    }
}

TEST_CASE("fresh model: self cross-correlation has no invariance penalty") {
    const ModelConfig cfg = tiny_cfg();
    ModelParams params = init_params(cfg, 21);
    RngEngine rng(8);
    Tensor x = rand_batch(5, cfg, rng);
    TwinOutput out = forward_twin(cfg, params, x, x);
    CHECK(bt_loss(cross_correlation(out.emb_a, out.emb_a, true), 0.0).value() < 1e-9);
}

TEST_CASE("joint batch permutation leaves the three losses unchanged") {
    const ModelConfig cfg = tiny_cfg();
    ModelParams params = init_params(cfg, 13);
    RngEngine rng(9);
    const std::size_t b = 5;
    Tensor xa = rand_batch(b, cfg, rng);
    Tensor xb = rand_batch(b, cfg, rng);
    Tensor targets({b, cfg.n_outputs}, 0.0);
    for (Eigen::Index i = 0; i < targets.mut().size(); ++i)
        targets.mut()[i] = uniform(rng, 0.0, 1.0);

    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    const std::size_t item = cfg.input_t * cfg.input_f;
    Tensor xa_p(xa.shape(), 0.0), xb_p(xb.shape(), 0.0), t_p(targets.shape(), 0.0);
    for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t i = 0; i < item; ++i) {
            xa_p.mut()[static_cast<Eigen::Index>(r * item + i)] = xa[perm[r] * item + i];
            xb_p.mut()[static_cast<Eigen::Index>(r * item + i)] = xb[perm[r] * item + i];
        }
        for (std::size_t k = 0; k < cfg.n_outputs; ++k)
            t_p.mut()[static_cast<Eigen::Index>(r * cfg.n_outputs + k)] =
                targets[perm[r] * cfg.n_outputs + k];
    }

    std::array<Tensor, 3> base = rrtn_step_losses(cfg, params, xa, xb, targets, 0.005);
    std::array<Tensor, 3> permuted = rrtn_step_losses(cfg, params, xa_p, xb_p, t_p, 0.005);
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(base[static_cast<std::size_t>(i)].value() -
                       permuted[static_cast<std::size_t>(i)].value()) < 1e-10);
}

TEST_CASE("end-to-end gradients match finite differences on the tiny config") {
    const ModelConfig cfg = tiny_cfg();
    ModelParams params = init_params(cfg, 17);
    RngEngine rng(10);
    const Tensor xa = rand_batch(4, cfg, rng);
    const Tensor xb = rand_batch(4, cfg, rng);
    Tensor targets({4, cfg.n_outputs}, 0.0);
    for (Eigen::Index i = 0; i < targets.mut().size(); ++i)
        targets.mut()[i] = uniform(rng, 0.0, 1.0);

    std::vector<Tensor> inputs;
    std::vector<std::string> names;
    for (const auto& e : params.entries) {
        inputs.push_back(e.tensor);
        names.push_back(e.name);
    }
    for (std::size_t loss_index = 0; loss_index < 3; ++loss_index) {
        GradCheckResult r = finite_diff_check(
            [&](const std::vector<Tensor>& in) {
                ModelParams p;
                for (std::size_t i = 0; i < in.size(); ++i) p.entries.push_back({names[i], in[i]});
                return rrtn_step_losses(cfg, p, xa, xb, targets, 0.005)[loss_index];
            },
            inputs);
        CAPTURE(loss_index);
        CHECK(r.all_finite);
        CHECK(r.max_rel_err < 1e-4);
    }
}

TEST_CASE("tiny_cnn encoder forward and gradients") {
    ModelConfig cfg = tiny_cfg();
    cfg.encoder_kind = EncoderKind::tiny_cnn;
    cfg.encoder_dims = {2, 3, 2};  // channels, kernel, pool
    ModelParams params = init_params(cfg, 19);
    RngEngine rng(12);
    Tensor x = rand_batch(3, cfg, rng);
    Tensor preds = predict(cfg, params, x);
    CHECK(preds.shape() == Shape{3, cfg.n_outputs});
    CHECK(preds.all_finite());

    Tensor targets({3, cfg.n_outputs}, 0.0);
    for (Eigen::Index i = 0; i < targets.mut().size(); ++i)
        targets.mut()[i] = uniform(rng, 0.0, 1.0);
    std::vector<Tensor> inputs;
    std::vector<std::string> names;
    for (const auto& e : params.entries) {
        inputs.push_back(e.tensor);
        names.push_back(e.name);
    }
    GradCheckResult r = finite_diff_check(
        [&](const std::vector<Tensor>& in) {
            ModelParams p;
            for (std::size_t i = 0; i < in.size(); ++i) p.entries.push_back({names[i], in[i]});
            return rrtn_step_losses(cfg, p, x, x, targets, 0.005)[0];
        },
        inputs);
    CHECK(r.all_finite);
    CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("head sigmoid bounds predictions") {
    ModelConfig cfg = tiny_cfg();
    cfg.head_sigmoid = true;
    ModelParams params = init_params(cfg, 23);
    RngEngine rng(14);
    Tensor preds = predict(cfg, params, rand_batch(4, cfg, rng));
    CHECK(preds.data().minCoeff() > 0.0);
    CHECK(preds.data().maxCoeff() < 1.0);
}
