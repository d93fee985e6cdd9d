#include "rrtn/gradcheck.hpp"

#include <iomanip>
#include <ostream>

#include "rrtn/losses.hpp"
#include "rrtn/model.hpp"
#include "rrtn/rng.hpp"

namespace rrtn {

namespace {

Tensor random_tensor(Shape shape, RngEngine& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape), 0.0);
    Array& a = t.mut();
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = uniform(rng, lo, hi);
    return t;
}

/// Worst relative error of f over three seeded input draws.
GradCheckResult over_seeds(const std::function<GradCheckResult(RngEngine&)>& one) {
    GradCheckResult worst;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        RngEngine rng(mix_seed(seed, 0x67636bULL));
        const GradCheckResult r = one(rng);
        worst.max_rel_err = std::max(worst.max_rel_err, r.max_rel_err);
        worst.all_finite = worst.all_finite && r.all_finite;
    }
    return worst;
}

GradCheckResult check_ccc(RngEngine& rng) {
    std::vector<Tensor> inputs = {random_tensor({8}, rng), random_tensor({8}, rng)};
    return finite_diff_check(
        [](const std::vector<Tensor>& in) { return ccc(in[0], in[1]); }, inputs);
}

GradCheckResult check_ccc_loss(RngEngine& rng) {
    std::vector<Tensor> inputs = {random_tensor({8, 10}, rng), random_tensor({8, 10}, rng)};
    return finite_diff_check(
        [](const std::vector<Tensor>& in) { return ccc_loss(in[0], in[1]); }, inputs);
}

GradCheckResult check_bt_loss(RngEngine& rng) {
    std::vector<Tensor> inputs = {random_tensor({6, 4}, rng), random_tensor({6, 4}, rng)};
    return finite_diff_check(
        [](const std::vector<Tensor>& in) {
            return bt_loss(cross_correlation(in[0], in[1], true), 0.001);
        },
        inputs);
}

GradCheckResult check_weighted_sum(RngEngine& rng) {
    std::vector<Tensor> inputs = {random_tensor({5}, rng), random_tensor({5}, rng),
                                  random_tensor({5}, rng)};
    return finite_diff_check(
        [](const std::vector<Tensor>& in) {
            return weighted_sum_loss({mean(square(in[0])), mean(square(in[1])), mean(square(in[2]))},
                                     {0.7, 0.2, 0.1});
        },
        inputs);
}

GradCheckResult check_ruwl(RngEngine& rng) {
    // Magnitudes well away from the |.| kinks and the restraint zero.
    Tensor c(Shape{3}, std::vector<double>{uniform(rng, 0.3, 0.9), uniform(rng, 0.3, 0.9),
                                           uniform(rng, -0.9, -0.3)});
    return finite_diff_check(
        [](const std::vector<Tensor>& in) {
            RuwlParams p = make_ruwl_params();
            p.c = in[0];
            return ruwl(p);
        },
        {c});
}

GradCheckResult check_combined(RngEngine& rng) {
    Tensor c(Shape{3}, std::vector<double>{uniform(rng, 0.5, 1.2), uniform(rng, 0.5, 1.2),
                                           uniform(rng, 0.2, 0.6)});
    std::vector<Tensor> inputs = {c, random_tensor({6}, rng), random_tensor({6}, rng),
                                  random_tensor({6}, rng)};
    return finite_diff_check(
        [](const std::vector<Tensor>& in) {
            RuwlParams p = make_ruwl_params({1.0, 1.0, 0.01}, {1.0, 1.0, 0.5},
                                            LambdaPosition::denominator);
            p.c = in[0];
            const std::array<Tensor, 3> losses = {mean(square(in[1])), mean(square(in[2])),
                                                  mean(square(in[3]))};
            return combined_loss(losses, p).total;
        },
        inputs);
}

GradCheckResult check_matmul(RngEngine& rng) {
    std::vector<Tensor> inputs = {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)};
    return finite_diff_check(
        [](const std::vector<Tensor>& in) { return sum(square(matmul(in[0], in[1]))); }, inputs);
}

GradCheckResult check_conv2d(RngEngine& rng) {
    std::vector<Tensor> inputs = {random_tensor({1, 1, 5, 5}, rng), random_tensor({2, 1, 3, 3}, rng)};
    return finite_diff_check(
        [](const std::vector<Tensor>& in) { return sum(square(conv2d(in[0], in[1]))); }, inputs);
}

GradCheckResult check_avgpool(RngEngine& rng) {
    std::vector<Tensor> inputs = {random_tensor({1, 2, 4, 6}, rng)};
    return finite_diff_check(
        [](const std::vector<Tensor>& in) { return mean(square(avgpool2d(in[0], 2, 2))); }, inputs);
}

GradCheckResult check_unary_chain(RngEngine& rng) {
    std::vector<Tensor> inputs = {random_tensor({12}, rng, 0.2, 1.5)};
    return finite_diff_check(
        [](const std::vector<Tensor>& in) {
            Tensor t = sigmoid(log(add(square(in[0]), 0.5)));
            t = add(relu(sub(t, 0.3)), sqrt(add(abs(in[0]), 0.1)));
            return mean(t);
        },
        inputs);
}

ModelConfig tiny_model_config(bool cnn) {
    ModelConfig cfg;
    cfg.encoder_kind = cnn ? EncoderKind::tiny_cnn : EncoderKind::mlp;
    cfg.encoder_dims = cnn ? std::vector<std::size_t>{2, 3, 2} : std::vector<std::size_t>{8};
    cfg.rep_dim = 8;
    cfg.emb_dim = 8;
    cfg.n_outputs = 3;
    cfg.input_t = 6;
    cfg.input_f = 4;
    return cfg;
}

/// End-to-end check of one of the three step losses wrt every parameter.
GradCheckResult check_model_loss(RngEngine& rng, bool cnn, std::size_t loss_index) {
    const ModelConfig cfg = tiny_model_config(cnn);
    ModelParams params = init_params(cfg, rng());
    const Tensor x_a = random_tensor({4, 1, cfg.input_t, cfg.input_f}, rng, 0.0, 1.0);
    const Tensor x_b = random_tensor({4, 1, cfg.input_t, cfg.input_f}, rng, 0.0, 1.0);
    const Tensor targets = random_tensor({4, cfg.n_outputs}, rng, 0.0, 1.0);

    std::vector<Tensor> inputs;
    std::vector<std::string> names;
    for (const auto& e : params.entries) {
        inputs.push_back(e.tensor);
        names.push_back(e.name);
    }

    return finite_diff_check(
        [&, names](const std::vector<Tensor>& in) {
            ModelParams p;
            for (std::size_t i = 0; i < in.size(); ++i) p.entries.push_back({names[i], in[i]});
            return rrtn_step_losses(cfg, p, x_a, x_b, targets, 0.005, true)[loss_index];
        },
        inputs);
}

}  // namespace

std::vector<NamedCheck> default_grad_checks() {
    std::vector<NamedCheck> checks;
    const auto add = [&](std::string name, double tol,
                         std::function<GradCheckResult(RngEngine&)> one) {
        checks.push_back({std::move(name), tol,
                          [one = std::move(one)]() { return over_seeds(one); }});
    };

    // uniform gate; the tighter per-op bounds (matmul 1e-6, conv2d 1e-5)
    // are asserted in the unit suites
    add("ccc", 1e-4, check_ccc);
    add("ccc_loss", 1e-4, check_ccc_loss);
    add("bt_loss", 1e-4, check_bt_loss);
    add("weighted_sum_loss", 1e-4, check_weighted_sum);
    add("ruwl", 1e-4, check_ruwl);
    add("combined_loss", 1e-4, check_combined);
    add("matmul", 1e-4, check_matmul);
    add("conv2d", 1e-4, check_conv2d);
    add("avgpool2d", 1e-4, check_avgpool);
    add("unary_chain", 1e-4, check_unary_chain);
    add("model_ccc", 1e-4, [](RngEngine& rng) { return check_model_loss(rng, false, 0); });
    add("model_ccc_augmented", 1e-4, [](RngEngine& rng) { return check_model_loss(rng, false, 1); });
    add("model_bt", 1e-4, [](RngEngine& rng) { return check_model_loss(rng, false, 2); });
    add("model_cnn_ccc", 1e-4, [](RngEngine& rng) { return check_model_loss(rng, true, 0); });
    return checks;
}

GradCheckReport run_grad_checks(const std::vector<NamedCheck>& checks, std::ostream& os) {
    GradCheckReport report;
    for (const NamedCheck& check : checks) {
        const GradCheckResult r = check.run();
        GradCheckReport::Line line;
        line.name = check.name;
        line.max_rel_err = r.max_rel_err;
        line.tolerance = check.tolerance;
        line.passed = r.ok(check.tolerance);
        report.ok = report.ok && line.passed;
        report.lines.push_back(line);
        os << (line.passed ? "PASS" : "FAIL") << "  " << std::left << std::setw(22) << line.name
           << " max rel err " << std::scientific << std::setprecision(3) << line.max_rel_err
           << "  (tol " << line.tolerance << ")\n" << std::defaultfloat;
    }
    return report;
}

}  // namespace rrtn
