#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rrtn/trainer.hpp"

using namespace rrtn;

namespace {

SynthConfig tiny_data_cfg() {
    SynthConfig cfg;
    cfg.n_samples = 40;
    cfg.T = 8;
    cfg.F = 8;
    cfg.K = 4;
    cfg.noise_sigma = 0.02;
    cfg.seed = 5;
    return cfg;
}

ModelConfig tiny_model_cfg(const SynthConfig& data) {
    ModelConfig cfg;
    cfg.encoder_dims = {16};
    cfg.rep_dim = 16;
    cfg.emb_dim = 8;
    cfg.n_outputs = data.K;
    cfg.input_t = data.T;
    cfg.input_f = data.F;
    return cfg;
}

TrainConfig tiny_train_cfg(TrainMode mode, std::size_t epochs) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 8;
    cfg.seed = 1;
    cfg.mode = mode;
    cfg.augment.time_drop_width = 2;
    cfg.augment.time_stripes = 1;
    cfg.augment.freq_drop_width = 2;
    cfg.augment.freq_stripes = 1;
    return cfg;
}

std::string serialize(const TrainReport& report) {
    std::string out;
    for (const EpochRecord& r : report.records) out += record_to_json(r) + "\n";
    return out;
}

}  // namespace

TEST_CASE("zero epochs yields only the initial dev record") {
    const SynthConfig dc = tiny_data_cfg();
    const Dataset data = gen_synth(dc);
    TrainReport report = train(tiny_train_cfg(TrainMode::baseline, 0), tiny_model_cfg(dc), data);
    REQUIRE(report.records.size() == 1);
    CHECK(report.records[0].epoch == 0);
    CHECK_FALSE(report.records[0].has_losses);
    CHECK(std::isfinite(report.records[0].dev_ccc));
    CHECK(report.best_epoch == 0);
}

TEST_CASE("training reports are bitwise reproducible per seed") {
    const SynthConfig dc = tiny_data_cfg();
    const Dataset data = gen_synth(dc);
    const TrainConfig tc = tiny_train_cfg(TrainMode::rrtn_ruwl, 4);
    TrainReport a = train(tc, tiny_model_cfg(dc), data);
    TrainReport b = train(tc, tiny_model_cfg(dc), data);
    CHECK(serialize(a) == serialize(b));

    TrainConfig other = tc;
    other.seed = 2;
    TrainReport c = train(other, tiny_model_cfg(dc), data);
    CHECK(serialize(a) != serialize(c));
}

TEST_CASE("training reduces the regression loss on the training split") {
    const SynthConfig dc = tiny_data_cfg();
    const Dataset data = gen_synth(dc);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        for (TrainMode mode : {TrainMode::baseline, TrainMode::rrtn_fixed, TrainMode::rrtn_ruwl}) {
            TrainConfig tc = tiny_train_cfg(mode, 20);
            tc.seed = seed;
            TrainReport report = train(tc, tiny_model_cfg(dc), data);
            REQUIRE(report.records.size() == 21);
            CAPTURE(seed);
            CAPTURE(train_mode_name(mode));
            CHECK(report.records.back().l_ccc < report.records[1].l_ccc);
            CHECK_FALSE(report.halted);
        }
    }
}

TEST_CASE("modes share initialization but diverge in their loss traces") {
    const SynthConfig dc = tiny_data_cfg();
    const Dataset data = gen_synth(dc);
    TrainReport base = train(tiny_train_cfg(TrainMode::baseline, 3), tiny_model_cfg(dc), data);
    TrainReport ruwl = train(tiny_train_cfg(TrainMode::rrtn_ruwl, 3), tiny_model_cfg(dc), data);
    CHECK(base.records[0].dev_ccc == ruwl.records[0].dev_ccc);
    CHECK(base.records.back().l_total != ruwl.records.back().l_total);
}

TEST_CASE("ruwl keeps |c| at or above the clamp floor after every step") {
    const SynthConfig dc = tiny_data_cfg();
    const Dataset data = gen_synth(dc);
    TrainConfig tc = tiny_train_cfg(TrainMode::rrtn_ruwl, 6);
    tc.ruwl_c_init = {1.0, 1.0, 0.0};  // starts below the floor on purpose
    TrainReport report = train(tc, tiny_model_cfg(dc), data);
    for (std::size_t e = 1; e < report.records.size(); ++e)
        for (int i = 0; i < 3; ++i) CHECK(std::abs(report.records[e].c[i]) >= 1e-6);
}

TEST_CASE("the denominator lambda reading trains despite its huge weights") {
    // w3 = 1/(1e-8 * c3^2) ~ 1e12 at init; totals this large exercise the
    // relative bookkeeping tolerance
    const SynthConfig dc = tiny_data_cfg();
    const Dataset data = gen_synth(dc);
    TrainConfig tc = tiny_train_cfg(TrainMode::rrtn_ruwl, 4);
    tc.ruwl_lambda_position = LambdaPosition::denominator;
    TrainReport report = train(tc, tiny_model_cfg(dc), data);
    CHECK_FALSE(report.halted);
    CHECK(report.records.back().l_total > 1e6);
}

TEST_CASE("ruwl c parameters actually move during joint training") {
    const SynthConfig dc = tiny_data_cfg();
    const Dataset data = gen_synth(dc);
    TrainReport report = train(tiny_train_cfg(TrainMode::rrtn_ruwl, 5), tiny_model_cfg(dc), data);
    const Eigen::Vector3d c0 = report.records.front().c;
    const Eigen::Vector3d cn = report.records.back().c;
    CHECK((c0 - cn).norm() > 0.0);
}

TEST_CASE("baseline mode passes the projector zero-gradient assertion") {
    const SynthConfig dc = tiny_data_cfg();
    const Dataset data = gen_synth(dc);
    // the check runs inside the loop and throws std::logic_error on violation
    CHECK_NOTHROW(train(tiny_train_cfg(TrainMode::baseline, 3), tiny_model_cfg(dc), data));
}

TEST_CASE("records expose all keys in JSON lines form") {
    const SynthConfig dc = tiny_data_cfg();
    const Dataset data = gen_synth(dc);
    TrainReport report = train(tiny_train_cfg(TrainMode::rrtn_ruwl, 2), tiny_model_cfg(dc), data);
    const std::string line = record_to_json(report.records[1]);
    for (const char* key : {"epoch", "l_ccc", "l_ccc_a", "l_bt", "l_w", "l_total", "c",
                            "effective_weights", "dev_ccc"})
        CHECK(line.find(key) != std::string::npos);
}

TEST_CASE("a diverging run halts with a diagnostic instead of emitting garbage") {
    const SynthConfig dc = tiny_data_cfg();
    const Dataset data = gen_synth(dc);
    TrainConfig tc = tiny_train_cfg(TrainMode::baseline, 10);
    tc.optim.lr = 1e80;  // guaranteed overflow
    TrainReport report = train(tc, tiny_model_cfg(dc), data);
    CHECK(report.halted);
    CHECK_FALSE(report.halt_reason.empty());
    CHECK(report.records.size() < 11);
}

TEST_CASE("evaluate is order-invariant over the split") {
    const SynthConfig dc = tiny_data_cfg();
    Dataset data = gen_synth(dc);
    const ModelConfig mc = tiny_model_cfg(dc);
    ModelParams params = init_params(mc, 9);

    EvalResult base = evaluate(mc, params, data, Split::dev);
    CHECK(base.per_dim.size() == static_cast<Eigen::Index>(dc.K));

    // permute the dev samples
    Dataset shuffled = data;
    const std::size_t n = data.size();
    for (std::size_t i = data.n_train; i < n; ++i) {
        const std::size_t j = data.n_train + (n - 1 - i) % data.n_dev();
        shuffled.features[i] = data.features[j];
        shuffled.targets.row(static_cast<Eigen::Index>(i)) =
            data.targets.row(static_cast<Eigen::Index>(j));
    }
    EvalResult perm = evaluate(mc, params, shuffled, Split::dev);
    CHECK(std::abs(base.mean_ccc - perm.mean_ccc) < 1e-12);
}

TEST_CASE("evaluate rejects an empty split and mismatched geometry") {
    const SynthConfig dc = tiny_data_cfg();
    Dataset data = gen_synth(dc);
    const ModelConfig mc = tiny_model_cfg(dc);
    ModelParams params = init_params(mc, 9);

    Dataset no_dev = data;
    no_dev.n_train = no_dev.size();
    CHECK_THROWS_AS(evaluate(mc, params, no_dev, Split::dev), std::invalid_argument);

    ModelConfig wrong = mc;
    wrong.n_outputs = dc.K + 1;
    CHECK_THROWS_AS(evaluate(wrong, params, data, Split::dev), std::invalid_argument);
}

TEST_CASE("best checkpoint parameters reproduce the best dev metric") {
    const SynthConfig dc = tiny_data_cfg();
    const Dataset data = gen_synth(dc);
    TrainReport report = train(tiny_train_cfg(TrainMode::baseline, 8), tiny_model_cfg(dc), data);

    double best_from_records = report.records[0].dev_ccc;
    for (const EpochRecord& r : report.records)
        best_from_records = std::max(best_from_records, r.dev_ccc);
    CHECK(report.best_dev_ccc == best_from_records);

    EvalResult re = evaluate(report.model_cfg, report.best_params, data, Split::dev);
    CHECK(re.mean_ccc == report.best_dev_ccc);
    EvalResult fin = evaluate(report.model_cfg, report.final_params, data, Split::dev);
    CHECK(fin.mean_ccc == report.final_dev_ccc);
}

TEST_CASE("train config validation") {
    TrainConfig tc;
    tc.batch_size = 1;
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
    tc = TrainConfig{};
    tc.ruwl_lambda = {1.0, 0.0, 1.0};
    CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
}
