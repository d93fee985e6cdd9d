#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "rrtn/checkpoint.hpp"
#include "rrtn/cli.hpp"
#include "rrtn/gradcheck.hpp"

using namespace rrtn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("cli_test_tmp") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run_binary(const std::string& args, std::string* output = nullptr) {
    const std::string log = "cli_test_tmp/run.log";
    fs::create_directories("cli_test_tmp");
    const int status =
        std::system((std::string(RRTN_CLI_PATH) + " " + args + " > " + log + " 2>&1").c_str());
    if (output) {
        std::ifstream is(log);
        std::stringstream ss;
        ss << is.rdbuf();
        *output = ss.str();
    }
    return status == -1 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : -1);
}

RunConfig quick_config(const std::string& out_dir) {
    RunConfig cfg = default_run_config();
    cfg.data.n_samples = 60;
    cfg.data.T = 8;
    cfg.data.F = 8;
    cfg.data.K = 4;
    cfg.model.n_outputs = 4;
    cfg.model.encoder_dims = {16};
    cfg.model.rep_dim = 16;
    cfg.model.emb_dim = 8;
    cfg.train.epochs = 3;
    cfg.train.batch_size = 8;
    cfg.train.augment.time_drop_width = 2;
    cfg.train.augment.freq_drop_width = 2;
    cfg.out_dir = out_dir;
    return cfg;
}

std::size_t count_lines(const fs::path& p) {
    std::ifstream is(p);
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line))
        if (!line.empty()) ++n;
    return n;
}

}  // namespace

TEST_CASE("cmd_train writes exactly epochs metric records plus checkpoints") {
    TempDir dir("train_out");
    RunConfig cfg = quick_config(dir.path.string());
    std::ostringstream os;
    CHECK(cmd_train(cfg, os) == 0);
    CHECK(count_lines(dir.path / "metrics.jsonl") == cfg.train.epochs);
    CHECK(fs::exists(dir.path / "final.ckpt"));
    CHECK(fs::exists(dir.path / "best.ckpt"));
    CHECK(fs::exists(dir.path / "config.json"));
    CHECK(os.str().find("initial dev CCC") != std::string::npos);
}

TEST_CASE("a zero-epoch run reports only the initial metric") {
    TempDir dir("train0_out");
    RunConfig cfg = quick_config(dir.path.string());
    cfg.train.epochs = 0;
    std::ostringstream os;
    CHECK(cmd_train(cfg, os) == 0);
    CHECK(count_lines(dir.path / "metrics.jsonl") == 0);
    CHECK(os.str().find("initial dev CCC") != std::string::npos);
}

TEST_CASE("evaluating the just-written checkpoint reproduces the final dev metric") {
    TempDir dir("eval_out");
    RunConfig cfg = quick_config(dir.path.string());
    std::ostringstream os;
    REQUIRE(cmd_train(cfg, os) == 0);

    // last metrics record carries the run's final dev Ĉ at full precision
    std::ifstream is(dir.path / "metrics.jsonl");
    std::string line, last;
    while (std::getline(is, line))
        if (!line.empty()) last = line;
    const double final_dev = nlohmann::json::parse(last).at("dev_ccc").get<double>();

    Checkpoint ckpt = load_checkpoint((dir.path / "final.ckpt").string());
    const Dataset data = load_or_generate(cfg);
    CHECK(evaluate(ckpt.config, ckpt.params, data, Split::dev).mean_ccc == final_dev);
}

TEST_CASE("cmd_eval rejects an empty split as an input error") {
    TempDir dir("evalsplit_out");
    // a one-sample feature file has an empty training split (80/20 by index)
    RunConfig gen_cfg = quick_config(dir.path.string());
    gen_cfg.data.n_samples = 1;
    gen_cfg.data_path = (dir.path / "one.feat").string();
    std::ostringstream os;
    REQUIRE(cmd_gen_data(gen_cfg, os) == 0);

    RunConfig train_cfg = quick_config(dir.path.string());
    REQUIRE(cmd_train(train_cfg, os) == 0);

    RunConfig eval_cfg = train_cfg;
    eval_cfg.data_source = DataSource::file;
    eval_cfg.data_path = gen_cfg.data_path;
    CHECK_THROWS_AS(
        cmd_eval((dir.path / "final.ckpt").string(), eval_cfg, Split::train, os),
        std::invalid_argument);
}

TEST_CASE("gen-data output loads back bitwise") {
    TempDir dir("gendata_out");
    RunConfig cfg = quick_config(dir.path.string());
    cfg.data_path = (dir.path / "synth.feat").string();
    std::ostringstream os;
    REQUIRE(cmd_gen_data(cfg, os) == 0);

    const Dataset direct = gen_synth(cfg.data);
    const Dataset loaded = load_features(cfg.data_path, cfg.data.T);
    REQUIRE(loaded.size() == direct.size());
    for (std::size_t s = 0; s < direct.size(); ++s)
        CHECK((loaded.features[s].data() == direct.features[s].data()).all());
    CHECK(loaded.targets == direct.targets);
}

TEST_CASE("sweep reruns reproduce identical summaries") {
    TempDir dir1("sweep1"), dir2("sweep2");
    RunConfig cfg = quick_config(dir1.path.string());
    cfg.sweep_seeds = {1, 2};
    std::ostringstream os;
    REQUIRE(cmd_sweep(cfg, os) == 0);
    cfg.out_dir = dir2.path.string();
    REQUIRE(cmd_sweep(cfg, os) == 0);

    for (const char* name : {"summary.json", "summary.txt"}) {
        std::ifstream f1(dir1.path / name, std::ios::binary), f2(dir2.path / name, std::ios::binary);
        std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        CHECK(s1 == s2);
        CHECK_FALSE(s1.empty());
    }

    const auto summary = nlohmann::json::parse(
        [&] {
            std::ifstream is(dir1.path / "summary.json");
            std::stringstream ss;
            ss << is.rdbuf();
            return ss.str();
        }());
    CHECK(summary.at("runs").size() == 6);       // 3 modes x 2 seeds
    CHECK(summary.at("aggregate").size() == 3);
}

TEST_CASE("a corrupted loss backward fails the suite by name") {
    // negative control: swap the real ccc_loss check for one whose backward
    // rule is deliberately scaled
    std::vector<NamedCheck> checks = default_grad_checks();
    for (NamedCheck& check : checks) {
        if (check.name != "ccc_loss") continue;
        check.run = []() {
            Tensor pred({4, 2}, {0.1, 0.9, 0.4, 0.2, 0.8, 0.5, 0.3, 0.7});
            Tensor target({4, 2}, {0.2, 0.8, 0.5, 0.1, 0.9, 0.4, 0.2, 0.6});
            return finite_diff_check(
                [&](const std::vector<Tensor>& in) {
                    Tensor skewed = elementwise_custom(
                        in[0], [](double v) { return v; }, [](double) { return 1.5; });
                    return ccc_loss(skewed, in[1]);
                },
                {pred, target});
        };
    }
    std::ostringstream os;
    GradCheckReport report = run_grad_checks(checks, os);
    CHECK_FALSE(report.ok);
    bool named = false;
    for (const auto& line : report.lines)
        if (!line.passed) {
            CHECK(line.name == "ccc_loss");
            named = true;
        }
    CHECK(named);
    CHECK(os.str().find("FAIL") != std::string::npos);
    CHECK(os.str().find("ccc_loss") != std::string::npos);
}

TEST_CASE("a halted run exits nonzero through cmd_train") {
    TempDir dir("halt_out");
    RunConfig cfg = quick_config(dir.path.string());
    cfg.train.optim.lr = 1e80;  // overflow on the first steps
    std::ostringstream os;
    CHECK(cmd_train(cfg, os) == 1);
    CHECK(os.str().find("halted") != std::string::npos);
}

TEST_CASE("binary: config parse errors exit with code 2 and a line diagnostic") {
    fs::create_directories("cli_test_tmp");
    {
        std::ofstream os("cli_test_tmp/broken.json");
        os << "{\n  \"train\": { \"epochs\": }\n}\n";
    }
    std::string out;
    CHECK(run_binary("train --config cli_test_tmp/broken.json", &out) == 2);
    CHECK(out.find("line") != std::string::npos);

    CHECK(run_binary("train --set bogus.key=1", &out) == 2);
    CHECK(out.find("bogus.key") != std::string::npos);
}

TEST_CASE("binary: usage errors exit 2, help exits 0") {
    std::string out;
    CHECK(run_binary("no-such-command", &out) == 2);
    CHECK(run_binary("eval", &out) == 2);  // missing checkpoint argument
    CHECK(run_binary("--help", &out) == 0);
    CHECK(out.find("train") != std::string::npos);
}

TEST_CASE("binary: RRTN_SEED overrides the config seed") {
    TempDir dir("envseed_out");
    std::string out;
    const std::string args = "train --set train.epochs=0 --set data.n_samples=10"
                             " --set data.T=8 --set data.F=8 --set data.K=4"
                             " --set model.n_outputs=4 --set augment.time_drop_width=2"
                             " --set augment.freq_drop_width=2 --set paths.out=" +
                             dir.path.string();
    const int code = std::system(("RRTN_SEED=977 " + std::string(RRTN_CLI_PATH) + " " + args +
                                  " > cli_test_tmp/env.log 2>&1")
                                     .c_str());
    REQUIRE(code != -1);
    CHECK(WEXITSTATUS(code) == 0);
    std::ifstream is(dir.path / "config.json");
    std::stringstream ss;
    ss << is.rdbuf();
    const auto echoed = nlohmann::json::parse(ss.str());
    CHECK(echoed.at("train").at("seed").get<std::uint64_t>() == 977);
}

TEST_CASE("binary: gradcheck exits 0 and lists every check") {
    std::string out;
    CHECK(run_binary("gradcheck", &out) == 0);
    std::size_t lines = 0;
    std::istringstream is(out);
    std::string line;
    while (std::getline(is, line))
        if (line.find("max rel err") != std::string::npos) ++lines;
    CHECK(lines >= 10);
}
