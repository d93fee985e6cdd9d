#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "rrtn/cli.hpp"

namespace {

rrtn::RunConfig build_config(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
    rrtn::RunConfig cfg = config_path.empty() ? rrtn::default_run_config()
                                              : rrtn::load_run_config(config_path);
    if (const char* env_seed = std::getenv("RRTN_SEED")) {
        try {
            cfg.train.seed = std::stoull(env_seed);
        } catch (const std::exception&) {
            throw rrtn::ConfigError(std::string("RRTN_SEED: not an integer: ") + env_seed);
        }
    }
    for (const std::string& o : overrides) rrtn::apply_override(cfg, o);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Redundancy-reduction twins trainer for multi-output regression"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string ckpt_path;
    std::string split_name = "dev";
    std::string gen_out;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file (defaults when omitted)");
        sub->add_option("--set", overrides, "override a config key, e.g. --set train.epochs=40")
            ->type_size(1);
    };

    CLI::App* train = app.add_subcommand("train", "train one model, write metrics + checkpoints");
    add_common(train);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a data split");
    eval->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--split", split_name, "train or dev (default dev)");
    add_common(eval);
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    CLI::App* sweep = app.add_subcommand("sweep", "seeds x modes comparison table");
    add_common(sweep);
    CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic RRTN-FEAT file");
    gen->add_option("--out", gen_out, "output path (default <paths.out>/synth.feat)");
    add_common(gen);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);  // prints the message / help text
        return rc == 0 ? 0 : 2;     // --help stays success; bad usage is an input error
    }

    try {
        if (gradcheck->parsed()) return rrtn::cmd_gradcheck(std::cout);

        rrtn::RunConfig cfg = build_config(config_path, overrides);
        if (train->parsed()) return rrtn::cmd_train(cfg, std::cout);
        if (eval->parsed()) {
            rrtn::Split split;
            if (split_name == "dev") split = rrtn::Split::dev;
            else if (split_name == "train") split = rrtn::Split::train;
            else throw rrtn::ConfigError("--split must be train or dev");
            return rrtn::cmd_eval(ckpt_path, cfg, split, std::cout);
        }
        if (sweep->parsed()) return rrtn::cmd_sweep(cfg, std::cout);
        if (gen->parsed()) {
            if (!gen_out.empty()) cfg.data_path = gen_out;
            return rrtn::cmd_gen_data(cfg, std::cout);
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::logic_error& e) {
        // internal consistency violation
        std::cerr << "check failure: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
