#include "rrtn/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <ostream>
#include <sstream>

#include "rrtn/checkpoint.hpp"
#include "rrtn/gradcheck.hpp"

namespace rrtn {

namespace fs = std::filesystem;
using nlohmann::json;

double relative_local_gain(double value, double baseline) {
    return (value - baseline) / baseline;
}

Dataset load_or_generate(const RunConfig& cfg) {
    if (cfg.data_source == DataSource::synth) return gen_synth(cfg.data);
    try {
        return load_features(cfg.data_path, cfg.data.T);
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
}

namespace {

ModelConfig model_config_for(const RunConfig& cfg) {
    ModelConfig m = cfg.model;
    m.input_t = cfg.data.T;
    m.input_f = cfg.data.F;
    return m;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw ConfigError("cannot write " + path.string());
    os << text;
}

TrainReport run_one(const RunConfig& cfg, const Dataset& data) {
    return train(cfg.train, model_config_for(cfg), data);
}

}  // namespace

int cmd_train(const RunConfig& cfg, std::ostream& os) {
    validate_run_config(cfg);
    const Dataset data = load_or_generate(cfg);
    const TrainReport report = run_one(cfg, data);

    fs::create_directories(cfg.out_dir);
    // one line per completed epoch; the epoch-0 initial evaluation stays in
    // the run summary below
    std::string metrics;
    for (const EpochRecord& r : report.records)
        if (r.epoch > 0) metrics += record_to_json(r) + "\n";
    write_text(fs::path(cfg.out_dir) / "metrics.jsonl", metrics);
    write_text(fs::path(cfg.out_dir) / "config.json", run_config_to_json(cfg) + "\n");
    save_checkpoint((fs::path(cfg.out_dir) / "final.ckpt").string(), report.model_cfg,
                    report.final_params);
    save_checkpoint((fs::path(cfg.out_dir) / "best.ckpt").string(), report.model_cfg,
                    report.best_params);

    os << "mode " << train_mode_name(cfg.train.mode) << ", seed " << cfg.train.seed << ": "
       << report.records.size() - 1 << " epochs, initial dev CCC " << std::setprecision(6)
       << report.records.front().dev_ccc << ", final dev CCC " << report.final_dev_ccc
       << ", best dev CCC " << report.best_dev_ccc << " (epoch " << report.best_epoch << ")\n";
    if (report.halted) {
        os << "halted: " << report.halt_reason << "\n";
        return 1;
    }
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const RunConfig& cfg, Split split,
             std::ostream& os) {
    Checkpoint ckpt;
    try {
        ckpt = load_checkpoint(checkpoint_path);
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
    RunConfig data_cfg = cfg;
    data_cfg.data.K = ckpt.config.n_outputs;
    data_cfg.data.T = ckpt.config.input_t;
    data_cfg.data.F = ckpt.config.input_f;
    const Dataset data = load_or_generate(data_cfg);

    const EvalResult res = evaluate(ckpt.config, ckpt.params, data, split);
    os << "mean CCC " << std::setprecision(6) << res.mean_ccc << "\nper-dimension CCC:";
    for (Eigen::Index i = 0; i < res.per_dim.size(); ++i) os << " " << res.per_dim[i];
    os << "\n";
    return 0;
}

int cmd_gradcheck(std::ostream& os) {
    const GradCheckReport report = run_grad_checks(default_grad_checks(), os);
    os << (report.ok ? "all gradient checks passed" : "GRADIENT CHECK FAILURE") << " ("
       << report.lines.size() << " checks)\n";
    return report.ok ? 0 : 1;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& os) {
    validate_run_config(cfg);
    const Dataset data = load_or_generate(cfg);
    const TrainMode modes[] = {TrainMode::baseline, TrainMode::rrtn_fixed, TrainMode::rrtn_ruwl};

    struct Row {
        std::string mode;
        std::uint64_t seed;
        double best_dev;
        std::size_t best_epoch;
        double final_dev;
    };
    std::vector<Row> rows;
    std::map<std::string, std::vector<double>> by_mode;

    for (const TrainMode mode : modes) {
        for (const std::uint64_t seed : cfg.sweep_seeds) {
            RunConfig run_cfg = cfg;
            run_cfg.train.mode = mode;
            run_cfg.train.seed = seed;
            const TrainReport rep = run_one(run_cfg, data);
            if (rep.halted) {
                os << "halted (" << train_mode_name(mode) << ", seed " << seed
                   << "): " << rep.halt_reason << "\n";
                return 1;
            }
            rows.push_back({train_mode_name(mode), seed, rep.best_dev_ccc, rep.best_epoch,
                            rep.final_dev_ccc});
            by_mode[train_mode_name(mode)].push_back(rep.best_dev_ccc);
        }
    }

    const auto mean_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    const auto sd_of = [&](const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        const double m = mean_of(v);
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / static_cast<double>(v.size() - 1));
    };

    const double base_mean = mean_of(by_mode["baseline"]);

    json summary;
    summary["runs"] = json::array();
    for (const Row& r : rows)
        summary["runs"].push_back({{"mode", r.mode},
                                   {"seed", r.seed},
                                   {"best_dev_ccc", r.best_dev},
                                   {"best_epoch", r.best_epoch},
                                   {"final_dev_ccc", r.final_dev}});
    summary["aggregate"] = json::array();

    std::ostringstream table;
    table << std::left << std::setw(12) << "mode" << std::right << std::setw(12) << "mean"
          << std::setw(12) << "sd" << std::setw(14) << "local gain\n";
    for (const TrainMode mode : modes) {
        const std::string name = train_mode_name(mode);
        const double m = mean_of(by_mode[name]);
        const double sd = sd_of(by_mode[name]);
        json agg = {{"mode", name}, {"mean_best_dev_ccc", m}, {"sd_best_dev_ccc", sd}};
        table << std::left << std::setw(12) << name << std::right << std::fixed
              << std::setprecision(4) << std::setw(12) << m << std::setw(12) << sd;
        if (mode == TrainMode::baseline) {
            agg["relative_local_gain"] = nullptr;
            table << std::setw(13) << "-" << "\n";
        } else {
            const double gain = relative_local_gain(m, base_mean);
            agg["relative_local_gain"] = gain;
            table << std::setw(12) << std::setprecision(2) << gain * 100.0 << "%\n";
        }
        summary["aggregate"].push_back(agg);
    }

    fs::create_directories(cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "summary.json", summary.dump(2) + "\n");
    write_text(fs::path(cfg.out_dir) / "summary.txt", table.str());
    os << table.str();
    os << "summary written to " << (fs::path(cfg.out_dir) / "summary.json").string() << "\n";
    return 0;
}

int cmd_gen_data(const RunConfig& cfg, std::ostream& os) {
    if (cfg.data.K > cfg.data.F) throw ConfigError("gen-data: data.K must be <= data.F");
    const Dataset data = gen_synth(cfg.data);
    fs::path path = cfg.data_path.empty() ? fs::path(cfg.out_dir) / "synth.feat"
                                          : fs::path(cfg.data_path);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_features(path.string(), data);
    os << "wrote " << data.size() << " samples (" << data.frames() << "x" << data.bins() << ", "
       << data.targets.cols() << " targets) to " << path.string() << "\n";
    return 0;
}

}  // namespace rrtn
