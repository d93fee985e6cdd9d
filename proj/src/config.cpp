#include "rrtn/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace rrtn {

using nlohmann::json;

namespace {

Eigen::Vector3d vec3_from(const json& j, const std::string& key) {
    if (!j.is_array() || j.size() != 3)
        throw ConfigError("config key '" + key + "': expected an array of 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <typename T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "': unexpected value type");
    }
}

void apply_leaf(RunConfig& cfg, const std::string& key, const json& v) {
    // model.*
    if (key == "model.encoder_kind") {
        const auto s = get_as<std::string>(v, key);
        if (s == "mlp") cfg.model.encoder_kind = EncoderKind::mlp;
        else if (s == "tiny_cnn") cfg.model.encoder_kind = EncoderKind::tiny_cnn;
        else throw ConfigError("config key '" + key + "': unknown encoder '" + s + "'");
    } else if (key == "model.encoder_dims") {
        cfg.model.encoder_dims = get_as<std::vector<std::size_t>>(v, key);
    } else if (key == "model.rep_dim") {
        cfg.model.rep_dim = get_as<std::size_t>(v, key);
    } else if (key == "model.emb_dim") {
        cfg.model.emb_dim = get_as<std::size_t>(v, key);
    } else if (key == "model.n_outputs") {
        cfg.model.n_outputs = get_as<std::size_t>(v, key);
    } else if (key == "model.head_sigmoid") {
        cfg.model.head_sigmoid = get_as<bool>(v, key);
    }
    // train.*
    else if (key == "train.epochs") {
        cfg.train.epochs = get_as<std::size_t>(v, key);
    } else if (key == "train.batch_size") {
        cfg.train.batch_size = get_as<std::size_t>(v, key);
    } else if (key == "train.seed") {
        cfg.train.seed = get_as<std::uint64_t>(v, key);
    } else if (key == "train.mode") {
        try {
            cfg.train.mode = train_mode_from_name(get_as<std::string>(v, key));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config key 'train.mode': ") + e.what());
        }
    } else if (key == "train.fixed_weights") {
        cfg.train.fixed_weights = vec3_from(v, key);
    } else if (key == "train.bt_lambda") {
        cfg.train.bt_lambda = get_as<double>(v, key);
    } else if (key == "train.center_embeddings") {
        cfg.train.center_embeddings = get_as<bool>(v, key);
    } else if (key == "train.augment_enabled") {
        cfg.train.augment_enabled = get_as<bool>(v, key);
    } else if (key == "train.lr") {
        cfg.train.optim.lr = get_as<double>(v, key);
    } else if (key == "train.beta1") {
        cfg.train.optim.beta1 = get_as<double>(v, key);
    } else if (key == "train.beta2") {
        cfg.train.optim.beta2 = get_as<double>(v, key);
    } else if (key == "train.eps") {
        cfg.train.optim.eps = get_as<double>(v, key);
    } else if (key == "train.weight_decay") {
        cfg.train.optim.weight_decay = get_as<double>(v, key);
    }
    // ruwl.*
    else if (key == "ruwl.c_init") {
        cfg.train.ruwl_c_init = vec3_from(v, key);
    } else if (key == "ruwl.lambda_consts") {
        cfg.train.ruwl_lambda = vec3_from(v, key);
    } else if (key == "ruwl.lambda_position") {
        const auto s = get_as<std::string>(v, key);
        if (s == "numerator") cfg.train.ruwl_lambda_position = LambdaPosition::numerator;
        else if (s == "denominator") cfg.train.ruwl_lambda_position = LambdaPosition::denominator;
        else throw ConfigError("config key '" + key + "': expected numerator or denominator");
    } else if (key == "ruwl.restraint_target") {
        cfg.train.ruwl_restraint_target = get_as<double>(v, key);
    }
    // augment.*
    else if (key == "augment.time_drop_width") {
        cfg.train.augment.time_drop_width = get_as<std::size_t>(v, key);
    } else if (key == "augment.time_stripes") {
        cfg.train.augment.time_stripes = get_as<std::size_t>(v, key);
    } else if (key == "augment.freq_drop_width") {
        cfg.train.augment.freq_drop_width = get_as<std::size_t>(v, key);
    } else if (key == "augment.freq_stripes") {
        cfg.train.augment.freq_stripes = get_as<std::size_t>(v, key);
    } else if (key == "augment.mask_value") {
        cfg.train.augment.mask_value = get_as<double>(v, key);
    }
    // data.*
    else if (key == "data.source") {
        const auto s = get_as<std::string>(v, key);
        if (s == "synth") cfg.data_source = DataSource::synth;
        else if (s == "file") cfg.data_source = DataSource::file;
        else throw ConfigError("config key '" + key + "': expected synth or file");
    } else if (key == "data.path") {
        cfg.data_path = get_as<std::string>(v, key);
    } else if (key == "data.n_samples") {
        cfg.data.n_samples = get_as<std::size_t>(v, key);
    } else if (key == "data.T") {
        cfg.data.T = get_as<std::size_t>(v, key);
    } else if (key == "data.F") {
        cfg.data.F = get_as<std::size_t>(v, key);
    } else if (key == "data.K") {
        cfg.data.K = get_as<std::size_t>(v, key);
    } else if (key == "data.noise_sigma") {
        cfg.data.noise_sigma = get_as<double>(v, key);
    } else if (key == "data.seed") {
        cfg.data.seed = get_as<std::uint64_t>(v, key);
    }
    // paths.* / sweep.*
    else if (key == "paths.out") {
        cfg.out_dir = get_as<std::string>(v, key);
    } else if (key == "sweep.seeds") {
        cfg.sweep_seeds = get_as<std::vector<std::uint64_t>>(v, key);
        if (cfg.sweep_seeds.empty()) throw ConfigError("config key 'sweep.seeds': must not be empty");
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

void walk(RunConfig& cfg, const json& node, const std::string& prefix) {
    if (!node.is_object())
        throw ConfigError("config: expected an object at '" + (prefix.empty() ? "<root>" : prefix) + "'");
    for (const auto& [k, v] : node.items()) {
        const std::string key = prefix.empty() ? k : prefix + "." + k;
        if (v.is_object() && prefix.empty()) walk(cfg, v, key);
        else apply_leaf(cfg, key, v);
    }
}

std::pair<std::size_t, std::size_t> line_col_at(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace

RunConfig default_run_config() {
    RunConfig cfg;
    // Augment defaults scale the full-size stripe parameters down to the
    // desk-scale 32x16 feature geometry.
    cfg.train.augment.time_drop_width = 8;
    cfg.train.augment.time_stripes = 2;
    cfg.train.augment.freq_drop_width = 2;
    cfg.train.augment.freq_stripes = 2;
    cfg.train.augment.mask_value = 0.0;
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config file " + path + ": cannot open");
    std::stringstream buf;
    buf << is.rdbuf();
    const std::string text = buf.str();

    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_col_at(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ConfigError("config file " + path + ": parse error at line " + std::to_string(line) +
                          ", column " + std::to_string(col) + ": " + e.what());
    }

    RunConfig cfg = default_run_config();
    walk(cfg, doc, "");
    return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + assignment + "': expected key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json v;
    try {
        v = json::parse(raw);
    } catch (const json::parse_error&) {
        v = raw;  // bare word: treat as string
    }
    apply_leaf(cfg, key, v);
}

void validate_run_config(const RunConfig& cfg) {
    cfg.train.validate();
    if (cfg.data.n_samples == 0 || cfg.data.T == 0 || cfg.data.F == 0 || cfg.data.K == 0)
        throw ConfigError("config: data extents must be positive");
    if (cfg.data.K > cfg.data.F)
        throw ConfigError("config: data.K must be <= data.F (each target owns a band)");
    if (cfg.model.n_outputs != cfg.data.K)
        throw ConfigError("config: model.n_outputs (" + std::to_string(cfg.model.n_outputs) +
                          ") must equal data.K (" + std::to_string(cfg.data.K) + ")");
    if (cfg.train.augment_enabled) {
        if (cfg.train.augment.time_stripes > 0 && cfg.train.augment.time_drop_width >= cfg.data.T)
            throw ConfigError("config: augment.time_drop_width must be < data.T");
        if (cfg.train.augment.freq_stripes > 0 && cfg.train.augment.freq_drop_width >= cfg.data.F)
            throw ConfigError("config: augment.freq_drop_width must be < data.F");
    }
    if (cfg.data_source == DataSource::file && cfg.data_path.empty())
        throw ConfigError("config: data.source is 'file' but data.path is empty");

    ModelConfig probe = cfg.model;
    probe.input_t = cfg.data.T;
    probe.input_f = cfg.data.F;
    try {
        probe.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

std::string run_config_to_json(const RunConfig& cfg) {
    json j;
    j["model"]["encoder_kind"] = cfg.model.encoder_kind == EncoderKind::mlp ? "mlp" : "tiny_cnn";
    j["model"]["encoder_dims"] = cfg.model.encoder_dims;
    j["model"]["rep_dim"] = cfg.model.rep_dim;
    j["model"]["emb_dim"] = cfg.model.emb_dim;
    j["model"]["n_outputs"] = cfg.model.n_outputs;
    j["model"]["head_sigmoid"] = cfg.model.head_sigmoid;
    j["train"]["epochs"] = cfg.train.epochs;
    j["train"]["batch_size"] = cfg.train.batch_size;
    j["train"]["seed"] = cfg.train.seed;
    j["train"]["mode"] = train_mode_name(cfg.train.mode);
    j["train"]["fixed_weights"] = {cfg.train.fixed_weights[0], cfg.train.fixed_weights[1],
                                   cfg.train.fixed_weights[2]};
    j["train"]["bt_lambda"] = cfg.train.bt_lambda;
    j["train"]["center_embeddings"] = cfg.train.center_embeddings;
    j["train"]["augment_enabled"] = cfg.train.augment_enabled;
    j["train"]["lr"] = cfg.train.optim.lr;
    j["train"]["beta1"] = cfg.train.optim.beta1;
    j["train"]["beta2"] = cfg.train.optim.beta2;
    j["train"]["eps"] = cfg.train.optim.eps;
    j["train"]["weight_decay"] = cfg.train.optim.weight_decay;
    j["ruwl"]["c_init"] = {cfg.train.ruwl_c_init[0], cfg.train.ruwl_c_init[1],
                           cfg.train.ruwl_c_init[2]};
    j["ruwl"]["lambda_consts"] = {cfg.train.ruwl_lambda[0], cfg.train.ruwl_lambda[1],
                                  cfg.train.ruwl_lambda[2]};
    j["ruwl"]["lambda_position"] =
        cfg.train.ruwl_lambda_position == LambdaPosition::numerator ? "numerator" : "denominator";
    j["ruwl"]["restraint_target"] = cfg.train.ruwl_restraint_target;
    j["augment"]["time_drop_width"] = cfg.train.augment.time_drop_width;
    j["augment"]["time_stripes"] = cfg.train.augment.time_stripes;
    j["augment"]["freq_drop_width"] = cfg.train.augment.freq_drop_width;
    j["augment"]["freq_stripes"] = cfg.train.augment.freq_stripes;
    j["augment"]["mask_value"] = cfg.train.augment.mask_value;
    j["data"]["source"] = cfg.data_source == DataSource::synth ? "synth" : "file";
    j["data"]["path"] = cfg.data_path;
    j["data"]["n_samples"] = cfg.data.n_samples;
    j["data"]["T"] = cfg.data.T;
    j["data"]["F"] = cfg.data.F;
    j["data"]["K"] = cfg.data.K;
    j["data"]["noise_sigma"] = cfg.data.noise_sigma;
    j["data"]["seed"] = cfg.data.seed;
    j["paths"]["out"] = cfg.out_dir;
    j["sweep"]["seeds"] = cfg.sweep_seeds;
    return j.dump(2);
}

}  // namespace rrtn
