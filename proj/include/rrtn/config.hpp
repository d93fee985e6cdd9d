#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrtn/datagen.hpp"
#include "rrtn/model.hpp"
#include "rrtn/trainer.hpp"

namespace rrtn {

/// Input/config problems that map to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DataSource { synth, file };

/// Full run configuration. Every key has a desk-scale default; unknown keys
/// in a config file are rejected.
struct RunConfig {
    ModelConfig model;         // input_t/input_f are filled from data.*
    TrainConfig train;
    SynthConfig data;
    DataSource data_source = DataSource::synth;
    std::string data_path;     // RRTN-FEAT file (source "file" / gen-data output)
    std::string out_dir = "out";
    std::vector<std::uint64_t> sweep_seeds = {1, 2, 3, 4, 5};
};

RunConfig default_run_config();

/// Parses a config file over the defaults. Parse errors report line and
/// column; unknown or ill-typed keys report the dotted key path.
RunConfig load_run_config(const std::string& path);

/// Applies one "section.key=value" override; the value uses JSON syntax
/// (bare words are taken as strings).
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Cross-field invariants (augment widths vs extents, K vs outputs, ...).
void validate_run_config(const RunConfig& cfg);

/// The configuration echoed back as a JSON document (defaults included).
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace rrtn
