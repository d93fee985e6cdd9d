#pragma once

#include <iosfwd>
#include <string>

#include "rrtn/config.hpp"
#include "rrtn/trainer.hpp"

namespace rrtn {

/// Improvement of a variant over its own baseline, as used in the sweep
/// summary: (value - baseline) / baseline.
double relative_local_gain(double value, double baseline);

/// The configured dataset: synthetic, or an RRTN-FEAT file cropped/padded to
/// the configured frame count.
Dataset load_or_generate(const RunConfig& cfg);

// Subcommand bodies. All return process exit codes: 0 success, 1 on a failed
// check or halted run, 2 is reserved for input errors (raised as ConfigError
// or std::invalid_argument and mapped by the caller).
int cmd_train(const RunConfig& cfg, std::ostream& os);
int cmd_eval(const std::string& checkpoint_path, const RunConfig& cfg, Split split,
             std::ostream& os);
int cmd_gradcheck(std::ostream& os);
int cmd_sweep(const RunConfig& cfg, std::ostream& os);
int cmd_gen_data(const RunConfig& cfg, std::ostream& os);

}  // namespace rrtn
