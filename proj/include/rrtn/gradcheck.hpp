#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rrtn/tensor.hpp"

namespace rrtn {

/// One named finite-difference check. run() covers its own seeds and
/// reports the worst observed relative error.
struct NamedCheck {
    std::string name;
    double tolerance = 1e-4;
    std::function<GradCheckResult()> run;
};

/// The standard suite: every loss, the core ops, and the end-to-end model
/// paths, 3 seeds each.
std::vector<NamedCheck> default_grad_checks();

struct GradCheckReport {
    struct Line {
        std::string name;
        double max_rel_err = 0.0;
        double tolerance = 0.0;
        bool passed = false;
    };
    std::vector<Line> lines;
    bool ok = true;
};

/// Runs the checks, printing one line per check to os.
GradCheckReport run_grad_checks(const std::vector<NamedCheck>& checks, std::ostream& os);

}  // namespace rrtn
