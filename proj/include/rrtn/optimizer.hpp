#pragma once

#include <cstdint>
#include <vector>

#include "rrtn/tensor.hpp"

namespace rrtn {

struct AdamWConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    void validate() const;
};

/// Per-parameter moment buffers plus one shared step counter.
struct AdamWState {
    std::vector<Array> m;
    std::vector<Array> v;
    std::uint64_t t = 0;
};

AdamWState make_adamw_state(const std::vector<Tensor>& params);

/// One decoupled-weight-decay Adam step over all parameters:
///   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
///   theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta.
/// Throws std::runtime_error (step aborted, state untouched) on a
/// non-finite gradient.
void adamw_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamWState& state,
                const AdamWConfig& cfg);

}  // namespace rrtn
