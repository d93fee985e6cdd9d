#include "rrtn/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace rrtn {

void AdamWConfig::validate() const {
    if (lr <= 0.0) throw std::invalid_argument("adamw: lr must be positive");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("adamw: betas must lie in (0, 1)");
    if (eps <= 0.0) throw std::invalid_argument("adamw: eps must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("adamw: weight decay must be >= 0");
}

AdamWState make_adamw_state(const std::vector<Tensor>& params) {
    AdamWState state;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const Tensor& p : params) {
        state.m.push_back(Array::Zero(static_cast<Eigen::Index>(p.size())));
        state.v.push_back(Array::Zero(static_cast<Eigen::Index>(p.size())));
    }
    return state;
}

void adamw_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamWState& state,
                const AdamWConfig& cfg) {
    cfg.validate();
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adamw: parameter/gradient/state count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size())
            throw std::invalid_argument("adamw: shape mismatch for parameter " + std::to_string(i));
        if (!grads[i].all_finite())
            throw std::runtime_error("adamw: non-finite gradient for parameter " +
                                     std::to_string(i) + "; step aborted");
    }

    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

    for (std::size_t i = 0; i < params.size(); ++i) {
        const Array& g = grads[i].data();
        Array& m = state.m[i];
        Array& v = state.v[i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.square();
        const Array m_hat = m / bc1;
        const Array v_hat = v / bc2;
        Array& theta = params[i].mut();
        theta -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps) + cfg.lr * cfg.weight_decay * theta;
    }
}

}  // namespace rrtn
