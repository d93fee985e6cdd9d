#include "rrtn/augment.hpp"

#include <stdexcept>

namespace rrtn {

Tensor spec_augment(const Tensor& x, const AugmentConfig& cfg, RngEngine& rng) {
    if (x.rank() != 3 || x.dim(0) != 1)
        throw std::invalid_argument("spec_augment: expected [1xTxF], got " + shape_str(x.shape()));
    const std::size_t t_len = x.dim(1);
    const std::size_t f_len = x.dim(2);
    if (cfg.time_stripes > 0 && cfg.time_drop_width >= t_len)
        throw std::invalid_argument("spec_augment: time drop width must be < T");
    if (cfg.freq_stripes > 0 && cfg.freq_drop_width >= f_len)
        throw std::invalid_argument("spec_augment: freq drop width must be < F");

    Tensor out = x;
    Array& a = out.mut();
    const auto at = [&](std::size_t t, std::size_t f) -> double& {
        return a[static_cast<Eigen::Index>(t * f_len + f)];
    };

    for (std::size_t s = 0; s < cfg.time_stripes; ++s) {
        const auto w = static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<std::int64_t>(cfg.time_drop_width)));
        const auto start = static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<std::int64_t>(t_len - w)));
        for (std::size_t t = start; t < start + w; ++t)
            for (std::size_t f = 0; f < f_len; ++f) at(t, f) = cfg.mask_value;
    }
    for (std::size_t s = 0; s < cfg.freq_stripes; ++s) {
        const auto w = static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<std::int64_t>(cfg.freq_drop_width)));
        const auto start = static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<std::int64_t>(f_len - w)));
        for (std::size_t f = start; f < start + w; ++f)
            for (std::size_t t = 0; t < t_len; ++t) at(t, f) = cfg.mask_value;
    }
    return out;
}

}  // namespace rrtn
