#pragma once

#include "rrtn/rng.hpp"
#include "rrtn/tensor.hpp"

namespace rrtn {

/// SpecAugment-style stripe masking. Widths are maxima; each stripe draws
/// its width uniformly from [0, max] inclusive.
struct AugmentConfig {
    std::size_t time_drop_width = 64;
    std::size_t time_stripes = 2;
    std::size_t freq_drop_width = 8;
    std::size_t freq_stripes = 2;
    double mask_value = 0.0;
};

/// Masks random time-frame and frequency-bin stripes of a [1xTxF] sample.
/// The input is copied, never modified. Identical (input, cfg, rng state)
/// always produces identical output.
Tensor spec_augment(const Tensor& x, const AugmentConfig& cfg, RngEngine& rng);

}  // namespace rrtn
