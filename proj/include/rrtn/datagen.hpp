#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "rrtn/tensor.hpp"

namespace rrtn {

/// Synthetic spectrogram-like regression task. Each target dimension owns a
/// contiguous frequency band; band energy scales with the latent target.
struct SynthConfig {
    std::size_t n_samples = 512;
    std::size_t T = 32;  // frames
    std::size_t F = 16;  // frequency bins
    std::size_t K = 10;  // regression targets
    double noise_sigma = 0.05;
    std::uint64_t seed = 7;
};

/// Immutable feature/target collection with a deterministic train/dev split
/// (first 80% of indices train, remainder dev).
struct Dataset {
    std::vector<Tensor> features;  // each [1xTxF]
    Eigen::MatrixXd targets;       // NxK, values in [0,1]
    std::size_t n_train = 0;

    std::size_t size() const { return features.size(); }
    std::size_t n_dev() const { return size() - n_train; }
    std::size_t frames() const { return features.empty() ? 0 : features[0].dim(1); }
    std::size_t bins() const { return features.empty() ? 0 : features[0].dim(2); }
};

/// Frequency band [begin, end) owned by target k when F bins are split
/// across K targets.
std::pair<std::size_t, std::size_t> band_range(std::size_t k, std::size_t K, std::size_t F);

/// Deterministic synthetic dataset; all values are quantized through 32-bit
/// floats so that a save/load cycle through the feature file is lossless.
Dataset gen_synth(const SynthConfig& cfg);

/// Writes the RRTN-FEAT v1 interchange file:
/// one text header line "RRTN-FEAT v1 <N> <T> <F> <K>", then per sample
/// T*F little-endian float32 features (row-major) and K float32 targets.
void save_features(const std::string& path, const Dataset& data);

/// Reads an RRTN-FEAT file, widening to doubles. Samples are tail-cropped or
/// tail-zero-padded to target_t frames (0 keeps the stored frame count).
/// Malformed files raise std::runtime_error naming the byte offset.
Dataset load_features(const std::string& path, std::size_t target_t = 0);

/// Tail-crop / tail-pad one [1xTxF] sample to target_t frames.
Tensor crop_or_pad(const Tensor& sample, std::size_t target_t);

}  // namespace rrtn
