#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rrtn/tensor.hpp"

namespace rrtn {

enum class EncoderKind { mlp, tiny_cnn };

struct ModelConfig {
    EncoderKind encoder_kind = EncoderKind::mlp;
    /// mlp: hidden layer sizes. tiny_cnn: {channels, kernel (odd), pool}.
    std::vector<std::size_t> encoder_dims = {64, 64};
    std::size_t rep_dim = 64;
    std::size_t emb_dim = 64;
    std::size_t n_outputs = 10;
    bool head_sigmoid = false;
    // Input geometry; fixed at init so parameter shapes are known.
    std::size_t input_t = 32;
    std::size_t input_f = 16;

    void validate() const;
};

/// Named parameter tensors, shared by both twin passes. The vector order is
/// the checkpoint order.
struct ModelParams {
    struct Entry {
        std::string name;
        Tensor tensor;
    };
    std::vector<Entry> entries;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool is_projector_param(std::size_t i) const { return entries[i].name.rfind("projector.", 0) == 0; }
};

struct TwinOutput {
    Tensor rep_a, rep_b;    // B x rep_dim
    Tensor emb_a, emb_b;    // B x emb_dim
    Tensor pred_a, pred_b;  // B x K
};

/// Deterministic init: linear/conv weights ~ uniform(-1/sqrt(fan_in),
/// +1/sqrt(fan_in)), biases zero.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Applies the shared-weight encoder/head/projector to both views.
TwinOutput forward_twin(const ModelConfig& cfg, const ModelParams& params, const Tensor& x_a,
                        const Tensor& x_b);

/// Encoder + regression head only; the evaluation path.
Tensor predict(const ModelConfig& cfg, const ModelParams& params, const Tensor& x);

/// The three per-step objectives:
/// [ccc_loss(pred_a, targets), ccc_loss(pred_b, targets),
///  bt_loss(cross_correlation(emb_a, emb_b, center), bt_lambda)].
std::array<Tensor, 3> rrtn_step_losses(const ModelConfig& cfg, const ModelParams& params,
                                       const Tensor& x_a, const Tensor& x_b, const Tensor& targets,
                                       double bt_lambda, bool center_embeddings = true);

/// Stacks per-sample [1xTxF] tensors into one [Bx1xTxF] batch.
Tensor stack_batch(const std::vector<Tensor>& samples);

}  // namespace rrtn
