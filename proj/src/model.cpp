#include "rrtn/model.hpp"

#include <cmath>
#include <stdexcept>

#include "rrtn/losses.hpp"
#include "rrtn/rng.hpp"

namespace rrtn {

void ModelConfig::validate() const {
    if (rep_dim == 0 || emb_dim == 0 || n_outputs == 0 || input_t == 0 || input_f == 0)
        throw std::invalid_argument("model: all dimensions must be positive");
    if (encoder_kind == EncoderKind::mlp) {
        if (encoder_dims.empty())
            throw std::invalid_argument("model: mlp encoder needs at least one hidden size");
        for (std::size_t d : encoder_dims)
            if (d == 0) throw std::invalid_argument("model: hidden sizes must be positive");
    } else {
        if (encoder_dims.size() != 3)
            throw std::invalid_argument("model: tiny_cnn encoder_dims must be {channels, kernel, pool}");
        const auto [ch, k, pool] = std::tuple(encoder_dims[0], encoder_dims[1], encoder_dims[2]);
        if (ch == 0 || k == 0 || pool == 0)
            throw std::invalid_argument("model: tiny_cnn dims must be positive");
        if (k % 2 == 0) throw std::invalid_argument("model: tiny_cnn kernel must be odd");
        if (input_t / pool == 0 || input_f / pool == 0)
            throw std::invalid_argument("model: pool window larger than input");
    }
}

Tensor& ModelParams::at(const std::string& name) {
    for (auto& e : entries)
        if (e.name == name) return e.tensor;
    throw std::out_of_range("model: no parameter named " + name);
}

const Tensor& ModelParams::at(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return e.tensor;
    throw std::out_of_range("model: no parameter named " + name);
}

namespace {

std::size_t encoder_flat_dim(const ModelConfig& cfg) {
    if (cfg.encoder_kind == EncoderKind::mlp) return cfg.input_t * cfg.input_f;
    const std::size_t pool = cfg.encoder_dims[2];
    return cfg.encoder_dims[0] * (cfg.input_t / pool) * (cfg.input_f / pool);
}

Tensor init_linear_weight(std::size_t fan_in, std::size_t fan_out, RngEngine& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor w(Shape{fan_in, fan_out}, 0.0);
    Array& a = w.mut();
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = uniform(rng, -bound, bound);
    w.set_requires_grad(true);
    return w;
}

Tensor init_conv_kernel(std::size_t out_ch, std::size_t in_ch, std::size_t k, RngEngine& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * k * k));
    Tensor w(Shape{out_ch, in_ch, k, k}, 0.0);
    Array& a = w.mut();
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = uniform(rng, -bound, bound);
    w.set_requires_grad(true);
    return w;
}

Tensor init_bias(std::size_t n) {
    Tensor b(Shape{n}, 0.0);
    b.set_requires_grad(true);
    return b;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_rowvec(matmul(x, w), b);
}

/// Shared encoder: [Bx1xTxF] -> [B x rep_dim].
Tensor encode(const ModelConfig& cfg, const ModelParams& params, const Tensor& x) {
    const std::size_t batch = x.dim(0);
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg.input_t || x.dim(3) != cfg.input_f)
        throw std::invalid_argument("model: input " + shape_str(x.shape()) +
                                    " does not match configured geometry");

    if (cfg.encoder_kind == EncoderKind::mlp) {
        Tensor h = reshape(x, {batch, cfg.input_t * cfg.input_f});
        for (std::size_t l = 0; l < cfg.encoder_dims.size(); ++l) {
            const std::string p = "encoder.fc" + std::to_string(l);
            h = relu(linear(h, params.at(p + ".weight"), params.at(p + ".bias")));
        }
        return linear(h, params.at("encoder.out.weight"), params.at("encoder.out.bias"));
    }

    const std::size_t pool = cfg.encoder_dims[2];
    Tensor h = conv2d(x, params.at("encoder.conv.weight"));
    h = relu(h);
    h = avgpool2d(h, pool, pool);
    h = reshape(h, {batch, encoder_flat_dim(cfg)});
    return linear(h, params.at("encoder.out.weight"), params.at("encoder.out.bias"));
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    RngEngine rng(mix_seed(seed, 0x6d6f64656cULL));
    ModelParams params;
    auto push = [&](const std::string& name, Tensor t) {
        params.entries.push_back({name, std::move(t)});
    };

    if (cfg.encoder_kind == EncoderKind::mlp) {
        std::size_t in = cfg.input_t * cfg.input_f;
        for (std::size_t l = 0; l < cfg.encoder_dims.size(); ++l) {
            const std::size_t out = cfg.encoder_dims[l];
            const std::string p = "encoder.fc" + std::to_string(l);
            push(p + ".weight", init_linear_weight(in, out, rng));
            push(p + ".bias", init_bias(out));
            in = out;
        }
        push("encoder.out.weight", init_linear_weight(in, cfg.rep_dim, rng));
        push("encoder.out.bias", init_bias(cfg.rep_dim));
    } else {
        const std::size_t ch = cfg.encoder_dims[0];
        const std::size_t k = cfg.encoder_dims[1];
        push("encoder.conv.weight", init_conv_kernel(ch, 1, k, rng));
        push("encoder.out.weight", init_linear_weight(encoder_flat_dim(cfg), cfg.rep_dim, rng));
        push("encoder.out.bias", init_bias(cfg.rep_dim));
    }

    push("head.weight", init_linear_weight(cfg.rep_dim, cfg.n_outputs, rng));
    push("head.bias", init_bias(cfg.n_outputs));
    push("projector.weight", init_linear_weight(cfg.rep_dim, cfg.emb_dim, rng));
    push("projector.bias", init_bias(cfg.emb_dim));
    return params;
}

TwinOutput forward_twin(const ModelConfig& cfg, const ModelParams& params, const Tensor& x_a,
                        const Tensor& x_b) {
    if (x_a.shape() != x_b.shape())
        throw std::invalid_argument("forward_twin: views disagree, " + shape_str(x_a.shape()) +
                                    " vs " + shape_str(x_b.shape()));
    TwinOutput out;
    out.rep_a = encode(cfg, params, x_a);
    out.rep_b = encode(cfg, params, x_b);
    out.pred_a = linear(out.rep_a, params.at("head.weight"), params.at("head.bias"));
    out.pred_b = linear(out.rep_b, params.at("head.weight"), params.at("head.bias"));
    if (cfg.head_sigmoid) {
        out.pred_a = sigmoid(out.pred_a);
        out.pred_b = sigmoid(out.pred_b);
    }
    out.emb_a = linear(out.rep_a, params.at("projector.weight"), params.at("projector.bias"));
    out.emb_b = linear(out.rep_b, params.at("projector.weight"), params.at("projector.bias"));
    return out;
}

Tensor predict(const ModelConfig& cfg, const ModelParams& params, const Tensor& x) {
    Tensor rep = encode(cfg, params, x);
    Tensor pred = linear(rep, params.at("head.weight"), params.at("head.bias"));
    return cfg.head_sigmoid ? sigmoid(pred) : pred;
}

std::array<Tensor, 3> rrtn_step_losses(const ModelConfig& cfg, const ModelParams& params,
                                       const Tensor& x_a, const Tensor& x_b, const Tensor& targets,
                                       double bt_lambda, bool center_embeddings) {
    TwinOutput out = forward_twin(cfg, params, x_a, x_b);
    return {ccc_loss(out.pred_a, targets), ccc_loss(out.pred_b, targets),
            bt_loss(cross_correlation(out.emb_a, out.emb_b, center_embeddings), bt_lambda)};
}

Tensor stack_batch(const std::vector<Tensor>& samples) {
    if (samples.empty()) throw std::invalid_argument("stack_batch: empty batch");
    const std::size_t t = samples[0].dim(1);
    const std::size_t f = samples[0].dim(2);
    Tensor batch(Shape{samples.size(), 1, t, f}, 0.0);
    Array& dst = batch.mut();
    const auto stride = static_cast<Eigen::Index>(t * f);
    for (std::size_t s = 0; s < samples.size(); ++s) {
        if (samples[s].shape() != Shape{1, t, f})
            throw std::invalid_argument("stack_batch: inconsistent sample shapes");
        dst.segment(static_cast<Eigen::Index>(s) * stride, stride) = samples[s].data();
    }
    return batch;
}

}  // namespace rrtn
