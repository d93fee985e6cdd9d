#include "rrtn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <stdexcept>

#include "rrtn/rng.hpp"

namespace rrtn {

namespace {

constexpr double kBookkeepingTol = 1e-10;
constexpr double kCClampAbs = 1e-6;

std::vector<std::size_t> split_indices(const Dataset& data, Split split) {
    std::vector<std::size_t> idx;
    const std::size_t lo = split == Split::train ? 0 : data.n_train;
    const std::size_t hi = split == Split::train ? data.n_train : data.size();
    for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
    return idx;
}

Tensor targets_tensor(const Dataset& data, const std::vector<std::size_t>& idx, std::size_t begin,
                      std::size_t count) {
    const auto k = static_cast<std::size_t>(data.targets.cols());
    Tensor t(Shape{count, k}, 0.0);
    Array& a = t.mut();
    for (std::size_t r = 0; r < count; ++r)
        for (std::size_t c = 0; c < k; ++c)
            a[static_cast<Eigen::Index>(r * k + c)] =
                data.targets(static_cast<Eigen::Index>(idx[begin + r]), static_cast<Eigen::Index>(c));
    return t;
}

void check_data_matches_model(const ModelConfig& cfg, const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("train/eval: dataset is empty");
    if (data.frames() != cfg.input_t || data.bins() != cfg.input_f)
        throw std::invalid_argument("dataset geometry " + std::to_string(data.frames()) + "x" +
                                    std::to_string(data.bins()) + " does not match model " +
                                    std::to_string(cfg.input_t) + "x" + std::to_string(cfg.input_f));
    if (static_cast<std::size_t>(data.targets.cols()) != cfg.n_outputs)
        throw std::invalid_argument("dataset has " + std::to_string(data.targets.cols()) +
                                    " targets but model predicts " + std::to_string(cfg.n_outputs));
}

}  // namespace

std::string train_mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::baseline: return "baseline";
        case TrainMode::rrtn_fixed: return "rrtn_fixed";
        case TrainMode::rrtn_ruwl: return "rrtn_ruwl";
    }
    return "?";
}

TrainMode train_mode_from_name(const std::string& name) {
    if (name == "baseline") return TrainMode::baseline;
    if (name == "rrtn_fixed") return TrainMode::rrtn_fixed;
    if (name == "rrtn_ruwl") return TrainMode::rrtn_ruwl;
    throw std::invalid_argument("unknown train mode '" + name + "'");
}

void TrainConfig::validate() const {
    if (batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2 (CCC needs pairs)");
    if ((ruwl_lambda.array() <= 0.0).any())
        throw std::invalid_argument("train: ruwl lambda constants must be positive");
    if (bt_lambda < 0.0) throw std::invalid_argument("train: bt_lambda must be >= 0");
    optim.validate();
}

std::string record_to_json(const EpochRecord& r) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    if (r.has_losses) {
        j["l_ccc"] = r.l_ccc;
        j["l_ccc_a"] = r.l_ccc_a;
        j["l_bt"] = r.l_bt;
        j["l_w"] = r.l_w;
        j["l_total"] = r.l_total;
    }
    j["c"] = {r.c[0], r.c[1], r.c[2]};
    j["effective_weights"] = {r.effective_weights[0], r.effective_weights[1], r.effective_weights[2]};
    j["dev_ccc"] = r.dev_ccc;
    return j.dump();
}

EvalResult evaluate(const ModelConfig& cfg, const ModelParams& params, const Dataset& data,
                    Split split) {
    check_data_matches_model(cfg, data);
    const std::vector<std::size_t> idx = split_indices(data, split);
    if (idx.empty()) throw std::invalid_argument("evaluate: split is empty");

    const std::size_t chunk = 64;
    Eigen::MatrixXd preds(static_cast<Eigen::Index>(idx.size()),
                          static_cast<Eigen::Index>(cfg.n_outputs));
    Eigen::MatrixXd targets(preds.rows(), preds.cols());

    for (std::size_t begin = 0; begin < idx.size(); begin += chunk) {
        const std::size_t count = std::min(chunk, idx.size() - begin);
        std::vector<Tensor> items;
        items.reserve(count);
        for (std::size_t r = 0; r < count; ++r) items.push_back(data.features[idx[begin + r]]);
        const Tensor out = predict(cfg, params, stack_batch(items));
        for (std::size_t r = 0; r < count; ++r)
            for (std::size_t c = 0; c < cfg.n_outputs; ++c) {
                preds(static_cast<Eigen::Index>(begin + r), static_cast<Eigen::Index>(c)) =
                    out[r * cfg.n_outputs + c];
                targets(static_cast<Eigen::Index>(begin + r), static_cast<Eigen::Index>(c)) =
                    data.targets(static_cast<Eigen::Index>(idx[begin + r]),
                                 static_cast<Eigen::Index>(c));
            }
    }

    EvalResult res;
    res.per_dim = per_dimension_ccc(preds, targets);
    res.mean_ccc = res.per_dim.mean();
    return res;
}

TrainReport train(const TrainConfig& cfg, const ModelConfig& model_cfg, const Dataset& data) {
    cfg.validate();
    model_cfg.validate();
    check_data_matches_model(model_cfg, data);
    if (data.n_train < 2) throw std::invalid_argument("train: training split needs >= 2 samples");

    TrainReport report;
    report.model_cfg = model_cfg;

    ModelParams params = init_params(model_cfg, cfg.seed);
    RuwlParams ruwl_params = make_ruwl_params(cfg.ruwl_c_init, cfg.ruwl_lambda,
                                              cfg.ruwl_lambda_position, cfg.ruwl_restraint_target);

    std::vector<Tensor> opt_params;
    for (auto& e : params.entries) opt_params.push_back(e.tensor);
    const std::size_t c_slot = opt_params.size();
    if (cfg.mode == TrainMode::rrtn_ruwl) opt_params.push_back(ruwl_params.c);
    AdamWState opt_state = make_adamw_state(opt_params);

    const auto effective_weights_now = [&]() -> Eigen::Vector3d {
        switch (cfg.mode) {
            case TrainMode::baseline: return {1.0, 0.0, 0.0};
            case TrainMode::rrtn_fixed: return cfg.fixed_weights;
            case TrainMode::rrtn_ruwl: {
                Eigen::Vector3d w;
                for (int t = 0; t < 3; ++t) {
                    const double c2 = std::max(ruwl_params.c[static_cast<std::size_t>(t)] *
                                                   ruwl_params.c[static_cast<std::size_t>(t)],
                                               kRuwlClampSq);
                    w[t] = cfg.ruwl_lambda_position == LambdaPosition::denominator
                               ? 1.0 / (cfg.ruwl_lambda[t] * c2)
                               : cfg.ruwl_lambda[t] / c2;
                }
                return w;
            }
        }
        return Eigen::Vector3d::Zero();
    };
    const auto c_now = [&]() -> Eigen::Vector3d {
        return {ruwl_params.c[0], ruwl_params.c[1], ruwl_params.c[2]};
    };

    const auto snapshot = [&]() {
        ModelParams copy;
        copy.entries = params.entries;  // storage is copy-on-write
        return copy;
    };

    // Initial record: dev metric of the freshly initialized model.
    {
        EpochRecord r;
        r.epoch = 0;
        r.c = c_now();
        r.effective_weights = effective_weights_now();
        r.dev_ccc = evaluate(model_cfg, params, data, Split::dev).mean_ccc;
        report.records.push_back(r);
        report.best_epoch = 0;
        report.best_dev_ccc = r.dev_ccc;
        report.final_dev_ccc = r.dev_ccc;
        report.best_params = snapshot();
    }

    std::vector<std::size_t> train_idx = split_indices(data, Split::train);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        RngEngine shuffle_rng(mix_seed(cfg.seed, epoch, 0x73687566ULL));
        std::vector<std::size_t> order = train_idx;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<std::size_t>(uniform_int(shuffle_rng, 0,
                                                                 static_cast<std::int64_t>(i) - 1))]);

        double sum_l_ccc = 0.0, sum_l_ccc_a = 0.0, sum_l_bt = 0.0, sum_l_w = 0.0, sum_l_total = 0.0;
        std::size_t batches = 0;

        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - begin);
            if (count < 2) break;  // a 1-sample tail has no CCC

            std::vector<Tensor> view_a, view_b;
            view_a.reserve(count);
            view_b.reserve(count);
            for (std::size_t r = 0; r < count; ++r) {
                const std::size_t sample = order[begin + r];
                view_a.push_back(data.features[sample]);
                if (cfg.augment_enabled) {
                    RngEngine item_rng(mix_seed(cfg.seed, epoch, sample));
                    view_b.push_back(spec_augment(data.features[sample], cfg.augment, item_rng));
                } else {
                    view_b.push_back(data.features[sample]);
                }
            }
            const Tensor x_a = stack_batch(view_a);
            const Tensor x_b = stack_batch(view_b);
            const Tensor targets = targets_tensor(data, order, begin, count);

            LossBundle bundle;
            GradientMap grads;
            {
                Tape tape;
                std::array<Tensor, 3> losses = rrtn_step_losses(model_cfg, params, x_a, x_b, targets,
                                                                cfg.bt_lambda, cfg.center_embeddings);
                Tensor total;
                switch (cfg.mode) {
                    case TrainMode::baseline:
                        total = losses[0];
                        bundle.l_ccc = losses[0].value();
                        bundle.l_ccc_a = losses[1].value();
                        bundle.l_bt = losses[2].value();
                        bundle.l_w = 0.0;
                        bundle.l_total = total.value();
                        bundle.effective_weights = {1.0, 0.0, 0.0};
                        break;
                    case TrainMode::rrtn_fixed:
                        total = weighted_sum_loss(losses, cfg.fixed_weights);
                        bundle.l_ccc = losses[0].value();
                        bundle.l_ccc_a = losses[1].value();
                        bundle.l_bt = losses[2].value();
                        bundle.l_w = 0.0;
                        bundle.l_total = total.value();
                        bundle.effective_weights = cfg.fixed_weights;
                        break;
                    case TrainMode::rrtn_ruwl:
                        bundle = combined_loss(losses, ruwl_params);
                        total = bundle.total;
                        break;
                }

                if (!std::isfinite(bundle.l_total)) {
                    report.halted = true;
                    report.halt_reason = "non-finite loss at epoch " + std::to_string(epoch);
                    break;
                }

                // Bookkeeping: the optimized scalar must match its parts.
                // Association mirrors the graph; tolerance scales with the
                // total (the denominator reading reaches magnitudes ~1e12).
                double recomputed = 0.0;
                switch (cfg.mode) {
                    case TrainMode::baseline: recomputed = bundle.l_ccc; break;
                    case TrainMode::rrtn_fixed: {
                        const double w01 = cfg.fixed_weights[0] * bundle.l_ccc +
                                           cfg.fixed_weights[1] * bundle.l_ccc_a;
                        recomputed = w01 + cfg.fixed_weights[2] * bundle.l_bt;
                        break;
                    }
                    case TrainMode::rrtn_ruwl: {
                        const double w01 = bundle.effective_weights[0] * bundle.l_ccc +
                                           bundle.effective_weights[1] * bundle.l_ccc_a;
                        const double weighted = w01 + bundle.effective_weights[2] * bundle.l_bt;
                        double reg = 0.0;
                        for (int t = 0; t < 3; ++t) {
                            const double c2 =
                                std::max(ruwl_params.c[static_cast<std::size_t>(t)] *
                                             ruwl_params.c[static_cast<std::size_t>(t)],
                                         kRuwlClampSq);
                            reg += std::log(1.0 + c2);
                        }
                        recomputed = (bundle.l_w + weighted) + reg;
                        break;
                    }
                }
                const double drift = std::abs(recomputed - bundle.l_total);
                if (drift > kBookkeepingTol * std::max(1.0, std::abs(bundle.l_total)))
                    throw std::logic_error("train: loss bookkeeping drifted by " +
                                           std::to_string(drift));

                grads = tape.backward(total);
            }

            if (cfg.mode == TrainMode::baseline) {
                // The BT path is unused; the projector must see zero gradient.
                for (std::size_t i = 0; i < params.entries.size(); ++i) {
                    if (!params.is_projector_param(i)) continue;
                    const Tensor& g = grads.at(params.entries[i].tensor);
                    if (g.data().abs().maxCoeff() != 0.0)
                        throw std::logic_error("train: projector received gradient in baseline mode");
                }
            }

            std::vector<Tensor> grad_list;
            grad_list.reserve(opt_params.size());
            bool finite = true;
            for (const Tensor& p : opt_params) {
                Tensor g = grads.contains(p) ? grads.at(p) : Tensor(p.shape(), 0.0);
                finite = finite && g.all_finite();
                grad_list.push_back(std::move(g));
            }
            if (!finite) {
                report.halted = true;
                report.halt_reason = "non-finite gradient at epoch " + std::to_string(epoch);
                break;
            }

            adamw_step(opt_params, grad_list, opt_state, cfg.optim);

            if (cfg.mode == TrainMode::rrtn_ruwl) {
                // Keep |c| at or above the clamp floor; below it the weight
                // gradient is flat and c could park at zero.
                Array& c = opt_params[c_slot].mut();
                for (Eigen::Index i = 0; i < c.size(); ++i)
                    if (std::abs(c[i]) < kCClampAbs) c[i] = c[i] < 0.0 ? -kCClampAbs : kCClampAbs;
                ruwl_params.c = opt_params[c_slot];
            }
            // Optimizer updates re-seat parameter storage (copy-on-write);
            // re-point the named entries at the updated tensors.
            for (std::size_t i = 0; i < params.entries.size(); ++i)
                params.entries[i].tensor = opt_params[i];

            sum_l_ccc += bundle.l_ccc;
            sum_l_ccc_a += bundle.l_ccc_a;
            sum_l_bt += bundle.l_bt;
            sum_l_w += bundle.l_w;
            sum_l_total += bundle.l_total;
            ++batches;
        }

        if (report.halted) {
            EpochRecord r;
            r.epoch = epoch;
            r.c = c_now();
            r.effective_weights = effective_weights_now();
            r.dev_ccc = report.final_dev_ccc;
            report.records.push_back(r);
            break;
        }

        EpochRecord r;
        r.epoch = epoch;
        r.has_losses = batches > 0;
        if (batches > 0) {
            const double inv = 1.0 / static_cast<double>(batches);
            r.l_ccc = sum_l_ccc * inv;
            r.l_ccc_a = sum_l_ccc_a * inv;
            r.l_bt = sum_l_bt * inv;
            r.l_w = sum_l_w * inv;
            r.l_total = sum_l_total * inv;
        }
        r.c = c_now();
        r.effective_weights = effective_weights_now();
        r.dev_ccc = evaluate(model_cfg, params, data, Split::dev).mean_ccc;
        report.records.push_back(r);

        report.final_dev_ccc = r.dev_ccc;
        if (r.dev_ccc > report.best_dev_ccc) {
            report.best_dev_ccc = r.dev_ccc;
            report.best_epoch = epoch;
            report.best_params = snapshot();
        }
    }

    report.final_params = snapshot();
    return report;
}

}  // namespace rrtn
