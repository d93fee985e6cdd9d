#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "rrtn/augment.hpp"
#include "rrtn/datagen.hpp"
#include "rrtn/losses.hpp"
#include "rrtn/model.hpp"
#include "rrtn/optimizer.hpp"

namespace rrtn {

enum class TrainMode { baseline, rrtn_fixed, rrtn_ruwl };

std::string train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(const std::string& name);

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    std::uint64_t seed = 1;
    TrainMode mode = TrainMode::rrtn_ruwl;
    Eigen::Vector3d fixed_weights{1.0, 1.0, 1e-4};

    Eigen::Vector3d ruwl_c_init{1.0, 1.0, 0.01};
    Eigen::Vector3d ruwl_lambda{1.0, 1.0, 1e-8};
    LambdaPosition ruwl_lambda_position = LambdaPosition::numerator;
    double ruwl_restraint_target = 2.0;

    double bt_lambda = 0.001;
    bool center_embeddings = true;
    bool augment_enabled = true;

    AdamWConfig optim;
    AugmentConfig augment;

    void validate() const;
};

/// One line of the JSON Lines metrics stream. The epoch-0 record carries the
/// initial dev metric only (has_losses == false).
struct EpochRecord {
    std::size_t epoch = 0;
    bool has_losses = false;
    double l_ccc = 0.0;
    double l_ccc_a = 0.0;
    double l_bt = 0.0;
    double l_w = 0.0;
    double l_total = 0.0;
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    Eigen::Vector3d effective_weights = Eigen::Vector3d::Zero();
    double dev_ccc = 0.0;
};

std::string record_to_json(const EpochRecord& r);

struct TrainReport {
    std::vector<EpochRecord> records;
    std::size_t best_epoch = 0;
    double best_dev_ccc = 0.0;
    double final_dev_ccc = 0.0;
    ModelConfig model_cfg;
    ModelParams final_params;
    ModelParams best_params;
    bool halted = false;
    std::string halt_reason;
};

/// Full fixed-epoch training run. View A is the untouched sample, view B its
/// masked copy; the dev metric always uses view-A predictions. Halts (report
/// flagged, not thrown) when a loss turns non-finite.
TrainReport train(const TrainConfig& cfg, const ModelConfig& model_cfg, const Dataset& data);

enum class Split { train, dev };

struct EvalResult {
    double mean_ccc = 0.0;
    Eigen::VectorXd per_dim;
};

/// Corpus-level CCC over the concatenated predictions of one split.
EvalResult evaluate(const ModelConfig& cfg, const ModelParams& params, const Dataset& data,
                    Split split);

}  // namespace rrtn
