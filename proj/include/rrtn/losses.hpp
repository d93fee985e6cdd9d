#pragma once

#include <Eigen/Dense>
#include <array>

#include "rrtn/tensor.hpp"

namespace rrtn {

// Denominator epsilon of the concordance correlation coefficient; defines
// the degenerate both-constant case as agreement ~0 instead of 0/0.
constexpr double kCccEps = 1e-8;
// Epsilon added to the norm product in the cross-correlation matrix.
constexpr double kCrossCorrEps = 1e-12;
// |c| is clamped to >= 1e-6 (c^2 to >= 1e-12) before it divides a loss.
constexpr double kRuwlClampSq = 1e-12;

/// Population moments of one prediction/target pair.
struct CccMoments {
    double mu_x = 0.0;
    double mu_y = 0.0;
    double var_x = 0.0;
    double var_y = 0.0;
    double cov_xy = 0.0;
};

CccMoments ccc_moments(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Concordance correlation coefficient of two length-N vectors (N >= 2):
/// 2*cov / (var_x + var_y + (mu_x - mu_y)^2 + eps), population moments.
Tensor ccc(const Tensor& x, const Tensor& y);

/// Plain-double CCC, shared by the metric path.
double ccc_value(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// 1 - mean over columns of per-column CCC; pred and target are BxK, B >= 2.
Tensor ccc_loss(const Tensor& pred, const Tensor& target);

/// Per-column CCC over a full evaluation split (non-differentiable path).
Eigen::VectorXd per_dimension_ccc(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

/// Mean of per_dimension_ccc; the corpus-level reporting metric.
double mean_ccc_metric(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

/// DxD cross-correlation matrix between two BxD embedding batches:
/// C_ij = sum_b a_bi * b_bj / (||a_i|| * ||b_j|| + eps), with per-column
/// batch mean-centering first when center is set.
Tensor cross_correlation(const Tensor& za, const Tensor& zb, bool center = true);

/// Barlow Twins objective: sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2.
Tensor bt_loss(const Tensor& cross_corr, double lambda_offdiag);

/// Static three-way weighted sum w1*L1 + w2*L2 + w3*L3.
Tensor weighted_sum_loss(const std::array<Tensor, 3>& losses, const Eigen::Vector3d& weights);

enum class LambdaPosition {
    denominator,  // w_t = 1 / (lambda_t * c_t^2)
    numerator,    // w_t = lambda_t / c_t^2
};

/// Learnable loss-weight parameters and their fixed companions.
struct RuwlParams {
    Tensor c;  // 3-vector, requires_grad in joint training
    Eigen::Vector3d lambda_consts{1.0, 1.0, 1e-8};
    double restraint_target = 2.0;
    LambdaPosition lambda_position = LambdaPosition::numerator;
};

RuwlParams make_ruwl_params(const Eigen::Vector3d& c_init = {1.0, 1.0, 0.01},
                            const Eigen::Vector3d& lambda_consts = {1.0, 1.0, 1e-8},
                            LambdaPosition position = LambdaPosition::numerator,
                            double restraint_target = 2.0);

/// Restraint penalty | target - |c1| - |c2| - |c3| |; keeps the weight
/// magnitudes from collapsing toward zero during joint training.
Tensor ruwl(const RuwlParams& params);

/// The three scalar losses, restraint, combined objective, and the
/// multipliers applied to each loss this step.
struct LossBundle {
    double l_ccc = 0.0;
    double l_ccc_a = 0.0;
    double l_bt = 0.0;
    double l_w = 0.0;
    double l_total = 0.0;
    Eigen::Vector3d effective_weights = Eigen::Vector3d::Zero();
    Tensor total;  // differentiable combined objective
};

/// Dynamic combined objective:
/// L = ruwl + sum_t w_t * L_t + sum_t ln(1 + c_t^2), c^2 clamped.
LossBundle combined_loss(const std::array<Tensor, 3>& losses, const RuwlParams& params);

}  // namespace rrtn
