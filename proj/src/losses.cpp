#include "rrtn/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace rrtn {

CccMoments ccc_moments(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("ccc: vectors must have equal length >= 2");
    CccMoments m;
    const double n = static_cast<double>(x.size());
    m.mu_x = x.mean();
    m.mu_y = y.mean();
    m.var_x = (x.array() - m.mu_x).square().sum() / n;
    m.var_y = (y.array() - m.mu_y).square().sum() / n;
    m.cov_xy = ((x.array() - m.mu_x) * (y.array() - m.mu_y)).sum() / n;
    return m;
}

double ccc_value(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const CccMoments m = ccc_moments(x, y);
    const double dm = m.mu_x - m.mu_y;
    return 2.0 * m.cov_xy / (m.var_x + m.var_y + dm * dm + kCccEps);
}

Tensor ccc(const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape() || x.rank() != 1)
        throw std::invalid_argument("ccc: expected two equal-length vectors, got " +
                                    shape_str(x.shape()) + " and " + shape_str(y.shape()));
    if (x.size() < 2) throw std::invalid_argument("ccc: need at least 2 samples");

    Tensor mu_x = mean(x);
    Tensor mu_y = mean(y);
    Tensor dx = sub(x, mu_x);
    Tensor dy = sub(y, mu_y);
    Tensor var_x = mean(square(dx));
    Tensor var_y = mean(square(dy));
    Tensor cov = mean(mul(dx, dy));
    Tensor denom = add(add(add(var_x, var_y), square(sub(mu_x, mu_y))), kCccEps);
    return div(mul(cov, 2.0), denom);
}

Tensor ccc_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape() || pred.rank() != 2)
        throw std::invalid_argument("ccc_loss: expected equal BxK matrices, got " +
                                    shape_str(pred.shape()) + " and " + shape_str(target.shape()));
    if (pred.dim(0) < 2) throw std::invalid_argument("ccc_loss: batch must have >= 2 samples");

    // Vectorized over the K output columns; population moments along axis 0.
    Tensor mu_p = mean(pred, 0);
    Tensor mu_t = mean(target, 0);
    Tensor dp = sub_rowvec(pred, mu_p);
    Tensor dt = sub_rowvec(target, mu_t);
    Tensor var_p = mean(square(dp), 0);
    Tensor var_t = mean(square(dt), 0);
    Tensor cov = mean(mul(dp, dt), 0);
    Tensor denom = add(add(add(var_p, var_t), square(sub(mu_p, mu_t))), kCccEps);
    Tensor ccc_k = div(mul(cov, 2.0), denom);
    return add(neg(mean(ccc_k)), 1.0);
}

Eigen::VectorXd per_dimension_ccc(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw std::invalid_argument("per_dimension_ccc: shape mismatch");
    Eigen::VectorXd out(pred.cols());
    for (Eigen::Index k = 0; k < pred.cols(); ++k)
        out[k] = ccc_value(pred.col(k), target.col(k));
    return out;
}

double mean_ccc_metric(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    return per_dimension_ccc(pred, target).mean();
}

Tensor cross_correlation(const Tensor& za, const Tensor& zb, bool center) {
    if (za.rank() != 2 || zb.rank() != 2 || za.shape() != zb.shape())
        throw std::invalid_argument("cross_correlation: expected two equal BxD batches, got " +
                                    shape_str(za.shape()) + " and " + shape_str(zb.shape()));
    if (za.dim(0) < 2) throw std::invalid_argument("cross_correlation: batch must have >= 2 samples");

    Tensor a = za;
    Tensor b = zb;
    if (center) {
        a = sub_rowvec(a, mean(a, 0));
        b = sub_rowvec(b, mean(b, 0));
    }
    const std::size_t d = a.dim(1);
    Tensor numerator = matmul(transpose(a), b);                // DxD
    Tensor norm_a = sqrt(sum(square(a), 0));                   // [D] column L2 norms
    Tensor norm_b = sqrt(sum(square(b), 0));
    Tensor norm_outer = matmul(reshape(norm_a, {d, 1}), reshape(norm_b, {1, d}));
    return div(numerator, add(norm_outer, kCrossCorrEps));
}

Tensor bt_loss(const Tensor& cross_corr, double lambda_offdiag) {
    if (cross_corr.rank() != 2 || cross_corr.dim(0) != cross_corr.dim(1))
        throw std::invalid_argument("bt_loss: expected a square matrix, got " +
                                    shape_str(cross_corr.shape()));
    if (lambda_offdiag < 0.0)
        throw std::invalid_argument("bt_loss: lambda_offdiag must be >= 0");

    const std::size_t d = cross_corr.dim(0);
    Tensor diag_mask(Shape{d, d}, 0.0);
    for (std::size_t i = 0; i < d; ++i) diag_mask.mut()[static_cast<Eigen::Index>(i * d + i)] = 1.0;
    Tensor offdiag_mask = Tensor(Shape{d, d}, Array(1.0 - diag_mask.data()));

    Tensor invariance = sum(mul(square(add(neg(cross_corr), 1.0)), diag_mask));
    Tensor redundancy = sum(mul(square(cross_corr), offdiag_mask));
    return add(invariance, mul(redundancy, lambda_offdiag));
}

Tensor weighted_sum_loss(const std::array<Tensor, 3>& losses, const Eigen::Vector3d& weights) {
    Tensor acc = mul(losses[0], weights[0]);
    acc = add(acc, mul(losses[1], weights[1]));
    acc = add(acc, mul(losses[2], weights[2]));
    return acc;
}

RuwlParams make_ruwl_params(const Eigen::Vector3d& c_init, const Eigen::Vector3d& lambda_consts,
                            LambdaPosition position, double restraint_target) {
    if ((lambda_consts.array() <= 0.0).any())
        throw std::invalid_argument("ruwl: lambda constants must be strictly positive");
    RuwlParams p;
    p.c = Tensor(Shape{3}, std::vector<double>{c_init[0], c_init[1], c_init[2]});
    p.c.set_requires_grad(true);
    p.lambda_consts = lambda_consts;
    p.lambda_position = position;
    p.restraint_target = restraint_target;
    return p;
}

Tensor ruwl(const RuwlParams& params) {
    Tensor magnitude_sum = sum(abs(params.c));
    return abs(add(neg(magnitude_sum), params.restraint_target));
}

LossBundle combined_loss(const std::array<Tensor, 3>& losses, const RuwlParams& params) {
    // w_t = numerator_t / clamp(c_t^2); both lambda readings reduce to a
    // constant numerator vector.
    Eigen::Vector3d numerator_consts;
    for (int t = 0; t < 3; ++t)
        numerator_consts[t] = params.lambda_position == LambdaPosition::denominator
                                  ? 1.0 / params.lambda_consts[t]
                                  : params.lambda_consts[t];

    Tensor c_sq = clamp_min(square(params.c), kRuwlClampSq);
    Tensor numer(Shape{3},
                 std::vector<double>{numerator_consts[0], numerator_consts[1], numerator_consts[2]});
    Tensor weights = div(numer, c_sq);

    Tensor restraint = ruwl(params);
    Tensor weighted = add(add(mul(losses[0], element(weights, 0)), mul(losses[1], element(weights, 1))),
                          mul(losses[2], element(weights, 2)));
    Tensor regularizer = sum(log(add(c_sq, 1.0)));
    Tensor total = add(add(restraint, weighted), regularizer);

    LossBundle bundle;
    bundle.l_ccc = losses[0].value();
    bundle.l_ccc_a = losses[1].value();
    bundle.l_bt = losses[2].value();
    bundle.l_w = restraint.value();
    bundle.l_total = total.value();
    bundle.effective_weights =
        Eigen::Vector3d(weights.data()[0], weights.data()[1], weights.data()[2]);
    bundle.total = total;
    return bundle;
}

}  // namespace rrtn
