#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace rrtn {

using Array = Eigen::ArrayXd;
using Shape = std::vector<std::size_t>;

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatrixRM>;
using ConstMatMap = Eigen::Map<const MatrixRM>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

/// Dense row-major tensor of doubles. Handles are value-semantic: copies
/// share storage until one of them is mutated through mut(). A tensor may
/// carry a reference into the active differentiation tape (see Tape).
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::initializer_list<double> values);
    Tensor(Shape shape, std::vector<double> values);
    Tensor(Shape shape, Array values);

    static Tensor scalar(double v);
    static Tensor from_matrix(const Eigen::MatrixXd& m);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return static_cast<std::size_t>(data_->size()); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    const Array& data() const noexcept { return *data_; }
    /// Mutable access; clones the storage first if it is shared.
    Array& mut();

    double operator[](std::size_t i) const { return (*data_)[static_cast<Eigen::Index>(i)]; }
    /// Value of a single-element tensor.
    double value() const;
    /// Rank-2 contents as a column-major Eigen matrix (copy).
    Eigen::MatrixXd matrix() const;

    bool all_finite() const;

    Tensor& set_requires_grad(bool b);
    bool requires_grad() const noexcept { return requires_grad_; }

    /// Index of this tensor's node in the active tape, or -1.
    int node() const noexcept { return node_; }

    /// Storage identity; keys gradient lookups and leaf interning.
    const void* id() const noexcept { return data_.get(); }

private:
    friend class Tape;
    friend class OpBuilder;

    Shape shape_;
    std::shared_ptr<Array> data_;
    bool requires_grad_ = false;
    int node_ = -1;
    std::uint64_t tape_id_ = 0;
};

/// Gradients of one backward pass, keyed by leaf storage identity.
class GradientMap {
public:
    bool contains(const Tensor& leaf) const;
    /// Gradient tensor for a leaf; throws if the leaf is unknown to the tape.
    const Tensor& at(const Tensor& leaf) const;
    std::size_t size() const noexcept { return grads_.size(); }
    bool all_finite() const;

private:
    friend class Tape;
    std::unordered_map<const void*, Tensor> grads_;
};

/// Reverse-mode tape. Constructing a Tape makes it the active tape for the
/// current thread; operations on requires-grad tensors record nodes into it.
/// One tape per training step; destroyed (and freed) after backward.
class Tape {
public:
    using BackwardFn = std::function<void(const Array& grad_out, const std::vector<Array*>& parent_grads)>;

    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active() noexcept;

    /// Runs reverse accumulation from a scalar loss. Returns gradients for
    /// every requires-grad leaf that participated in the graph (zero-filled
    /// when no path reaches the loss).
    GradientMap backward(const Tensor& loss);

    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::uint64_t id() const noexcept { return id_; }

private:
    friend class OpBuilder;

    struct Node {
        std::vector<int> parents;  // -1 marks a non-differentiable slot
        BackwardFn backward;       // null for leaves
        Shape shape;
    };

    int node_of(const Tensor& t) const;
    int intern_leaf(const Tensor& t);
    int record(std::vector<int> parents, BackwardFn backward, Shape shape);

    std::vector<Node> nodes_;
    std::unordered_map<const void*, int> leaf_ids_;
    std::uint64_t id_;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, double b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, double b);

// ---- unary ----
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);  // input clamped to >= 1e-12
Tensor log(const Tensor& a);   // input clamped to >= 1e-12
Tensor abs(const Tensor& a);   // subgradient 0 at 0
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

/// Elementwise map with a caller-supplied derivative; extension point for
/// ops outside the core set (also lets tests inject a broken backward).
Tensor elementwise_custom(const Tensor& a, double (*f)(double), double (*df)(double));

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Adds / subtracts a length-C row vector to every row of an RxC matrix.
Tensor add_rowvec(const Tensor& m, const Tensor& v);
Tensor sub_rowvec(const Tensor& m, const Tensor& v);

// ---- reductions & shape ----
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor reshape(const Tensor& a, Shape shape);
/// Single element at a flat index, as a scalar tensor.
Tensor element(const Tensor& a, std::size_t i);

// ---- spatial ----
/// 2-D convolution, stride 1, zero same-padding, odd kernel extents.
/// input [B,C,H,W], kernel [O,C,kH,kW] -> [B,O,H,W].
Tensor conv2d(const Tensor& input, const Tensor& kernel);
/// Non-overlapping window means; trailing remainder rows/cols are dropped.
/// input [B,C,H,W] -> [B,C,H/h,W/w].
Tensor avgpool2d(const Tensor& input, std::size_t h, std::size_t w);

// ---- operator sugar ----
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator+(double a, const Tensor& b) { return add(b, a); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, b); }
inline Tensor operator-(double a, const Tensor& b) { return add(neg(b), a); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return mul(b, a); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, b); }

// ---- gradient verification ----
struct GradCheckResult {
    double max_rel_err = 0.0;
    bool all_finite = true;
    bool ok(double tol) const { return all_finite && max_rel_err < tol; }
};

using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Central-difference check of reverse-mode gradients for a scalar-valued
/// function of the given inputs. Reports max over all input coordinates of
/// |analytic - numeric| / max(1, |numeric|); all_finite goes false if any
/// evaluation produced a non-finite value.
GradCheckResult finite_diff_check(const TensorFn& f, std::vector<Tensor> inputs, double eps = 1e-5);

}  // namespace rrtn
