#include "rrtn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rrtn {

namespace {

constexpr double kEpsClamp = 1e-12;  // floor for sqrt/log arguments

thread_local Tape* g_active_tape = nullptr;
std::uint64_t g_next_tape_id = 1;

[[noreturn]] void dim_error(const std::string& msg) {
    throw std::invalid_argument(msg);
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// ---- Tensor ----

Tensor::Tensor() : shape_{}, data_(std::make_shared<Array>(Array::Zero(1))) {}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)),
      data_(std::make_shared<Array>(
          Array::Constant(static_cast<Eigen::Index>(shape_size(shape_)), fill))) {}

Tensor::Tensor(Shape shape, std::initializer_list<double> values)
    : Tensor(std::move(shape), std::vector<double>(values)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (values.size() != shape_size(shape_))
        dim_error("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape_));
    data_ = std::make_shared<Array>(
        Eigen::Map<const Array>(values.data(), static_cast<Eigen::Index>(values.size())));
}

Tensor::Tensor(Shape shape, Array values) : shape_(std::move(shape)) {
    if (static_cast<std::size_t>(values.size()) != shape_size(shape_))
        dim_error("tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape_));
    data_ = std::make_shared<Array>(std::move(values));
}

Tensor Tensor::scalar(double v) {
    return Tensor(Shape{}, Array::Constant(1, v));
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
    const auto rows = static_cast<std::size_t>(m.rows());
    const auto cols = static_cast<std::size_t>(m.cols());
    Array flat(m.size());
    MatMap(flat.data(), m.rows(), m.cols()) = m;
    return Tensor(Shape{rows, cols}, std::move(flat));
}

Array& Tensor::mut() {
    if (data_.use_count() > 1) data_ = std::make_shared<Array>(*data_);
    node_ = -1;
    tape_id_ = 0;
    return *data_;
}

double Tensor::value() const {
    if (size() != 1)
        dim_error("value(): tensor " + shape_str(shape_) + " is not a single element");
    return (*data_)[0];
}

Eigen::MatrixXd Tensor::matrix() const {
    if (rank() != 2) dim_error("matrix(): tensor " + shape_str(shape_) + " is not rank-2");
    return ConstMatMap(data_->data(), static_cast<Eigen::Index>(shape_[0]),
                       static_cast<Eigen::Index>(shape_[1]));
}

bool Tensor::all_finite() const {
    return data_->isFinite().all();
}

Tensor& Tensor::set_requires_grad(bool b) {
    requires_grad_ = b;
    return *this;
}

// ---- GradientMap ----

bool GradientMap::contains(const Tensor& leaf) const {
    return grads_.count(leaf.id()) != 0;
}

const Tensor& GradientMap::at(const Tensor& leaf) const {
    auto it = grads_.find(leaf.id());
    if (it == grads_.end())
        throw std::out_of_range("gradient map: tensor did not participate in the graph as a leaf");
    return it->second;
}

bool GradientMap::all_finite() const {
    for (const auto& [k, g] : grads_)
        if (!g.all_finite()) return false;
    return true;
}

// ---- Tape ----

Tape::Tape() : id_(g_next_tape_id++) {
    if (g_active_tape != nullptr)
        throw std::logic_error("tape: a tape is already active on this thread");
    g_active_tape = this;
}

Tape::~Tape() {
    g_active_tape = nullptr;
}

Tape* Tape::active() noexcept {
    return g_active_tape;
}

int Tape::node_of(const Tensor& t) const {
    if (t.node_ >= 0 && t.tape_id_ == id_) return t.node_;
    auto it = leaf_ids_.find(t.id());
    return it == leaf_ids_.end() ? -1 : it->second;
}

int Tape::intern_leaf(const Tensor& t) {
    auto it = leaf_ids_.find(t.id());
    if (it != leaf_ids_.end()) return it->second;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{{}, nullptr, t.shape()});
    leaf_ids_.emplace(t.id(), id);
    return id;
}

int Tape::record(std::vector<int> parents, BackwardFn backward, Shape shape) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{std::move(parents), std::move(backward), std::move(shape)});
    return id;
}

GradientMap Tape::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw std::invalid_argument("backward: loss must be a single element, got " + shape_str(loss.shape()));

    GradientMap out;
    std::vector<Array> grads(nodes_.size());

    int seed = node_of(loss);
    if (seed < 0) {
        // A bare requires-grad leaf that never entered an op: d(loss)/d(loss) = 1.
        if (loss.requires_grad())
            out.grads_.emplace(loss.id(), Tensor(loss.shape(), 1.0));
        return out;
    }
    grads[static_cast<std::size_t>(seed)] = Array::Ones(1);

    std::vector<Array*> parent_ptrs;
    for (int i = seed; i >= 0; --i) {
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        if (!node.backward || grads[static_cast<std::size_t>(i)].size() == 0) continue;
        parent_ptrs.clear();
        for (int p : node.parents) {
            if (p < 0) {
                parent_ptrs.push_back(nullptr);
                continue;
            }
            Array& pg = grads[static_cast<std::size_t>(p)];
            if (pg.size() == 0)
                pg = Array::Zero(static_cast<Eigen::Index>(shape_size(nodes_[static_cast<std::size_t>(p)].shape)));
            parent_ptrs.push_back(&pg);
        }
        node.backward(grads[static_cast<std::size_t>(i)], parent_ptrs);
    }

    for (const auto& [ptr, id] : leaf_ids_) {
        const Node& leaf = nodes_[static_cast<std::size_t>(id)];
        Array& g = grads[static_cast<std::size_t>(id)];
        if (g.size() == 0)
            g = Array::Zero(static_cast<Eigen::Index>(shape_size(leaf.shape)));
        out.grads_.emplace(ptr, Tensor(leaf.shape, std::move(g)));
    }
    return out;
}

// ---- op recording ----

/// Builds an op result and records it on the active tape when any input
/// requires a gradient. Parent slots follow input order; inputs that do not
/// require gradients occupy a -1 slot and receive a null grad pointer.
class OpBuilder {
public:
    static Tensor make(Shape shape, Array values, std::initializer_list<const Tensor*> inputs,
                       Tape::BackwardFn backward) {
        Tensor result(std::move(shape), std::move(values));
        Tape* tape = Tape::active();
        if (tape == nullptr) return result;
        bool any_grad = false;
        for (const Tensor* in : inputs) any_grad = any_grad || in->requires_grad();
        if (!any_grad) return result;

        std::vector<int> parents;
        parents.reserve(inputs.size());
        for (const Tensor* in : inputs) {
            if (!in->requires_grad()) {
                parents.push_back(-1);
                continue;
            }
            int nid = tape->node_of(*in);
            parents.push_back(nid >= 0 ? nid : tape->intern_leaf(*in));
        }
        result.node_ = tape->record(std::move(parents), std::move(backward), result.shape());
        result.tape_id_ = tape->id();
        result.requires_grad_ = true;
        return result;
    }
};

namespace {

Tensor make_op(Shape shape, Array values, std::initializer_list<const Tensor*> inputs,
               Tape::BackwardFn backward) {
    return OpBuilder::make(std::move(shape), std::move(values), inputs, std::move(backward));
}

void check_same_or_scalar(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape() || b.size() == 1) return;
    dim_error(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
              " do not match (only scalar broadcast is supported)");
}

}  // namespace

// ---- elementwise binary ----

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_or_scalar("add", a, b);
    const bool bs = b.size() == 1 && a.size() != 1;
    Array out = bs ? Array(a.data() + b.data()[0]) : Array(a.data() + b.data());
    return make_op(a.shape(), std::move(out), {&a, &b},
                   [bs](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += g;
                       if (pg[1]) {
                           if (bs) (*pg[1])[0] += g.sum();
                           else *pg[1] += g;
                       }
                   });
}

Tensor add(const Tensor& a, double b) {
    return make_op(a.shape(), a.data() + b, {&a},
                   [](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += g;
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_or_scalar("sub", a, b);
    const bool bs = b.size() == 1 && a.size() != 1;
    Array out = bs ? Array(a.data() - b.data()[0]) : Array(a.data() - b.data());
    return make_op(a.shape(), std::move(out), {&a, &b},
                   [bs](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += g;
                       if (pg[1]) {
                           if (bs) (*pg[1])[0] -= g.sum();
                           else *pg[1] -= g;
                       }
                   });
}

Tensor sub(const Tensor& a, double b) {
    return add(a, -b);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_or_scalar("mul", a, b);
    const bool bs = b.size() == 1 && a.size() != 1;
    Array out = bs ? Array(a.data() * b.data()[0]) : Array(a.data() * b.data());
    Tensor av = a, bv = b;  // keep forward values alive for backward
    return make_op(a.shape(), std::move(out), {&a, &b},
                   [bs, av, bv](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) {
                           if (bs) *pg[0] += g * bv.data()[0];
                           else *pg[0] += g * bv.data();
                       }
                       if (pg[1]) {
                           if (bs) (*pg[1])[0] += (g * av.data()).sum();
                           else *pg[1] += g * av.data();
                       }
                   });
}

Tensor mul(const Tensor& a, double b) {
    return make_op(a.shape(), a.data() * b, {&a},
                   [b](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += g * b;
                   });
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_or_scalar("div", a, b);
    const bool bs = b.size() == 1 && a.size() != 1;
    Array out = bs ? Array(a.data() / b.data()[0]) : Array(a.data() / b.data());
    Tensor av = a, bv = b;
    return make_op(a.shape(), std::move(out), {&a, &b},
                   [bs, av, bv](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) {
                           if (bs) *pg[0] += g / bv.data()[0];
                           else *pg[0] += g / bv.data();
                       }
                       if (pg[1]) {
                           if (bs) {
                               const double d = bv.data()[0];
                               (*pg[1])[0] += (-(g * av.data()).sum()) / (d * d);
                           } else {
                               *pg[1] += -g * av.data() / bv.data().square();
                           }
                       }
                   });
}

Tensor div(const Tensor& a, double b) {
    return mul(a, 1.0 / b);
}

// ---- unary ----

Tensor neg(const Tensor& a) {
    return make_op(a.shape(), -a.data(), {&a},
                   [](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] -= g;
                   });
}

Tensor square(const Tensor& a) {
    Tensor av = a;
    return make_op(a.shape(), a.data().square(), {&a},
                   [av](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += 2.0 * av.data() * g;
                   });
}

Tensor sqrt(const Tensor& a) {
    Tensor av = a;
    Array out = a.data().max(kEpsClamp).sqrt();
    Array ov = out;
    return make_op(a.shape(), std::move(out), {&a},
                   [av, ov](const Array& g, const std::vector<Array*>& pg) {
                       // zero below the clamp: d sqrt(max(x, eps)) / dx
                       if (pg[0])
                           *pg[0] += (av.data() > kEpsClamp).select(g * 0.5 / ov, 0.0);
                   });
}

Tensor log(const Tensor& a) {
    Tensor av = a;
    return make_op(a.shape(), a.data().max(kEpsClamp).log(), {&a},
                   [av](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0])
                           *pg[0] += (av.data() > kEpsClamp).select(g / av.data(), 0.0);
                   });
}

Tensor abs(const Tensor& a) {
    Tensor av = a;
    return make_op(a.shape(), a.data().abs(), {&a},
                   [av](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += g * av.data().sign();
                   });
}

Tensor relu(const Tensor& a) {
    Tensor av = a;
    return make_op(a.shape(), a.data().max(0.0), {&a},
                   [av](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += (av.data() > 0.0).select(g, 0.0);
                   });
}

Tensor sigmoid(const Tensor& a) {
    Array out(a.data().size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double x = a.data()[i];
        out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    Array ov = out;
    return make_op(a.shape(), std::move(out), {&a},
                   [ov](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += g * ov * (1.0 - ov);
                   });
}

Tensor clamp_min(const Tensor& a, double lo) {
    Tensor av = a;
    return make_op(a.shape(), a.data().max(lo), {&a},
                   [av, lo](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += (av.data() > lo).select(g, 0.0);
                   });
}

Tensor elementwise_custom(const Tensor& a, double (*f)(double), double (*df)(double)) {
    Tensor av = a;
    Array out = a.data().unaryExpr(f);
    return make_op(a.shape(), std::move(out), {&a},
                   [av, df](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += g * av.data().unaryExpr(df);
                   });
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        dim_error("matmul: expected rank-2 operands, got " + shape_str(a.shape()) + " and " +
                  shape_str(b.shape()));
    const auto m = static_cast<Eigen::Index>(a.dim(0));
    const auto k = static_cast<Eigen::Index>(a.dim(1));
    const auto n = static_cast<Eigen::Index>(b.dim(1));
    if (a.dim(1) != b.dim(0))
        dim_error("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                  shape_str(b.shape()));

    Array out(m * n);
    MatMap(out.data(), m, n) = ConstMatMap(a.data().data(), m, k) * ConstMatMap(b.data().data(), k, n);

    Tensor av = a, bv = b;
    return make_op(Shape{a.dim(0), b.dim(1)}, std::move(out), {&a, &b},
                   [av, bv, m, k, n](const Array& g, const std::vector<Array*>& pg) {
                       ConstMatMap G(g.data(), m, n);
                       if (pg[0])
                           MatMap(pg[0]->data(), m, k) +=
                               G * ConstMatMap(bv.data().data(), k, n).transpose();
                       if (pg[1])
                           MatMap(pg[1]->data(), k, n) +=
                               ConstMatMap(av.data().data(), m, k).transpose() * G;
                   });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) dim_error("transpose: expected rank-2, got " + shape_str(a.shape()));
    const auto r = static_cast<Eigen::Index>(a.dim(0));
    const auto c = static_cast<Eigen::Index>(a.dim(1));
    Array out(a.data().size());
    MatMap(out.data(), c, r) = ConstMatMap(a.data().data(), r, c).transpose();
    return make_op(Shape{a.dim(1), a.dim(0)}, std::move(out), {&a},
                   [r, c](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0])
                           MatMap(pg[0]->data(), r, c) += ConstMatMap(g.data(), c, r).transpose();
                   });
}

namespace {

void check_rowvec(const char* op, const Tensor& m, const Tensor& v) {
    if (m.rank() != 2 || v.rank() != 1 || m.dim(1) != v.dim(0))
        dim_error(std::string(op) + ": expected [RxC] and [C], got " + shape_str(m.shape()) +
                  " and " + shape_str(v.shape()));
}

}  // namespace

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    check_rowvec("add_rowvec", m, v);
    const auto r = static_cast<Eigen::Index>(m.dim(0));
    const auto c = static_cast<Eigen::Index>(m.dim(1));
    Array out(m.data().size());
    MatMap(out.data(), r, c) =
        ConstMatMap(m.data().data(), r, c).rowwise() + v.data().matrix().transpose();
    return make_op(m.shape(), std::move(out), {&m, &v},
                   [r, c](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += g;
                       if (pg[1])
                           pg[1]->matrix() += ConstMatMap(g.data(), r, c).colwise().sum().transpose();
                   });
}

Tensor sub_rowvec(const Tensor& m, const Tensor& v) {
    check_rowvec("sub_rowvec", m, v);
    const auto r = static_cast<Eigen::Index>(m.dim(0));
    const auto c = static_cast<Eigen::Index>(m.dim(1));
    Array out(m.data().size());
    MatMap(out.data(), r, c) =
        ConstMatMap(m.data().data(), r, c).rowwise() - v.data().matrix().transpose();
    return make_op(m.shape(), std::move(out), {&m, &v},
                   [r, c](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += g;
                       if (pg[1])
                           pg[1]->matrix() -= ConstMatMap(g.data(), r, c).colwise().sum().transpose();
                   });
}

// ---- reductions & shape ----

Tensor sum(const Tensor& a) {
    return make_op(Shape{}, Array::Constant(1, a.data().sum()), {&a},
                   [](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += g[0];
                   });
}

Tensor mean(const Tensor& a) {
    const double inv_n = 1.0 / static_cast<double>(a.size());
    return make_op(Shape{}, Array::Constant(1, a.data().sum() * inv_n), {&a},
                   [inv_n](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += g[0] * inv_n;
                   });
}

namespace {

Tensor axis_reduce(const Tensor& a, std::size_t axis, bool take_mean) {
    if (axis >= a.rank())
        dim_error("reduce: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape()));
    const Shape& s = a.shape();
    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) out_shape.push_back(s[i]);

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t n = s[axis];
    const double scale = take_mean ? 1.0 / static_cast<double>(n) : 1.0;

    Array out = Array::Zero(static_cast<Eigen::Index>(outer * inner));
    const Array& in = a.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < inner; ++i)
                out[static_cast<Eigen::Index>(o * inner + i)] +=
                    in[static_cast<Eigen::Index>((o * n + k) * inner + i)];
    if (take_mean) out *= scale;

    return OpBuilder::make(
        std::move(out_shape), std::move(out), {&a},
        [outer, inner, n, scale](const Array& g, const std::vector<Array*>& pg) {
            if (!pg[0]) return;
            Array& dst = *pg[0];
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t k = 0; k < n; ++k)
                    for (std::size_t i = 0; i < inner; ++i)
                        dst[static_cast<Eigen::Index>((o * n + k) * inner + i)] +=
                            g[static_cast<Eigen::Index>(o * inner + i)] * scale;
        });
}

}  // namespace

Tensor sum(const Tensor& a, std::size_t axis) {
    return axis_reduce(a, axis, false);
}

Tensor mean(const Tensor& a, std::size_t axis) {
    return axis_reduce(a, axis, true);
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size())
        dim_error("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    return make_op(std::move(shape), a.data(), {&a},
                   [](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) *pg[0] += g;
                   });
}

Tensor element(const Tensor& a, std::size_t i) {
    if (i >= a.size())
        dim_error("element: index " + std::to_string(i) + " out of range for " + shape_str(a.shape()));
    return make_op(Shape{}, Array::Constant(1, a.data()[static_cast<Eigen::Index>(i)]), {&a},
                   [i](const Array& g, const std::vector<Array*>& pg) {
                       if (pg[0]) (*pg[0])[static_cast<Eigen::Index>(i)] += g[0];
                   });
}

// ---- spatial ----

Tensor conv2d(const Tensor& input, const Tensor& kernel) {
    if (input.rank() != 4 || kernel.rank() != 4)
        dim_error("conv2d: expected [BxCxHxW] input and [OxCxkHxkW] kernel, got " +
                  shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
    if (input.dim(1) != kernel.dim(1))
        dim_error("conv2d: channel mismatch, input " + shape_str(input.shape()) + " vs kernel " +
                  shape_str(kernel.shape()));
    if (kernel.dim(2) % 2 == 0 || kernel.dim(3) % 2 == 0)
        dim_error("conv2d: kernel extents must be odd, got " + shape_str(kernel.shape()));

    const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t O = kernel.dim(0), kH = kernel.dim(2), kW = kernel.dim(3);
    const std::size_t ph = kH / 2, pw = kW / 2;

    const auto in_at = [&](const Array& arr, std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
        return arr[static_cast<Eigen::Index>(((b * C + c) * H + y) * W + x)];
    };
    const auto k_at = [&](const Array& arr, std::size_t o, std::size_t c, std::size_t u, std::size_t v) {
        return arr[static_cast<Eigen::Index>(((o * C + c) * kH + u) * kW + v)];
    };

    Array out = Array::Zero(static_cast<Eigen::Index>(B * O * H * W));
    const Array& in = input.data();
    const Array& ker = kernel.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t u = 0; u < kH; ++u) {
                            const std::size_t iy = y + u;
                            if (iy < ph || iy - ph >= H) continue;
                            for (std::size_t v = 0; v < kW; ++v) {
                                const std::size_t ix = x + v;
                                if (ix < pw || ix - pw >= W) continue;
                                acc += in_at(in, b, c, iy - ph, ix - pw) * k_at(ker, o, c, u, v);
                            }
                        }
                    out[static_cast<Eigen::Index>(((b * O + o) * H + y) * W + x)] = acc;
                }

    Tensor iv = input, kv = kernel;
    return make_op(Shape{B, O, H, W}, std::move(out), {&input, &kernel},
                   [=](const Array& g, const std::vector<Array*>& pg) {
                       for (std::size_t b = 0; b < B; ++b)
                           for (std::size_t o = 0; o < O; ++o)
                               for (std::size_t y = 0; y < H; ++y)
                                   for (std::size_t x = 0; x < W; ++x) {
                                       const double go =
                                           g[static_cast<Eigen::Index>(((b * O + o) * H + y) * W + x)];
                                       if (go == 0.0) continue;
                                       for (std::size_t c = 0; c < C; ++c)
                                           for (std::size_t u = 0; u < kH; ++u) {
                                               const std::size_t iy = y + u;
                                               if (iy < ph || iy - ph >= H) continue;
                                               for (std::size_t v = 0; v < kW; ++v) {
                                                   const std::size_t ix = x + v;
                                                   if (ix < pw || ix - pw >= W) continue;
                                                   const auto ii = static_cast<Eigen::Index>(
                                                       ((b * C + c) * H + (iy - ph)) * W + (ix - pw));
                                                   const auto ki = static_cast<Eigen::Index>(
                                                       ((o * C + c) * kH + u) * kW + v);
                                                   if (pg[0]) (*pg[0])[ii] += go * kv.data()[ki];
                                                   if (pg[1]) (*pg[1])[ki] += go * iv.data()[ii];
                                               }
                                           }
                                   }
                   });
}

Tensor avgpool2d(const Tensor& input, std::size_t h, std::size_t w) {
    if (input.rank() != 4)
        dim_error("avgpool2d: expected [BxCxHxW], got " + shape_str(input.shape()));
    if (h == 0 || w == 0) dim_error("avgpool2d: window extents must be positive");
    const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t OH = H / h, OW = W / w;
    if (OH == 0 || OW == 0)
        dim_error("avgpool2d: window " + std::to_string(h) + "x" + std::to_string(w) +
                  " larger than input " + shape_str(input.shape()));
    const double inv = 1.0 / static_cast<double>(h * w);

    Array out = Array::Zero(static_cast<Eigen::Index>(B * C * OH * OW));
    const Array& in = input.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oy = 0; oy < OH; ++oy)
                for (std::size_t ox = 0; ox < OW; ++ox) {
                    double acc = 0.0;
                    for (std::size_t u = 0; u < h; ++u)
                        for (std::size_t v = 0; v < w; ++v)
                            acc += in[static_cast<Eigen::Index>(
                                ((b * C + c) * H + (oy * h + u)) * W + (ox * w + v))];
                    out[static_cast<Eigen::Index>(((b * C + c) * OH + oy) * OW + ox)] = acc * inv;
                }

    return make_op(Shape{B, C, OH, OW}, std::move(out), {&input},
                   [=](const Array& g, const std::vector<Array*>& pg) {
                       if (!pg[0]) return;
                       for (std::size_t b = 0; b < B; ++b)
                           for (std::size_t c = 0; c < C; ++c)
                               for (std::size_t oy = 0; oy < OH; ++oy)
                                   for (std::size_t ox = 0; ox < OW; ++ox) {
                                       const double go =
                                           g[static_cast<Eigen::Index>(((b * C + c) * OH + oy) * OW + ox)] * inv;
                                       for (std::size_t u = 0; u < h; ++u)
                                           for (std::size_t v = 0; v < w; ++v)
                                               (*pg[0])[static_cast<Eigen::Index>(
                                                   ((b * C + c) * H + (oy * h + u)) * W + (ox * w + v))] += go;
                                   }
                   });
}

// ---- finite differences ----

GradCheckResult finite_diff_check(const TensorFn& f, std::vector<Tensor> inputs, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("finite_diff_check: eps must be positive");
    for (Tensor& t : inputs) t.set_requires_grad(true);

    GradCheckResult result;
    std::vector<Tensor> analytic;
    {
        Tape tape;
        Tensor loss = f(inputs);
        if (loss.size() != 1)
            throw std::invalid_argument("finite_diff_check: f must be scalar-valued");
        if (!loss.all_finite()) result.all_finite = false;
        GradientMap grads = tape.backward(loss);
        analytic.reserve(inputs.size());
        for (const Tensor& t : inputs)
            analytic.push_back(grads.contains(t) ? grads.at(t) : Tensor(t.shape(), 0.0));
    }

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            const auto idx = static_cast<Eigen::Index>(j);
            const double saved = inputs[i].data()[idx];
            inputs[i].mut()[idx] = saved + eps;
            const double f_plus = f(inputs).value();
            inputs[i].mut()[idx] = saved - eps;
            const double f_minus = f(inputs).value();
            inputs[i].mut()[idx] = saved;

            if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
                result.all_finite = false;
                continue;
            }
            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double rel =
                std::abs(analytic[i][j] - numeric) / std::max(1.0, std::abs(numeric));
            result.max_rel_err = std::max(result.max_rel_err, rel);
        }
    }
    return result;
}

}  // namespace rrtn
