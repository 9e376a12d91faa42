#include "metagnn/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "metagnn/errors.hpp"

namespace metagnn {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_error(std::string_view op, const Shape& a,
                              const Shape& b, std::string_view why = {}) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << shape_to_string(a) << " and "
     << shape_to_string(b);
  if (!why.empty()) os << " (" << why << ")";
  throw ShapeError(os.str());
}

[[noreturn]] void shape_error(std::string_view op, const Shape& a,
                              std::string_view why) {
  std::ostringstream os;
  os << op << ": invalid shape " << shape_to_string(a) << " (" << why << ")";
  throw ShapeError(os.str());
}

void require_defined(std::string_view op, const Tensor& t) {
  if (!t.defined()) {
    throw std::invalid_argument(std::string(op) + ": undefined tensor");
  }
}

void require_matrix(std::string_view op, const Tensor& t) {
  require_defined(op, t);
  if (t.rank() != 2) shape_error(op, t.shape(), "expected a matrix");
}

Tensor constant(Shape shape, std::vector<double> data) {
  return Tensor(std::move(shape), std::move(data), false);
}

// --- broadcasting ----------------------------------------------------------

enum class Broadcast { kSame, kScalarB, kScalarA, kRowB, kRowA };

bool is_row_of(const Shape& s, std::size_t m) {
  return (s.size() == 1 && s[0] == m) ||
         (s.size() == 2 && s[0] == 1 && s[1] == m);
}

struct BroadcastPlan {
  Broadcast kind;
  Shape out;
  std::size_t row_width = 0;
};

BroadcastPlan plan_broadcast(std::string_view op, const Shape& a,
                             const Shape& b) {
  if (a == b) return {Broadcast::kSame, a};
  if (shape_numel(b) == 1) return {Broadcast::kScalarB, a};
  if (shape_numel(a) == 1) return {Broadcast::kScalarA, b};
  if (a.size() == 2 && is_row_of(b, a[1])) {
    return {Broadcast::kRowB, a, a[1]};
  }
  if (b.size() == 2 && is_row_of(a, b[1])) {
    return {Broadcast::kRowA, b, b[1]};
  }
  shape_error(op, a, b, "only scalar and row-vector broadcasting is allowed");
}

template <typename F>
std::vector<double> apply_binary(const BroadcastPlan& plan,
                                 std::span<const double> a,
                                 std::span<const double> b, F f) {
  const std::size_t n = shape_numel(plan.out);
  std::vector<double> out(n);
  switch (plan.kind) {
    case Broadcast::kSame:
      for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
      break;
    case Broadcast::kScalarB:
      for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[0]);
      break;
    case Broadcast::kScalarA:
      for (std::size_t i = 0; i < n; ++i) out[i] = f(a[0], b[i]);
      break;
    case Broadcast::kRowB:
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = f(a[i], b[i % plan.row_width]);
      }
      break;
    case Broadcast::kRowA:
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = f(a[i % plan.row_width], b[i]);
      }
      break;
  }
  return out;
}

// Sum a gradient of the broadcast output back down to an operand's shape.
Tensor unbroadcast(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  if (shape_numel(target) == 1) return reshape(sum(g), target);
  return reshape(sum_rows(g), target);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_to_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> data, bool requires_grad) {
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> data(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) data[i * n + i] = 1.0;
  return matrix(n, n, std::move(data));
}

const Shape& Tensor::shape() const {
  require_defined("shape", *this);
  return impl_->shape;
}

std::size_t Tensor::rows() const {
  require_matrix("rows", *this);
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  require_matrix("cols", *this);
  return impl_->shape[1];
}

std::span<const double> Tensor::data() const {
  require_defined("data", *this);
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) shape_error("item", shape(), "expected one element");
  return impl_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return impl_->data[r * cols() + c];
}

bool Tensor::requires_grad() const {
  return impl_ != nullptr && impl_->requires_grad;
}

const std::shared_ptr<Node>& Tensor::grad_fn() const {
  static const std::shared_ptr<Node> none;
  return impl_ ? impl_->grad_fn : none;
}

Tensor Tensor::detach(bool requires_grad) const {
  return Tensor(shape(), impl_->data, requires_grad);
}

namespace detail {

Tensor make_op_result(std::string_view op, Shape shape,
                      std::vector<double> data, std::vector<Tensor> inputs,
                      BackwardFn backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  if (g_grad_enabled &&
      std::any_of(inputs.begin(), inputs.end(),
                  [](const Tensor& t) { return t.requires_grad(); })) {
    impl->requires_grad = true;
    impl->grad_fn =
        std::make_shared<Node>(op, std::move(inputs), std::move(backward));
  }
  return Tensor(std::move(impl));
}

}  // namespace detail

using detail::make_op_result;

bool grad_enabled() { return g_grad_enabled; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_enabled) {
  g_grad_enabled = enabled;
}

GradModeGuard::~GradModeGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------
// Elementwise binary

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined("add", a);
  require_defined("add", b);
  auto plan = plan_broadcast("add", a.shape(), b.shape());
  auto out = apply_binary(plan, a.data(), b.data(),
                          [](double x, double y) { return x + y; });
  return make_op_result("add", plan.out, std::move(out), {a, b},
                        [a, b](const Tensor& g) -> std::vector<Tensor> {
                          return {a.requires_grad() ? unbroadcast(g, a.shape())
                                                    : Tensor(),
                                  b.requires_grad() ? unbroadcast(g, b.shape())
                                                    : Tensor()};
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_defined("sub", a);
  require_defined("sub", b);
  auto plan = plan_broadcast("sub", a.shape(), b.shape());
  auto out = apply_binary(plan, a.data(), b.data(),
                          [](double x, double y) { return x - y; });
  return make_op_result(
      "sub", plan.out, std::move(out), {a, b},
      [a, b](const Tensor& g) -> std::vector<Tensor> {
        return {a.requires_grad() ? unbroadcast(g, a.shape()) : Tensor(),
                b.requires_grad() ? unbroadcast(neg(g), b.shape()) : Tensor()};
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined("mul", a);
  require_defined("mul", b);
  auto plan = plan_broadcast("mul", a.shape(), b.shape());
  auto out = apply_binary(plan, a.data(), b.data(),
                          [](double x, double y) { return x * y; });
  return make_op_result(
      "mul", plan.out, std::move(out), {a, b},
      [a, b](const Tensor& g) -> std::vector<Tensor> {
        return {a.requires_grad() ? unbroadcast(mul(g, b), a.shape())
                                  : Tensor(),
                b.requires_grad() ? unbroadcast(mul(g, a), b.shape())
                                  : Tensor()};
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_defined("div", a);
  require_defined("div", b);
  auto plan = plan_broadcast("div", a.shape(), b.shape());
  auto out = apply_binary(plan, a.data(), b.data(),
                          [](double x, double y) { return x / y; });
  return make_op_result(
      "div", plan.out, std::move(out), {a, b},
      [a, b](const Tensor& g) -> std::vector<Tensor> {
        Tensor ga, gb;
        if (a.requires_grad()) ga = unbroadcast(div(g, b), a.shape());
        if (b.requires_grad()) {
          gb = unbroadcast(neg(div(mul(g, a), mul(b, b))), b.shape());
        }
        return {ga, gb};
      });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
  require_defined("scale", a);
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_op_result("scale", a.shape(), std::move(out), {a},
                        [factor](const Tensor& g) -> std::vector<Tensor> {
                          return {scale(g, factor)};
                        });
}

// ---------------------------------------------------------------------------
// Structural

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) shape_error("matmul", a.shape(), b.shape());
  std::vector<double> out(n * m);
  Eigen::Map<const RowMatrix> A(a.data().data(), n, k);
  Eigen::Map<const RowMatrix> B(b.data().data(), k, m);
  Eigen::Map<RowMatrix> C(out.data(), n, m);
  C.noalias() = A * B;
  return make_op_result(
      "matmul", {n, m}, std::move(out), {a, b},
      [a, b](const Tensor& g) -> std::vector<Tensor> {
        return {a.requires_grad() ? matmul(g, transpose(b)) : Tensor(),
                b.requires_grad() ? matmul(transpose(a), g) : Tensor()};
      });
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(n * m);
  const auto src = a.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = src[i * m + j];
  }
  return make_op_result("transpose", {m, n}, std::move(out), {a},
                        [](const Tensor& g) -> std::vector<Tensor> {
                          return {transpose(g)};
                        });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined("reshape", a);
  if (shape_numel(shape) != a.numel()) shape_error("reshape", a.shape(), shape);
  Shape original = a.shape();
  return make_op_result(
      "reshape", std::move(shape),
      std::vector<double>(a.data().begin(), a.data().end()), {a},
      [original](const Tensor& g) -> std::vector<Tensor> {
        return {reshape(g, original)};
      });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_matrix("concat", p);
  const std::size_t other = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const std::size_t this_other = axis == 0 ? p.cols() : p.rows();
    if (this_other != other) shape_error("concat", parts[0].shape(), p.shape());
    extents.push_back(axis == 0 ? p.rows() : p.cols());
    total += extents.back();
  }
  Shape out_shape = axis == 0 ? Shape{total, other} : Shape{other, total};
  std::vector<double> out;
  out.reserve(total * other);
  if (axis == 0) {
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(),
                                           p.data().end());
  } else {
    for (std::size_t r = 0; r < other; ++r) {
      for (const auto& p : parts) {
        const auto row = p.data().subspan(r * p.cols(), p.cols());
        out.insert(out.end(), row.begin(), row.end());
      }
    }
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_op_result(
      "concat", std::move(out_shape), std::move(out), inputs,
      [inputs, extents, axis](const Tensor& g) -> std::vector<Tensor> {
        std::vector<Tensor> grads;
        std::size_t offset = 0;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          grads.push_back(inputs[i].requires_grad()
                              ? slice(g, axis, offset, offset + extents[i])
                              : Tensor());
          offset += extents[i];
        }
        return grads;
      });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end) {
  require_matrix("slice", a);
  if (axis > 1) throw ShapeError("slice: axis must be 0 or 1");
  const std::size_t n = a.rows(), m = a.cols();
  const std::size_t extent = axis == 0 ? n : m;
  if (begin > end || end > extent) {
    shape_error("slice", a.shape(),
                "range [" + std::to_string(begin) + ", " +
                    std::to_string(end) + ") out of bounds");
  }
  const auto src = a.data();
  std::vector<double> out;
  Shape out_shape;
  if (axis == 0) {
    out.assign(src.begin() + begin * m, src.begin() + end * m);
    out_shape = {end - begin, m};
  } else {
    out.reserve(n * (end - begin));
    for (std::size_t r = 0; r < n; ++r) {
      out.insert(out.end(), src.begin() + r * m + begin,
                 src.begin() + r * m + end);
    }
    out_shape = {n, end - begin};
  }
  return make_op_result(
      "slice", std::move(out_shape), std::move(out), {a},
      [n, m, axis, begin, end](const Tensor& g) -> std::vector<Tensor> {
        const std::size_t extent = axis == 0 ? n : m;
        const std::size_t other = axis == 0 ? m : n;
        auto block = [&](std::size_t len) {
          return axis == 0 ? Tensor::zeros({len, other})
                           : Tensor::zeros({other, len});
        };
        std::vector<Tensor> pieces;
        if (begin > 0) pieces.push_back(block(begin));
        pieces.push_back(g);
        if (end < extent) pieces.push_back(block(extent - end));
        if (pieces.size() == 1) return {g};
        return {concat(pieces, axis)};
      });
}

// ---------------------------------------------------------------------------
// Elementwise unary

Tensor exp(const Tensor& a) {
  require_defined("exp", a);
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = std::exp(v);
  return make_op_result("exp", a.shape(), std::move(out), {a},
                        [a](const Tensor& g) -> std::vector<Tensor> {
                          return {mul(g, exp(a))};
                        });
}

Tensor log(const Tensor& a) {
  require_defined("log", a);
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = std::log(v);
  return make_op_result("log", a.shape(), std::move(out), {a},
                        [a](const Tensor& g) -> std::vector<Tensor> {
                          return {div(g, a)};
                        });
}

Tensor leaky_relu(const Tensor& a, double negative_slope) {
  require_defined("leaky_relu", a);
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > 0.0 ? v : negative_slope * v;
  return make_op_result(
      "leaky_relu", a.shape(), std::move(out), {a},
      [a, negative_slope](const Tensor& g) -> std::vector<Tensor> {
        std::vector<double> slope(a.numel());
        const auto x = a.data();
        for (std::size_t i = 0; i < slope.size(); ++i) {
          slope[i] = x[i] > 0.0 ? 1.0 : negative_slope;
        }
        return {mul(g, constant(a.shape(), std::move(slope)))};
      });
}

Tensor row_softmax(const Tensor& a) {
  require_matrix("row_softmax", a);
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t r = 0; r < n; ++r) {
    double* row = out.data() + r * m;
    const double peak = *std::max_element(row, row + m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      row[j] = std::exp(row[j] - peak);
      total += row[j];
    }
    for (std::size_t j = 0; j < m; ++j) row[j] /= total;
  }
  return make_op_result(
      "row_softmax", a.shape(), std::move(out), {a},
      [a, m](const Tensor& g) -> std::vector<Tensor> {
        // dx = y * (g - rowsum(g * y))
        Tensor y = row_softmax(a);
        Tensor row_dot = matmul(mul(g, y), Tensor::ones({m, 1}));
        Tensor spread = matmul(row_dot, Tensor::ones({1, m}));
        return {mul(y, sub(g, spread))};
      });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  require_defined("sum", a);
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_op_result("sum", {}, {total}, {a},
                        [a](const Tensor& g) -> std::vector<Tensor> {
                          return {mul(Tensor::ones(a.shape()), g)};
                        });
}

Tensor mean(const Tensor& a) {
  require_defined("mean", a);
  const double n = static_cast<double>(a.numel());
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_op_result("mean", {}, {total / n}, {a},
                        [a, n](const Tensor& g) -> std::vector<Tensor> {
                          return {mul(Tensor::full(a.shape(), 1.0 / n), g)};
                        });
}

Tensor sum_rows(const Tensor& a) {
  require_matrix("sum_rows", a);
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(m, 0.0);
  const auto x = a.data();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < m; ++j) out[j] += x[r * m + j];
  }
  return make_op_result("sum_rows", {1, m}, std::move(out), {a},
                        [n, m](const Tensor& g) -> std::vector<Tensor> {
                          return {mul(Tensor::ones({n, m}), g)};
                        });
}

Tensor mean_rows(const Tensor& a) {
  require_matrix("mean_rows", a);
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(m, 0.0);
  const auto x = a.data();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < m; ++j) out[j] += x[r * m + j];
  }
  for (auto& v : out) v /= static_cast<double>(n);
  return make_op_result(
      "mean_rows", {1, m}, std::move(out), {a},
      [n, m](const Tensor& g) -> std::vector<Tensor> {
        return {mul(Tensor::full({n, m}, 1.0 / static_cast<double>(n)), g)};
      });
}

// ---------------------------------------------------------------------------
// Indexing

Tensor masked_fill(const Tensor& a, const std::vector<bool>& mask,
                   double value) {
  require_defined("masked_fill", a);
  if (mask.size() != a.numel()) {
    shape_error("masked_fill", a.shape(), Shape{mask.size()});
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i]) out[i] = value;
  }
  return make_op_result("masked_fill", a.shape(), std::move(out), {a},
                        [mask](const Tensor& g) -> std::vector<Tensor> {
                          return {masked_fill(g, mask, 0.0)};
                        });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_matrix("gather_rows", a);
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out;
  out.reserve(rows.size() * m);
  const auto x = a.data();
  for (auto r : rows) {
    if (r >= n) {
      shape_error("gather_rows", a.shape(),
                  "row index " + std::to_string(r) + " out of range");
    }
    out.insert(out.end(), x.begin() + r * m, x.begin() + (r + 1) * m);
  }
  std::vector<std::size_t> index(rows.begin(), rows.end());
  return make_op_result("gather_rows", {rows.size(), m}, std::move(out), {a},
                        [index, n](const Tensor& g) -> std::vector<Tensor> {
                          return {scatter_rows(g, index, n)};
                        });
}

Tensor scatter_rows(const Tensor& a, std::span<const std::size_t> rows,
                    std::size_t out_rows) {
  require_matrix("scatter_rows", a);
  const std::size_t m = a.cols();
  if (rows.size() != a.rows()) {
    shape_error("scatter_rows", a.shape(), Shape{rows.size()});
  }
  std::vector<double> out(out_rows * m, 0.0);
  const auto x = a.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= out_rows) {
      shape_error("scatter_rows", a.shape(),
                  "row index " + std::to_string(rows[i]) + " out of range");
    }
    for (std::size_t j = 0; j < m; ++j) out[rows[i] * m + j] += x[i * m + j];
  }
  std::vector<std::size_t> index(rows.begin(), rows.end());
  return make_op_result("scatter_rows", {out_rows, m}, std::move(out), {a},
                        [index](const Tensor& g) -> std::vector<Tensor> {
                          return {gather_rows(g, index)};
                        });
}

// ---------------------------------------------------------------------------
// Loss

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_matrix("cross_entropy", logits);
  const std::size_t batch = logits.rows(), classes = logits.cols();
  if (labels.size() != batch) {
    shape_error("cross_entropy", logits.shape(), Shape{labels.size()},
                "one label per row");
  }
  const auto x = logits.data();
  double total = 0.0;
  std::vector<double> one_hot(batch * classes, 0.0);
  for (std::size_t r = 0; r < batch; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                  " outside [0, " + std::to_string(classes) +
                                  ")");
    }
    const double* row = x.data() + r * classes;
    const double peak = *std::max_element(row, row + classes);
    double acc = 0.0;
    for (std::size_t j = 0; j < classes; ++j) acc += std::exp(row[j] - peak);
    total += peak + std::log(acc) - row[y];
    one_hot[r * classes + static_cast<std::size_t>(y)] = 1.0;
  }
  Tensor target = constant(logits.shape(), std::move(one_hot));
  const double inv_batch = 1.0 / static_cast<double>(batch);
  return make_op_result(
      "cross_entropy", {}, {total * inv_batch}, {logits},
      [logits, target, inv_batch](const Tensor& g) -> std::vector<Tensor> {
        return {mul(sub(row_softmax(logits), target), scale(g, inv_batch))};
      });
}

// ---------------------------------------------------------------------------
// Reverse pass

std::vector<Tensor> grad(const Tensor& loss, std::span<const Tensor> wrt,
                         GradOptions options, std::vector<bool>* unreachable) {
  require_defined("grad", loss);
  if (loss.numel() != 1) {
    shape_error("grad", loss.shape(), "loss must have exactly one element");
  }
  std::unordered_set<const TensorImpl*> targets;
  for (const auto& t : wrt) {
    require_defined("grad", t);
    if (!t.requires_grad()) {
      throw std::invalid_argument(
          "grad: differentiation target does not require grad");
    }
    targets.insert(t.id());
  }

  // Post-order DFS restricted to nodes from which some target is reachable.
  std::unordered_map<const TensorImpl*, bool> needed;
  std::vector<Tensor> order;
  if (loss.requires_grad()) {
    struct Frame {
      Tensor tensor;
      std::size_t next = 0;
    };
    std::vector<Frame> stack;
    stack.push_back({loss});
    needed.emplace(loss.id(), false);
    while (!stack.empty()) {
      Frame& top = stack.back();
      const auto& fn = top.tensor.grad_fn();
      const std::size_t n_inputs = fn ? fn->inputs().size() : 0;
      if (top.next < n_inputs) {
        const Tensor& input = fn->inputs()[top.next++];
        if (input.requires_grad() && !needed.contains(input.id())) {
          needed.emplace(input.id(), false);
          stack.push_back({input});
        }
        continue;
      }
      bool is_needed = targets.contains(top.tensor.id());
      if (fn) {
        for (const auto& input : fn->inputs()) {
          if (!input.requires_grad()) continue;
          auto it = needed.find(input.id());
          if (it != needed.end() && it->second) is_needed = true;
        }
      }
      needed[top.tensor.id()] = is_needed;
      if (is_needed) order.push_back(top.tensor);
      stack.pop_back();
    }
  }

  GradModeGuard mode(options.create_graph);
  std::unordered_map<const TensorImpl*, Tensor> grads;
  if (!order.empty()) grads[loss.id()] = Tensor::ones(loss.shape());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Tensor& t = *it;
    auto found = grads.find(t.id());
    if (found == grads.end()) continue;
    const auto& fn = t.grad_fn();
    if (!fn) continue;
    Tensor g = found->second;
    if (!targets.contains(t.id())) grads.erase(found);
    auto input_grads = fn->backward(g);
    const auto& inputs = fn->inputs();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!input_grads[i].defined() || !inputs[i].requires_grad()) continue;
      auto need = needed.find(inputs[i].id());
      if (need == needed.end() || !need->second) continue;
      if (input_grads[i].shape() != inputs[i].shape()) {
        throw std::logic_error("grad: backward of " + std::string(fn->op()) +
                               " produced shape " +
                               shape_to_string(input_grads[i].shape()) +
                               " for input " +
                               shape_to_string(inputs[i].shape()));
      }
      auto [slot, inserted] = grads.try_emplace(inputs[i].id(), input_grads[i]);
      if (!inserted) slot->second = add(slot->second, input_grads[i]);
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  if (unreachable) unreachable->assign(wrt.size(), false);
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    auto it = grads.find(wrt[i].id());
    if (it != grads.end()) {
      result.push_back(it->second);
    } else {
      result.push_back(Tensor::zeros(wrt[i].shape()));
      if (unreachable) (*unreachable)[i] = true;
    }
  }
  return result;
}

}  // namespace metagnn
