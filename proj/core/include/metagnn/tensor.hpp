#pragma once

// Dense 64-bit tensors with reverse-mode differentiation.
//
// Every primitive below records a node when grad mode is on and at least one
// input requires a gradient. Backward rules are written in terms of the same
// primitives, so running `grad` with `create_graph = true` records the
// backward pass itself and the returned gradients can be differentiated again.
//
// Broadcasting is restricted to two forms:
//   * a one-element tensor against any tensor;
//   * a row vector (shape {m} or {1, m}) against a matrix {n, m}.
// Anything else is a ShapeError.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace metagnn {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor;
class Node;

using BackwardFn = std::function<std::vector<Tensor>(const Tensor&)>;

namespace detail {
Tensor make_op_result(std::string_view op, Shape shape,
                      std::vector<double> data, std::vector<Tensor> inputs,
                      BackwardFn backward);
}  // namespace detail

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> data, bool requires_grad = false);
  static Tensor identity(std::size_t n);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const { return data().size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  const std::shared_ptr<Node>& grad_fn() const;
  bool is_leaf() const { return !grad_fn(); }

  /// Fresh leaf sharing no graph history; copies the values.
  Tensor detach(bool requires_grad = false) const;

  const TensorImpl* id() const { return impl_.get(); }

 private:
  friend Tensor detail::make_op_result(std::string_view, Shape,
                                       std::vector<double>,
                                       std::vector<Tensor>, BackwardFn);
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

using ParamList = std::vector<Tensor>;

/// A recorded operation. `backward` maps the gradient of the output to one
/// gradient per input (an undefined Tensor for inputs that need none).
class Node {
 public:
  Node(std::string_view op, std::vector<Tensor> inputs, BackwardFn backward)
      : op_(op), inputs_(std::move(inputs)), backward_(std::move(backward)) {}

  std::string_view op() const { return op_; }
  const std::vector<Tensor>& inputs() const { return inputs_; }
  std::vector<Tensor> backward(const Tensor& grad_out) const {
    return backward_(grad_out);
  }

 private:
  std::string_view op_;
  std::vector<Tensor> inputs_;
  BackwardFn backward_;
};

// ---------------------------------------------------------------------------
// Grad mode (thread-local; each thread records its own graphs)

bool grad_enabled();

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

// ---------------------------------------------------------------------------
// Primitives

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double negative_slope);
Tensor row_softmax(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Reduce a matrix over its rows: {n, m} -> {1, m}.
Tensor sum_rows(const Tensor& a);
Tensor mean_rows(const Tensor& a);

/// Entries where `mask` is true are replaced by `value`; the gradient there
/// is zero.
Tensor masked_fill(const Tensor& a, const std::vector<bool>& mask,
                   double value);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
/// Adjoint of gather_rows: accumulates row i of `a` into row rows[i] of an
/// {out_rows, m} zero matrix.
Tensor scatter_rows(const Tensor& a, std::span<const std::size_t> rows,
                    std::size_t out_rows);

/// Mean softmax cross-entropy of a {batch, classes} logit matrix.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---------------------------------------------------------------------------
// Reverse pass

struct GradOptions {
  /// Record the backward pass so the result can be differentiated again.
  bool create_graph = false;
};

/// Gradients of a one-element `loss` with respect to each tensor in `wrt`.
/// A tensor in `wrt` that the loss does not depend on gets a zero gradient
/// and its entry in `unreachable` (when provided) is set.
std::vector<Tensor> grad(const Tensor& loss, std::span<const Tensor> wrt,
                         GradOptions options = {},
                         std::vector<bool>* unreachable = nullptr);

}  // namespace metagnn
