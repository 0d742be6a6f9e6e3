#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsforge/errors.hpp"
#include "tsforge/rng.hpp"

namespace tsforge {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> value;  // contiguous, row-major
  std::vector<double> grad;   // empty until backward reaches this tensor
  bool requires_grad = false;
  std::optional<std::size_t> node_id;  // position on the tape that produced this tensor

  std::size_t numel() const { return value.size(); }
  // Returns the gradient buffer, zero-filled on first access.
  std::vector<double>& grad_buffer();
};

// Appends a node to the active tape (no-op without one).
void record_node(std::shared_ptr<TensorImpl> out,
                 std::function<void(const TensorImpl&)> pull);

}  // namespace detail

class Tensor;

// Records the forward operations of one differentiation graph. Constructing a
// Tape makes it the active tape for the current thread; destruction restores
// the previously active one. Construction order is the topological order, so
// backward() walks the nodes exactly once, in reverse, accumulating gradients
// additively into every requires-grad tensor that the loss reaches. Tensors
// the loss does not reach keep an absent gradient.
//
// A tape and its tensors belong to one thread; independent tapes may run on
// different threads concurrently.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() noexcept;

  // loss must be a scalar recorded while this tape was active.
  void backward(const Tensor& loss);

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  friend void detail::record_node(std::shared_ptr<detail::TensorImpl> out,
                                  std::function<void(const detail::TensorImpl&)> pull);

  struct Node {
    std::shared_ptr<detail::TensorImpl> out;
    std::function<void(const detail::TensorImpl&)> pull;  // out.grad -> parent grads
  };

  std::vector<Node> nodes_;
  Tape* prev_ = nullptr;
};

// Dense 64-bit float tensor with value semantics over a shared buffer:
// copying a Tensor aliases its storage, so parameter handles held by a model,
// an optimizer, and a checkpointer all see the same values.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double fill, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);
  // N(0, stddev^2) entries drawn from rng.
  static Tensor randn(Shape shape, double stddev, Rng& rng, bool requires_grad = false);
  // U(0, 1) entries, open interval.
  static Tensor rand_open01(Shape shape, Rng& rng);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> values();
  double item() const;  // scalar tensors only

  bool requires_grad() const;
  void set_requires_grad(bool requires_grad);
  bool has_grad() const;
  std::span<const double> grad() const;  // ContractError when absent
  void zero_grad();                      // drops the gradient buffer
  std::optional<std::size_t> node_id() const;

  // Deep copy of the values; keeps requires_grad, drops grad and tape link.
  Tensor clone() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  detail::TensorImpl& ref() const;

  std::shared_ptr<detail::TensorImpl> impl_;
};

// ---- differentiable operations -------------------------------------------
//
// Every op computes eagerly. When a Tape is active and an input requires
// gradients, the op records a pull-back node; with no active tape the same
// call is a plain forward evaluation (generation / metric paths).

// Matrix product. 2-D x 2-D, or batched with equal leading dimensions, or
// batched-left x 2-D right (the right operand broadcasts across the batch).
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise add/sub. b may match a, be a scalar, or be a suffix of a's
// shape (bias rows, positional tables); the gradient of a broadcast operand
// sums over the broadcast dimensions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Hadamard product; either operand may be a scalar tensor.
Tensor mul(const Tensor& a, const Tensor& b);
// Multiply by a compile-time constant.
Tensor scale(const Tensor& a, double factor);
// Full reduction to a scalar.
Tensor mean(const Tensor& a);
Tensor square(const Tensor& a);

// Numerically stable softmax along `axis` (negative axes count from the end).
Tensor softmax(const Tensor& a, int axis);

// Normalization over the last axis: zero mean, unit variance, then
// gamma * xhat + beta. gamma/beta have the last-axis length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Exact GELU, x * Phi(x) with the Gaussian CDF via erf.
Tensor gelu(const Tensor& x);

// Inverted dropout: in training mode each element is zeroed with probability
// p and survivors are scaled by 1/(1-p); in eval mode the input passes
// through unchanged. rng may be null when no mask is drawn.
Tensor dropout(const Tensor& x, double p, bool training, Rng* rng);

// Per-timestep linear map across the channel axis of a (B, H, 1, W) tensor:
// weight is (C, H), bias is (C), output is (B, C, 1, W).
Tensor pointwise_channel_projection(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);

// Prepends a learned (1, M) token to every sequence of a (B, T, M) batch.
Tensor concat_token(const Tensor& token, const Tensor& tokens);
// Extracts token `index` from a (B, T, M) batch as (B, M).
Tensor select_token(const Tensor& tokens, std::size_t index);

// Value copy severed from the graph; never requires gradients.
Tensor detach(const Tensor& x);

// Backward through the active tape. ContractError if no tape is active or
// loss is not scalar.
void backward(const Tensor& loss);

}  // namespace tsforge
