#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lrd {

using Shape = std::vector<std::int64_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

// Grad recording is a per-thread switch; graphs are built and consumed on one
// thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Backward rule of a recorded operation. `value` and `grad` belong to the
// operation's output; `input_grads[i]` is empty when input i does not require
// a gradient. Rules accumulate (+=) into the input gradients.
template <typename T>
using GradRule = std::function<void(std::span<const T> value, std::span<const T> grad,
                                    std::span<const std::span<T>> input_grads)>;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  GradRule<T> rule;
};

}  // namespace detail

/// Dense row-major array with an optional reverse-mode differentiation record.
///
/// A tensor is a shared handle: copies refer to the same storage. Operations
/// never modify their inputs; the only in-place mutations are parameter
/// updates through `data_mut()` and gradient buffers.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> data);

  static BasicTensor scalar(T value) { return BasicTensor(Shape{}, std::vector<T>{value}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node().shape; }
  int rank() const { return static_cast<int>(node().shape.size()); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(node().data.size()); }

  std::span<const T> data() const { return node().data; }
  std::span<T> data_mut() { return node().data; }
  T item() const;

  bool requires_grad() const { return node().requires_grad; }
  BasicTensor& set_requires_grad(bool on);
  bool is_leaf() const { return !node().rule; }
  std::string_view op_name() const { return node().op; }

  bool has_grad() const { return !node().grad.empty(); }
  std::span<const T> grad() const { return node().grad; }
  std::span<T> grad_mut() { return node().grad; }
  void zero_grad();
  /// Releases the gradient buffer so has_grad() is false until the next
  /// backward pass reaches this tensor.
  void clear_grad();

  /// Reverse pass from this scalar. Leaf gradients accumulate across calls;
  /// intermediate gradients are recomputed from zero and released afterwards.
  void backward() const;

  /// New leaf holding a copy of the values, cut from any graph.
  BasicTensor detach() const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(node().data.begin(), node().data.end());
    return BasicTensor<U>(shape(), std::move(out));
  }

  /// Stable address of the underlying storage; two handles are the same
  /// parameter iff their identities compare equal.
  const void* identity() const { return node_.get(); }

  /// Creates the output of a custom operation. The graph edge is recorded only
  /// when grad mode is on and some input requires a gradient.
  static BasicTensor from_op(Shape shape, std::vector<T> data, std::vector<BasicTensor> inputs,
                             std::string_view op, GradRule<T> rule);

 private:
  detail::Node<T>& node() const {
    if (!node_) throw std::logic_error("use of undefined tensor");
    return *node_;
  }

  std::shared_ptr<detail::Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace lrd
