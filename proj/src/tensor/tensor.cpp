#include "lrd/tensor/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace lrd {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : node_(std::make_shared<detail::Node<T>>()) {
  const auto n = numel_of(shape);
  node_->shape = std::move(shape);
  node_->data.assign(static_cast<std::size_t>(n), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : node_(std::make_shared<detail::Node<T>>()) {
  if (numel_of(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

template <typename T>
std::int64_t BasicTensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range for shape " + shape_str(shape()));
  return node().shape[static_cast<std::size_t>(axis)];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return node().data[0];
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
  if (!is_leaf()) throw std::logic_error("requires_grad can only be set on leaf tensors");
  node().requires_grad = on;
  if (!on) node().grad.clear();
  return *this;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  auto& g = node().grad;
  std::fill(g.begin(), g.end(), T{0});
}

template <typename T>
void BasicTensor<T>::clear_grad() {
  node().grad.clear();
  node().grad.shrink_to_fit();
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(shape(), std::vector<T>(node().data));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_op(Shape shape, std::vector<T> data,
                                       std::vector<BasicTensor> inputs, std::string_view op,
                                       GradRule<T> rule) {
  BasicTensor out(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const BasicTensor& t) { return t.requires_grad(); });
  if (!any) return out;
  auto& n = *out.node_;
  n.requires_grad = true;
  n.op = op;
  n.rule = std::move(rule);
  n.inputs.reserve(inputs.size());
  for (auto& t : inputs) n.inputs.push_back(t.node_);
  return out;
}

template <typename T>
void BasicTensor<T>::backward() const {
  using NodeT = detail::Node<T>;
  auto& root = node();
  if (root.data.size() != 1) {
    throw ShapeError("backward() requires a scalar root, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) throw std::logic_error("backward() on a tensor that does not require grad");

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack{{&root, 0}};
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      NodeT* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (NodeT* n : order) {
    if (n->rule) {
      n->grad.assign(n->data.size(), T{0});
    } else if (n->grad.size() != n->data.size()) {
      n->grad.assign(n->data.size(), T{0});
    }
  }
  root.grad[0] += T{1};

  std::vector<std::span<T>> input_grads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (!n->rule) continue;
    input_grads.clear();
    for (auto& in : n->inputs) {
      input_grads.push_back(in->requires_grad ? std::span<T>(in->grad) : std::span<T>());
    }
    n->rule(n->data, n->grad, input_grads);
  }

  for (NodeT* n : order) {
    if (n->rule && n != &root) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace lrd
