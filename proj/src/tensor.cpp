#include "kwseq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace kwseq {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, std::vector<double>(numel(shape), 0.0), requires_grad) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_string(shape) + " holds " +
                     std::to_string(numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("tensor initialised with a non-finite value");
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

detail::Node& Tensor::node() const {
  if (!node_) throw InvalidArgument("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::size() const { return node().value.size(); }

std::span<const double> Tensor::values() const { return node().value; }

std::span<double> Tensor::mutable_values() {
  detail::Node& n = node();
  if (!n.leaf) throw InvalidArgument("mutable_values() on a non-leaf tensor");
  return n.value;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  }
  return node().value[0];
}

double Tensor::at(std::size_t flat_index) const {
  const auto& v = node().value;
  if (flat_index >= v.size()) throw ShapeError("flat index out of range");
  return v[flat_index];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  detail::Node& n = node();
  if (!n.leaf) throw InvalidArgument("set_requires_grad() on a non-leaf tensor");
  n.requires_grad = flag;
  if (!flag) n.grad.clear();
}

bool Tensor::has_grad() const { return node().grad.size() == node().value.size(); }

std::span<const double> Tensor::grad() const { return node().ensure_grad(); }

std::span<double> Tensor::mutable_grad() { return node().ensure_grad(); }

void Tensor::zero_grad() {
  auto& g = node().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

void Tensor::backward() const {
  detail::Node& root = node();
  if (!root.shape.empty() && root.value.size() != 1) {
    throw ShapeError("backward() requires a scalar, got shape " + shape_string(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order of the recorded graph.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [current, next_parent] = stack.back();
    if (next_parent < current->parents.size()) {
      detail::Node* parent = current->parents[next_parent++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(current);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
  }
  root.ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->leaf && n->backward) n->backward(*n);
  }
}

Tensor Tensor::detach() const {
  const detail::Node& n = node();
  return Tensor(n.shape, n.value, false);
}

Tensor Tensor::clone(bool requires_grad) const {
  const detail::Node& n = node();
  return Tensor(n.shape, n.value, requires_grad);
}

Tensor Tensor::from_op(const char* op_name, Shape shape, std::vector<double> values,
                       std::vector<Tensor> inputs,
                       std::function<void(detail::Node&)> backward) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op_name) + " produced a non-finite value");
    }
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->leaf = false;
  if (g_grad_enabled) {
    bool any = false;
    for (const Tensor& t : inputs) any = any || t.node().requires_grad;
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(inputs.size());
      for (const Tensor& t : inputs) n->parents.push_back(t.node_);
      n->backward = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

}  // namespace kwseq
