#include "wavesfm/tensorcore/tensor.hpp"

#include <sstream>
#include <unordered_map>

namespace wavesfm::tc {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

void Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("element count " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_numel(shape), value);
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }

std::span<const double> Tensor::data() const {
  if (!node_) return {};
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) return {};
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_) throw std::logic_error("use of undefined tensor");
  node_->requires_grad = flag;
  if (!flag) node_->grad.clear();
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) return {};
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && node_->requires_grad) node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::detach() const { return clone_leaf(false); }

Tensor Tensor::clone_leaf(bool requires_grad) const {
  return Tensor(make_node(shape(), node_->data, requires_grad));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss");
  }
  // Iterative DFS topological sort; a node revisited while still on the
  // stack means the graph has a cycle.
  enum class Mark { kActive, kDone };
  std::unordered_map<const detail::Node*, Mark> marks;
  std::vector<detail::Node*> order;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  marks[loss.node().get()] = Mark::kActive;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (!parent->requires_grad) continue;
      auto it = marks.find(parent);
      if (it == marks.end()) {
        marks[parent] = Mark::kActive;
        stack.emplace_back(parent, 0);
      } else if (it->second == Mark::kActive) {
        throw std::logic_error("cycle in computation graph");
      }
    } else {
      marks[node] = Mark::kDone;
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto* root = loss.node().get();
  if (!root->requires_grad) return;
  // Interior nodes start from zero on every pass so only leaves accumulate
  // across repeated calls.
  for (auto* node : order) {
    if (node->backward_fn) node->grad.assign(node->data.size(), 0.0);
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward_fn) {
      node->backward_fn(*node);
      std::vector<double>().swap(node->grad);
    }
  }
}

}  // namespace wavesfm::tc
