#include "pds/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace pds {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw ShapeError("tensor extent " + std::to_string(i) + " is zero in " +
                       shape_string(shape));
    }
  }
}

template <typename T>
std::shared_ptr<detail::Node<T>> new_node(Shape shape, std::vector<T> data,
                                          bool requires_grad) {
  check_extents(shape);
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " given " +
                     std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::vector<T> data(shape_numel(shape), value);
  return BasicTensor(new_node<T>(std::move(shape), std::move(data), requires_grad));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> values,
                                    bool requires_grad) {
  return BasicTensor(new_node<T>(std::move(shape), std::move(values), requires_grad));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(new_node<T>(Shape{}, std::vector<T>{value}, requires_grad));
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
  if (!node_) throw GraphError("use of undefined tensor");
  return node_->shape;
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_string(s));
  }
  return s[axis];
}

template <typename T>
std::size_t BasicTensor<T>::numel() const {
  return shape_numel(shape());
}

template <typename T>
std::span<const T> BasicTensor<T>::data() const {
  if (!node_) throw GraphError("use of undefined tensor");
  return node_->data;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
  if (!is_leaf()) throw GraphError("mutable_data on a non-leaf tensor");
  return node_->data;
}

template <typename T>
std::vector<T> BasicTensor<T>::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->data[0];
}

template <typename T>
T BasicTensor<T>::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw ShapeError("index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool flag) {
  if (!is_leaf()) throw GraphError("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = flag;
}

template <typename T>
bool BasicTensor<T>::has_grad() const {
  return node_ && node_->grad.size() == node_->data.size();
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!has_grad()) throw GraphError("tensor has no gradient");
  return node_->grad;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <typename T>
bool BasicTensor<T>::is_leaf() const {
  return node_ && !node_->backward_fn && node_->parents.empty() && !node_->consumed;
}

template <typename T>
void BasicTensor<T>::backward() {
  if (numel() != 1) {
    throw ShapeError("backward() needs a single-element loss, got " +
                     shape_string(shape()));
  }
  if (node_->consumed) {
    throw GraphError("backward called twice on the same graph");
  }
  if (!node_->requires_grad) {
    throw GraphError("backward on a tensor that does not require grad");
  }

  // Iterative post-order DFS gives a topological order (parents first).
  using NodeT = detail::Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      NodeT* p = n->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->backward_fn) {
      for (auto& p : n->parents) {
        if (p->requires_grad) p->ensure_grad();
      }
      n->backward_fn(*n);
    }
  }
  // Release the graph: interior nodes drop saved inputs and their gradients.
  for (NodeT* n : order) {
    if (n->backward_fn || !n->parents.empty()) {
      n->backward_fn = nullptr;
      n->parents.clear();
      n->consumed = true;
      n->requires_grad = false;
      if (n != node_.get()) n->grad.clear();
    }
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(new_node<T>(shape(), to_vector(), false));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  return BasicTensor(new_node<T>(shape(), to_vector(), requires_grad()));
}

namespace detail {

template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data,
                           std::vector<BasicTensor<T>> inputs,
                           std::function<void(Node<T>&)> backward_fn,
                           const char* op_name) {
  for (const auto& v : data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op_name) + ": non-finite output");
    }
  }
  bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                [](const auto& t) { return t.requires_grad(); });
  auto node = new_node<T>(std::move(shape), std::move(data), needs_grad);
  if (needs_grad) {
    for (auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return BasicTensor<T>(std::move(node));
}

template BasicTensor<float> make_result(Shape, std::vector<float>,
                                        std::vector<BasicTensor<float>>,
                                        std::function<void(Node<float>&)>,
                                        const char*);
template BasicTensor<double> make_result(Shape, std::vector<double>,
                                         std::vector<BasicTensor<double>>,
                                         std::function<void(Node<double>&)>,
                                         const char*);

}  // namespace detail

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace pds
