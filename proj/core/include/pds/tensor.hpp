#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pds {

using Shape = std::vector<std::size_t>;

/// Raised when operand extents do not satisfy an op's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a forward op produces NaN or Inf from finite inputs.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on misuse of the recorded graph (e.g. a second backward).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

/// Dense row-major tensor with optional reverse-mode gradient tracking.
///
/// A tensor is a shared handle: copies alias the same storage and graph
/// node. Ops never mutate their inputs; only gradient buffers and, through
/// `mutable_data`, optimizer updates on leaf parameters write in place.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  BasicTensor() = default;

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor from(Shape shape, std::vector<T> values,
                          bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  /// Write access for leaf tensors (parameters, inputs). Throws on op results.
  std::span<T> mutable_data();
  std::vector<T> to_vector() const;
  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const T> grad() const;
  void zero_grad();

  bool is_leaf() const;

  /// Backpropagates from this single-element tensor into every reachable
  /// leaf with requires_grad. The graph is released afterwards; a second
  /// call on the same graph throws GraphError.
  void backward();

  /// Same storage values, cut from the graph.
  BasicTensor detach() const;
  BasicTensor clone() const;

  template <typename U>
  BasicTensor<U> cast() const;

  // Internal hook used by op implementations.
  const NodePtr& node() const { return node_; }
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename T>
template <typename U>
BasicTensor<U> BasicTensor<T>::cast() const {
  auto src = data();
  std::vector<U> out(src.begin(), src.end());
  return BasicTensor<U>::from(shape(), std::move(out), requires_grad());
}

namespace detail {

/// Builds an op result: checks finiteness and wires the backward closure
/// when any input requires a gradient.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> data,
                           std::vector<BasicTensor<T>> inputs,
                           std::function<void(Node<T>&)> backward_fn,
                           const char* op_name);

}  // namespace detail

}  // namespace pds
