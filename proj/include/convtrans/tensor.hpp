#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cts {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};

// Dense row-major tensor. Copies share storage (handle semantics) so that
// parameters held by a model and the tape nodes that read them stay in sync;
// use clone() for an independent copy.
template <class T>
class Tensor {
 public:
  using value_type = T;
  using StoragePtr = std::shared_ptr<TensorStorage<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return storage_->shape; }
  std::size_t rank() const { return storage_->shape.size(); }
  /// Extent of dimension i; negative i counts from the back.
  std::size_t dim(std::ptrdiff_t i) const;
  std::size_t numel() const { return storage_->data.size(); }

  std::span<T> data() { return storage_->data; }
  std::span<const T> data() const { return storage_->data; }
  T& operator[](std::size_t i) { return storage_->data[i]; }
  const T& operator[](std::size_t i) const { return storage_->data[i]; }
  T item() const;

  bool requires_grad() const { return storage_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<T> grad() { return storage_->grad; }
  std::span<const T> grad() const { return storage_->grad; }
  /// Gradient as a new tensor (zeros if none accumulated yet).
  Tensor grad_tensor() const;
  void zero_grad();

  /// Deep copy of the values, detached from any graph.
  Tensor clone() const;

  const StoragePtr& storage() const { return storage_; }

 private:
  StoragePtr storage_;
};

// Ordered record of differentiable ops executed while the tape is active.
template <class T>
class Tape {
 public:
  using StoragePtr = typename Tensor<T>::StoragePtr;

  struct Node {
    std::string_view op;
    std::vector<StoragePtr> inputs;
    StoragePtr output;
    std::function<void()> backward;
  };

  void record(Node node) { nodes_.push_back(std::move(node)); }
  std::span<const Node> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

/// The tape ops record onto in the current thread, or nullptr.
template <class T>
Tape<T>* active_tape();

/// Activates a tape for the lifetime of the scope.
template <class T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Reverse pass over the tape. Leaf gradients accumulate across calls;
/// intermediate gradients are reset at the start of every call.
template <class T>
void backward(const Tensor<T>& loss, Tape<T>& tape);

namespace detail {

/// Gradient buffer of a storage, allocated as zeros on first use.
template <class T>
std::vector<T>& grad_of(TensorStorage<T>& s) {
  if (s.grad.empty()) s.grad.assign(s.data.size(), T(0));
  return s.grad;
}

/// True when any input requires grad and a tape is active.
template <class T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (active_tape<T>() == nullptr) return false;
  for (const auto* t : inputs)
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  return false;
}

template <class T>
void record(std::string_view op, Tensor<T>& out, std::initializer_list<const Tensor<T>*> inputs,
            std::function<void()> bw) {
  typename Tape<T>::Node node;
  node.op = op;
  for (const auto* t : inputs)
    if (t != nullptr && t->defined()) node.inputs.push_back(t->storage());
  node.output = out.storage();
  node.backward = std::move(bw);
  out.set_requires_grad(true);
  active_tape<T>()->record(std::move(node));
}

}  // namespace detail

}  // namespace cts
