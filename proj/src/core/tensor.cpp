#include "convtrans/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "convtrans/errors.hpp"

namespace cts {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class T>
Tensor<T>::Tensor(Shape shape, T fill) : storage_(std::make_shared<TensorStorage<T>>()) {
  for (auto e : shape)
    if (e == 0) throw ConfigError("tensor extents must be positive, got " + shape_str(shape));
  storage_->data.assign(shape_numel(shape), fill);
  storage_->shape = std::move(shape);
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : storage_(std::make_shared<TensorStorage<T>>()) {
  for (auto e : shape)
    if (e == 0) throw ConfigError("tensor extents must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != values.size())
    throw ConfigError("tensor shape " + shape_str(shape) + " does not match " +
                      std::to_string(values.size()) + " values");
  storage_->shape = std::move(shape);
  storage_->data = std::move(values);
}

template <class T>
std::size_t Tensor<T>::dim(std::ptrdiff_t i) const {
  auto r = static_cast<std::ptrdiff_t>(rank());
  if (i < 0) i += r;
  if (i < 0 || i >= r)
    throw ConfigError("dimension index out of range for shape " + shape_str(shape()));
  return shape()[static_cast<std::size_t>(i)];
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
  return storage_->data[0];
}

template <class T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  storage_->requires_grad = on;
  return *this;
}

template <class T>
Tensor<T> Tensor<T>::grad_tensor() const {
  if (!has_grad()) return zeros(shape());
  return Tensor(shape(), storage_->grad);
}

template <class T>
void Tensor<T>::zero_grad() {
  storage_->grad.clear();
}

template <class T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(shape(), storage_->data);
}

template <class T>
Tape<T>*& tape_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

template <class T>
Tape<T>* active_tape() {
  return tape_slot<T>();
}

template <class T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(tape_slot<T>()) {
  tape_slot<T>() = &tape;
}

template <class T>
TapeScope<T>::~TapeScope() {
  tape_slot<T>() = previous_;
}

template <class T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
  if (!loss.defined() || loss.numel() != 1)
    throw UsageError("backward requires a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  if (tape.empty()) throw UsageError("backward called on an empty tape");

  // Intermediate results restart from zero each pass; leaves keep accumulating.
  std::unordered_set<const TensorStorage<T>*> produced;
  for (const auto& node : tape.nodes()) {
    node.output->grad.clear();
    produced.insert(node.output.get());
  }
  auto& seed = detail::grad_of(*loss.storage());
  if (produced.count(loss.storage().get()) == 0) {
    // Loss is a leaf: d loss / d loss accumulates like any other leaf.
    seed[0] += T(1);
    return;
  }
  seed[0] = T(1);
  auto nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // does not reach the loss
    it->backward();
  }
}

template class Tensor<float>;
template class Tensor<double>;
template Tape<float>* active_tape<float>();
template Tape<double>* active_tape<double>();
template class TapeScope<float>;
template class TapeScope<double>;
template void backward<float>(const Tensor<float>&, Tape<float>&);
template void backward<double>(const Tensor<double>&, Tape<double>&);

}  // namespace cts
