#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "matrn/errors.hpp"

namespace matrn {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ")";
  return os.str();
}

/// Dense n-dimensional array with an optional gradient buffer.
/// Copying a Tensor is a shallow handle copy; data and grad are shared.
template <class T>
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  std::shared_ptr<std::vector<T>> grad;  // null when gradients are not tracked
  bool requires_grad = false;

  Tensor() = default;

  int64_t size() const { return data ? static_cast<int64_t>(data->size()) : 0; }
  T* ptr() { return data->data(); }
  const T* ptr() const { return data->data(); }
  // grad is shared state; backward closures mutate it through const handles
  T* gptr() const { return grad->data(); }
  bool tracked() const { return grad != nullptr; }

  int dim(int i) const {
    if (i < 0) i += static_cast<int>(shape.size());
    return shape[static_cast<size_t>(i)];
  }
  int ndim() const { return static_cast<int>(shape.size()); }

  T item() const {
    if (size() != 1) throw UsageError("item() on non-scalar tensor " + shape_str(shape));
    return (*data)[0];
  }

  void ensure_grad() {
    if (!grad) {
      grad = std::make_shared<std::vector<T>>(data->size(), T(0));
      requires_grad = true;
    }
  }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), T(0));
  }

  static Tensor zeros(const Shape& s) {
    for (int d : s)
      if (d <= 0) throw DimensionError("non-positive extent in shape " + shape_str(s));
    Tensor t;
    t.shape = s;
    t.data = std::make_shared<std::vector<T>>(static_cast<size_t>(shape_numel(s)), T(0));
    return t;
  }

  static Tensor full(const Shape& s, T v) {
    Tensor t = zeros(s);
    std::fill(t.data->begin(), t.data->end(), v);
    return t;
  }

  static Tensor scalar(T v) { return full({1}, v); }

  static Tensor from_vector(const Shape& s, std::vector<T> v) {
    if (static_cast<int64_t>(v.size()) != shape_numel(s))
      throw DimensionError("data length " + std::to_string(v.size()) +
                           " does not match shape " + shape_str(s));
    Tensor t;
    t.shape = s;
    t.data = std::make_shared<std::vector<T>>(std::move(v));
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<T>>(*data);
    return t;
  }
};

/// Records the backward closures of all primitive ops executed while active.
/// One tape per training thread; nesting restores the previous tape.
template <class T>
class Tape {
 public:
  Tape() : prev_(active_) { active_ = this; }
  ~Tape() { active_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(std::function<void()> fn) { entries_.push_back(std::move(fn)); }
  size_t size() const { return entries_.size(); }

  /// Seeds loss.grad with exactly 1 and replays the tape in reverse.
  /// The tape is cleared afterwards.
  void backward(Tensor<T>& loss) {
    if (loss.size() != 1)
      throw UsageError("backward requires a scalar loss, got " + shape_str(loss.shape));
    if (!loss.tracked())
      throw UsageError("backward on a loss with no gradient tracking");
    (*loss.grad)[0] = T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
  }

  void clear() { entries_.clear(); }

 private:
  std::vector<std::function<void()>> entries_;
  Tape* prev_;
  static thread_local Tape* active_;
};

template <class T>
thread_local Tape<T>* Tape<T>::active_ = nullptr;

// Output of an op is tracked iff a tape is active and any input is tracked.
template <class T>
inline bool grad_enabled_for(std::initializer_list<const Tensor<T>*> inputs) {
  if (!Tape<T>::active()) return false;
  for (const Tensor<T>* t : inputs)
    if (t->tracked()) return true;
  return false;
}

template <class T>
inline void backward(Tensor<T>& loss) {
  if (!Tape<T>::active()) throw UsageError("backward called with no active tape");
  Tape<T>::active()->backward(loss);
}

}  // namespace matrn
