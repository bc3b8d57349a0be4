#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace estformer {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Raised for incompatible shapes, bad axes and out-of-range slices.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a file cannot be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a NaN/Inf is found by check_finite().
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every buffer starts on a 64-byte boundary. Vectorized reductions peel
// leading elements up to the first aligned address, so without this the
// summation order (and the last bits of results) would depend on where the
// allocator happened to place a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct TensorStorage {
  Shape shape;
  Buffer values;
  Buffer grad;  // empty until needed; same length as values once allocated
  bool requires_grad = false;
};

// Dense row-major float64 array of rank 1..3. Copies share storage; use
// clone() for a deep copy. Values are treated as immutable once an op has
// produced them; only leaves (parameters, inputs) are written in place.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::vector<double> v);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t size() const { return s_->values.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return s_->values; }
  std::span<double> mutable_values() { return s_->values; }
  const double* data() const { return s_->values.data(); }
  double* mutable_data() { return s_->values.data(); }

  double operator[](std::size_t i) const { return s_->values[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const { return s_ && s_->requires_grad; }
  // Marks a leaf as trainable and allocates a zeroed gradient buffer.
  Tensor& set_requires_grad(bool on);
  // Flags an op output as differentiable; its grad buffer is allocated on
  // first accumulation during backward.
  void mark_tracked() { s_->requires_grad = true; }
  bool has_grad() const { return s_ && !s_->grad.empty(); }
  std::span<const double> grad() const { return s_->grad; }
  std::span<double> mutable_grad() const;  // handle semantics: grads live in shared storage
  void zero_grad();

  Tensor clone() const;   // deep copy of values, no grad
  Tensor detach() const { return clone(); }
  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

 private:
  std::shared_ptr<TensorStorage> s_;
};

// Define-by-run operation log. Ops record an entry whenever an input requires
// grad and a tape is active on the calling thread. Backward walks the entries
// in reverse recording order, each exactly once.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(Tensor output, BackwardFn fn);
  // Seeds d(loss)/d(loss) = seed and propagates to every recorded input.
  void backward(const Tensor& loss, double seed = 1.0);
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

Tape* active_tape();

// Installs a tape as the calling thread's active tape for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

void check_finite(const Tensor& t, const std::string& what);

}  // namespace estformer
