#include "estformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace estformer {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t checked_numel(const Shape& shape) {
  if (shape.empty() || shape.size() > 3) {
    throw ShapeError("tensor rank must be 1..3, got " + std::to_string(shape.size()));
  }
  std::size_t n = 1;
  for (auto d : shape) {
    if (d == 0) throw ShapeError("zero-sized dimension in " + shape_str(shape));
    n *= d;
  }
  return n;
}

thread_local Tape* g_active_tape = nullptr;

}  // namespace

Tensor::Tensor(Shape shape, double fill) : s_(std::make_shared<TensorStorage>()) {
  const std::size_t n = checked_numel(shape);
  s_->shape = std::move(shape);
  s_->values.assign(n, fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : s_(std::make_shared<TensorStorage>()) {
  const std::size_t n = checked_numel(shape);
  if (values.size() != n) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  }
  s_->shape = std::move(shape);
  s_->values.assign(values.begin(), values.end());
}

Tensor Tensor::scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(v));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on non-matrix " + shape_str(shape()));
  return s_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on non-matrix " + shape_str(shape()));
  return s_->shape[1];
}

double Tensor::at(std::size_t r, std::size_t c) const { return s_->values[r * cols() + c]; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return s_->values[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  s_->requires_grad = on;
  if (on) {
    s_->grad.assign(s_->values.size(), 0.0);
  } else {
    s_->grad.clear();
  }
  return *this;
}

std::span<double> Tensor::mutable_grad() const {
  if (s_->grad.empty()) s_->grad.assign(s_->values.size(), 0.0);
  return s_->grad;
}

void Tensor::zero_grad() {
  if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor out;
  out.s_ = std::make_shared<TensorStorage>();
  out.s_->shape = s_->shape;
  out.s_->values = s_->values;
  return out;
}

void Tape::record(Tensor output, BackwardFn fn) { entries_.push_back({std::move(output), std::move(fn)}); }

void Tape::backward(const Tensor& loss, double seed) {
  if (loss.size() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;
  Tensor root = loss;
  root.mutable_grad()[0] += seed;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // not on any path to the loss
    it->fn();
  }
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void check_finite(const Tensor& t, const std::string& what) {
  const auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError("non-finite value in " + what + " at flat index " + std::to_string(i));
    }
  }
}

}  // namespace estformer
