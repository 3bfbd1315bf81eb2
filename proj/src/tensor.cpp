#include "phasefno/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>

namespace phasefno::ad {

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
  if (dtype_ == DType::real64) {
    real_.assign(product(shape_), 0.0);
  } else {
    complex_.assign(product(shape_), Complex{});
  }
}

Tensor Tensor::real(Shape shape, std::vector<double> values) {
  if (product(shape) != values.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.dtype_ = DType::real64;
  t.real_ = std::move(values);
  return t;
}

Tensor Tensor::complex(Shape shape, std::vector<Complex> values) {
  if (product(shape) != values.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.dtype_ = DType::complex128;
  t.complex_ = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value) { return real({}, {value}); }

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape_, other.dtype_); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(shape_));
  }
  return shape_[axis];
}

std::span<double> Tensor::real_data() {
  require_real(*this, "real_data");
  return real_;
}

std::span<const double> Tensor::real_data() const {
  require_real(*this, "real_data");
  return real_;
}

std::span<Complex> Tensor::complex_data() {
  require_complex(*this, "complex_data");
  return complex_;
}

std::span<const Complex> Tensor::complex_data() const {
  require_complex(*this, "complex_data");
  return complex_;
}

double Tensor::item() const {
  require_real(*this, "item");
  if (real_.size() != 1) {
    throw ShapeError("item: expected a single element, got shape " + to_string(shape_));
  }
  return real_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (product(shape) != numel()) {
    throw ShapeError("reshape: cannot view " + to_string(shape_) + " as " + to_string(shape));
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

void Tensor::accumulate(const Tensor& other) {
  if (other.dtype_ != dtype_ || other.numel() != numel()) {
    throw ShapeError("accumulate: " + to_string(shape_) + " vs " + to_string(other.shape_));
  }
  if (dtype_ == DType::real64) {
    for (std::size_t i = 0; i < real_.size(); ++i) real_[i] += other.real_[i];
  } else {
    for (std::size_t i = 0; i < complex_.size(); ++i) complex_[i] += other.complex_[i];
  }
}

void Tensor::fill_zero() {
  std::fill(real_.begin(), real_.end(), 0.0);
  std::fill(complex_.begin(), complex_.end(), Complex{});
}

void require_real(const Tensor& t, const char* op) {
  if (t.is_complex()) throw ShapeError(std::string(op) + ": expected a real tensor");
}

void require_complex(const Tensor& t, const char* op) {
  if (!t.is_complex()) throw ShapeError(std::string(op) + ": expected a complex tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

}  // namespace phasefno::ad
