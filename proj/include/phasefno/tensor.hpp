#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace phasefno::ad {

using Complex = std::complex<double>;
using Shape = std::vector<std::size_t>;

enum class DType { real64, complex128 };

/// Thrown when operands do not conform to an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string to_string(const Shape& shape);
std::size_t product(const Shape& shape);

/// Dense row-major array of float64 or complex128 values.
///
/// Exactly one of the two backing stores is populated, selected by dtype.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = DType::real64);

  static Tensor real(Shape shape, std::vector<double> values);
  static Tensor complex(Shape shape, std::vector<Complex> values);
  static Tensor scalar(double value);
  static Tensor zeros_like(const Tensor& other);

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return product(shape_); }
  DType dtype() const { return dtype_; }
  bool is_complex() const { return dtype_ == DType::complex128; }

  std::span<double> real_data();
  std::span<const double> real_data() const;
  std::span<Complex> complex_data();
  std::span<const Complex> complex_data() const;

  /// Scalar value of a real tensor with a single element.
  double item() const;

  Tensor reshaped(Shape shape) const;

  /// Elementwise accumulation; shapes and dtypes must match.
  void accumulate(const Tensor& other);
  void fill_zero();

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  DType dtype_ = DType::real64;
  std::vector<double> real_;
  std::vector<Complex> complex_;
};

void require_real(const Tensor& t, const char* op);
void require_complex(const Tensor& t, const char* op);
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace phasefno::ad
