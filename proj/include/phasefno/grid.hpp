#pragma once

#include <cstddef>
#include <vector>

namespace phasefno {

/// Uniform space-time grid on [0, length_x] x [0, length_t], endpoints included.
struct GridSpec {
  std::size_t nx = 24;
  std::size_t nt = 30;
  double length_x = 1.0;
  double length_t = 0.5;

  void validate() const;
  double dx() const { return length_x / static_cast<double>(nx - 1); }
  double dt() const { return length_t / static_cast<double>(nt - 1); }
  double x(std::size_t i) const { return length_x * static_cast<double>(i) / static_cast<double>(nx - 1); }
  double t(std::size_t j) const { return length_t * static_cast<double>(j) / static_cast<double>(nt - 1); }
  std::size_t points() const { return nx * nt; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Real scalar field on a GridSpec, stored x-major: value(i, j) = data[i * nt + j].
class Field2D {
 public:
  Field2D() = default;
  explicit Field2D(GridSpec grid, double fill = 0.0);
  Field2D(GridSpec grid, std::vector<double> values);

  const GridSpec& grid() const { return grid_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * grid_.nt + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * grid_.nt + j]; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Field2D&, const Field2D&) = default;

 private:
  GridSpec grid_;
  std::vector<double> data_;
};

/// Trapezoidal quadrature weights on the grid (dx * dt, halved on each boundary axis).
std::vector<double> trapezoid_weights(const GridSpec& grid);

}  // namespace phasefno
