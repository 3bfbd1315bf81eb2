#include "phasefno/grid.hpp"

#include <stdexcept>
#include <string>

namespace phasefno {

void GridSpec::validate() const {
  if (nx < 2 || nt < 2) {
    throw std::invalid_argument("grid: need at least 2 points per axis, got " +
                                std::to_string(nx) + "x" + std::to_string(nt));
  }
  if (!(length_x > 0.0) || !(length_t > 0.0)) {
    throw std::invalid_argument("grid: extents must be positive");
  }
}

Field2D::Field2D(GridSpec grid, double fill) : grid_(grid) {
  grid_.validate();
  data_.assign(grid_.points(), fill);
}

Field2D::Field2D(GridSpec grid, std::vector<double> values) : grid_(grid), data_(std::move(values)) {
  grid_.validate();
  if (data_.size() != grid_.points()) {
    throw std::invalid_argument("field: " + std::to_string(data_.size()) +
                                " values for a grid of " + std::to_string(grid_.points()));
  }
}

std::vector<double> trapezoid_weights(const GridSpec& grid) {
  std::vector<double> w(grid.points());
  const double cell = grid.dx() * grid.dt();
  for (std::size_t i = 0; i < grid.nx; ++i) {
    const double wx = (i == 0 || i + 1 == grid.nx) ? 0.5 : 1.0;
    for (std::size_t j = 0; j < grid.nt; ++j) {
      const double wt = (j == 0 || j + 1 == grid.nt) ? 0.5 : 1.0;
      w[i * grid.nt + j] = cell * wx * wt;
    }
  }
  return w;
}

}  // namespace phasefno
