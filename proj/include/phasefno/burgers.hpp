#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "phasefno/grid.hpp"

namespace phasefno::burgers {

/// Crank-Nicolson diffusion with explicit conservative central advection on a
/// grid refined from the output grid by (refine_x, refine_t).
struct SolverConfig {
  double viscosity = 0.05;
  GridSpec grid;
  std::size_t refine_x = 8;
  std::size_t refine_t = 32;
  double blowup = 1e3;

  void validate() const;
  GridSpec internal_grid() const;
};

/// phi_t + phi phi_x = nu phi_xx + u on [0, Lx] x [0, Lt].
///
/// `initial`, `left` and `right` are samples on uniform grids over their
/// interval (any length >= 2) and are interpolated linearly. `forcing` may live
/// on any grid covering the same domain and is interpolated bilinearly; absent
/// means zero.
struct BurgersProblem {
  SolverConfig solver;
  std::vector<double> initial;
  std::vector<double> left;
  std::vector<double> right;
  std::optional<Field2D> forcing;

  void validate() const;
};

class InstabilityError : public std::runtime_error {
 public:
  InstabilityError(std::size_t step, double magnitude);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Every internal time level, level-major: value(n, j) = levels[n * nx + j].
struct Trajectory {
  GridSpec internal;
  std::vector<double> levels;

  double operator()(std::size_t n, std::size_t j) const { return levels[n * internal.nx + j]; }
};

Trajectory integrate(const BurgersProblem& problem);

/// Samples the trajectory on the output grid.
Field2D restrict_to_output(const Trajectory& trajectory, const SolverConfig& solver);

Field2D solve(const BurgersProblem& problem);

/// Linear interpolation of uniform samples at node `index` of a uniform grid of
/// `count` nodes over the same interval.
double interpolate(const std::vector<double>& samples, std::size_t index, std::size_t count);

/// Bilinear interpolation of a field onto the internal grid, with its transpose.
class ForcingMap {
 public:
  ForcingMap(const GridSpec& source, const GridSpec& target);

  /// Values at internal level n for all nx target nodes.
  void level(const Field2D& field, std::size_t n, std::vector<double>& out) const;
  /// Adds the transpose of level() applied to `grad` (target nodes) into `field_grad`.
  void level_transpose(const std::vector<double>& grad, std::size_t n,
                       std::vector<double>& field_grad) const;

 private:
  struct Stencil {
    std::size_t lo;
    double w;
  };
  static std::vector<Stencil> stencils(std::size_t source_n, std::size_t target_n);
  GridSpec source_;
  std::vector<Stencil> sx_;
  std::vector<Stencil> st_;
};

/// Constant-coefficient tridiagonal system (-r, 1 + 2r, -r) of size m, factored once.
class TridiagonalSolver {
 public:
  TridiagonalSolver(std::size_t size, double r);
  /// Solves in place.
  void solve(double* rhs) const;

 private:
  double r_;
  std::vector<double> inv_denominator_;
  std::vector<double> upper_;
};

}  // namespace phasefno::burgers
