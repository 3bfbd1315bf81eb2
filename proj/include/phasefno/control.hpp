#pragma once

#include <stdexcept>
#include <vector>

#include "phasefno/burgers.hpp"
#include "phasefno/grid.hpp"

namespace phasefno::control {

struct OptimizerConfig {
  int max_iterations = 200;
  double tolerance = 1e-3;  // on ||grad J|| / ||grad J(0)||
  double armijo = 1e-4;
  int max_halvings = 40;
  double initial_step = 4.0;
};

/// min_u J(u) = int |phi - phi_d|^2 + lambda |u|^2 subject to Burgers with forcing u.
/// The control lives on the solver's output grid; `state.forcing` is ignored.
struct ControlProblem {
  burgers::BurgersProblem state;
  Field2D desired;
  double regularization = 0.1;
  OptimizerConfig optimizer;

  void validate() const;
};

struct CostResult {
  double cost;
  Field2D state;
};

/// Trapezoidal quadrature of the cost on the output grid.
CostResult evaluate_cost(const Field2D& control, const ControlProblem& problem);

struct GradientResult {
  double cost;
  Field2D state;
  /// dJ/du_p for each grid value (discrete adjoint of the solver).
  Field2D gradient;
};

GradientResult gradient(const Field2D& control, const ControlProblem& problem);

/// L2 inner product with trapezoid weights: sum_p a_p b_p / w_p for Euclidean gradients.
double dual_norm(const Field2D& gradient);

struct OptimizeResult {
  Field2D control;
  Field2D state;
  std::vector<double> history;
  int iterations = 0;
  double gradient_ratio = 0.0;
  bool converged = false;
};

class LineSearchError : public std::runtime_error {
 public:
  LineSearchError(int iteration, Field2D iterate);
  int iteration() const { return iteration_; }
  const Field2D& iterate() const { return iterate_; }

 private:
  int iteration_;
  Field2D iterate_;
};

/// Preconditioned steepest descent from u = 0 with Armijo backtracking.
OptimizeResult optimize(const ControlProblem& problem);

}  // namespace phasefno::control
