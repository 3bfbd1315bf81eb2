#include "phasefno/control.hpp"

#include <cmath>
#include <string>

namespace phasefno::control {

void ControlProblem::validate() const {
  state.validate();
  if (!(regularization > 0.0)) throw std::invalid_argument("control: lambda must be positive");
  if (desired.grid() != state.solver.grid) {
    throw std::invalid_argument("control: desired state must live on the output grid");
  }
  for (double v : desired.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("control: desired state is not finite");
  }
  const OptimizerConfig& o = optimizer;
  if (o.max_iterations < 0 || o.max_halvings < 0 || !(o.initial_step > 0.0) || !(o.armijo > 0.0)) {
    throw std::invalid_argument("control: invalid optimizer settings");
  }
}

namespace {

burgers::BurgersProblem with_forcing(const ControlProblem& p, const Field2D& control) {
  if (control.grid() != p.state.solver.grid) {
    throw std::invalid_argument("control: control must live on the output grid");
  }
  burgers::BurgersProblem b = p.state;
  b.forcing = control;
  return b;
}

double cost_of(const Field2D& state, const Field2D& control, const ControlProblem& p,
               const std::vector<double>& w) {
  double j = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double e = state.data()[k] - p.desired.data()[k];
    const double u = control.data()[k];
    j += w[k] * (e * e + p.regularization * u * u);
  }
  return j;
}

}  // namespace

CostResult evaluate_cost(const Field2D& control, const ControlProblem& p) {
  p.validate();
  Field2D state = burgers::solve(with_forcing(p, control));
  const double j = cost_of(state, control, p, trapezoid_weights(p.state.solver.grid));
  return {j, std::move(state)};
}

GradientResult gradient(const Field2D& control, const ControlProblem& p) {
  p.validate();
  const burgers::BurgersProblem bp = with_forcing(p, control);
  const burgers::Trajectory traj = burgers::integrate(bp);
  const burgers::SolverConfig& sc = bp.solver;
  const GridSpec& out = sc.grid;
  const GridSpec& in = traj.internal;
  const std::vector<double> w = trapezoid_weights(out);
  Field2D state = burgers::restrict_to_output(traj, sc);
  const double j = cost_of(state, control, p, w);

  const std::size_t nx = in.nx;
  const std::size_t nt = in.nt;
  const double dx = in.dx();
  const double dt = in.dt();
  const double r = sc.viscosity * dt / (2.0 * dx * dx);

  const burgers::ForcingMap map(out, in);
  const burgers::TridiagonalSolver implicit(nx - 2, r);
  Field2D grad(out);
  std::vector<double> lam(nx, 0.0), mu(nx, 0.0), g_level(nx, 0.0), g_prev(nx, 0.0);

  // Direct cost sensitivity at internal level n (interior output nodes only).
  auto add_direct = [&](std::size_t n, std::vector<double>& into) {
    if (n % sc.refine_t != 0) return;
    const std::size_t jt = n / sc.refine_t;
    for (std::size_t i = 1; i + 1 < out.nx; ++i) {
      const std::size_t k = i * out.nt + jt;
      into[i * sc.refine_x] += 2.0 * w[k] * (state.data()[k] - p.desired.data()[k]);
    }
  };

  // g_level holds dJ/dF at level n, completed once both adjacent steps are processed.
  add_direct(nt - 1, lam);
  for (std::size_t n = nt - 1; n >= 1; --n) {
    std::fill(mu.begin(), mu.end(), 0.0);
    std::copy(lam.begin() + 1, lam.end() - 1, mu.begin() + 1);
    implicit.solve(mu.data() + 1);
    for (std::size_t k = 1; k + 1 < nx; ++k) {
      g_level[k] += 0.5 * dt * mu[k];
      g_prev[k] = 0.5 * dt * mu[k];
    }
    map.level_transpose(g_level, n, grad.data());
    std::swap(g_level, g_prev);

    const double* phi = traj.levels.data() + (n - 1) * nx;
    for (std::size_t k = 1; k + 1 < nx; ++k) {
      lam[k] = (1.0 - 2.0 * r) * mu[k] + r * (mu[k - 1] + mu[k + 1]) +
               dt * phi[k] * (mu[k + 1] - mu[k - 1]) / (2.0 * dx);
    }
    add_direct(n - 1, lam);
  }
  map.level_transpose(g_level, 0, grad.data());

  for (std::size_t k = 0; k < w.size(); ++k) {
    grad.data()[k] += 2.0 * p.regularization * w[k] * control.data()[k];
  }
  return {j, std::move(state), std::move(grad)};
}

double dual_norm(const Field2D& g) {
  const std::vector<double> w = trapezoid_weights(g.grid());
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) s += g.data()[k] * g.data()[k] / w[k];
  return std::sqrt(s);
}

LineSearchError::LineSearchError(int iteration, Field2D iterate)
    : std::runtime_error("control: line search failed at iteration " + std::to_string(iteration)),
      iteration_(iteration),
      iterate_(std::move(iterate)) {}

OptimizeResult optimize(const ControlProblem& p) {
  p.validate();
  const OptimizerConfig& o = p.optimizer;
  const GridSpec& grid = p.state.solver.grid;
  const std::vector<double> w = trapezoid_weights(grid);

  OptimizeResult res;
  res.control = Field2D(grid);
  GradientResult cur = gradient(res.control, p);
  res.history.push_back(cur.cost);
  const double g0 = dual_norm(cur.gradient);
  double step = o.initial_step;

  for (int it = 0;; ++it) {
    const double gn = dual_norm(cur.gradient);
    res.gradient_ratio = g0 > 0.0 ? gn / g0 : 0.0;
    if (g0 == 0.0 || res.gradient_ratio < o.tolerance) {
      res.converged = true;
      break;
    }
    if (it >= o.max_iterations) break;

    // Direction: the L2 gradient, i.e. the Euclidean gradient divided by the weights.
    Field2D dir(grid);
    double slope = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      dir.data()[k] = -cur.gradient.data()[k] / w[k];
      slope += cur.gradient.data()[k] * dir.data()[k];
    }

    bool accepted = false;
    Field2D trial(grid);
    CostResult tc{0.0, Field2D(grid)};
    for (int h = 0; h <= o.max_halvings; ++h, step *= 0.5) {
      for (std::size_t k = 0; k < w.size(); ++k) {
        trial.data()[k] = res.control.data()[k] + step * dir.data()[k];
      }
      try {
        tc = evaluate_cost(trial, p);
      } catch (const burgers::InstabilityError&) {
        continue;
      }
      if (tc.cost <= cur.cost + o.armijo * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) throw LineSearchError(it, res.control);

    res.control = std::move(trial);
    cur = gradient(res.control, p);
    res.history.push_back(cur.cost);
    res.iterations = it + 1;
    step = std::min(2.0 * step, o.initial_step);
  }
  res.state = cur.state;
  return res;
}

}  // namespace phasefno::control
