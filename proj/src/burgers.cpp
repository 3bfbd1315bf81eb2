#include "phasefno/burgers.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace phasefno::burgers {

void SolverConfig::validate() const {
  grid.validate();
  if (!(viscosity > 0.0)) throw std::invalid_argument("burgers: viscosity must be positive");
  if (refine_x < 1 || refine_t < 1) {
    throw std::invalid_argument("burgers: refinement factors must be at least 1");
  }
  if (!(blowup > 0.0)) throw std::invalid_argument("burgers: blow-up threshold must be positive");
}

GridSpec SolverConfig::internal_grid() const {
  return {(grid.nx - 1) * refine_x + 1, (grid.nt - 1) * refine_t + 1, grid.length_x,
          grid.length_t};
}

void BurgersProblem::validate() const {
  solver.validate();
  if (initial.size() < 2) throw std::invalid_argument("burgers: initial profile needs 2+ samples");
  if (left.size() < 2 || right.size() < 2) {
    throw std::invalid_argument("burgers: boundary data needs 2+ samples");
  }
  if (forcing && (forcing->grid().length_x != solver.grid.length_x ||
                  forcing->grid().length_t != solver.grid.length_t)) {
    throw std::invalid_argument("burgers: forcing grid does not cover the domain");
  }
}

namespace {
std::string instability_message(std::size_t step, double magnitude) {
  std::ostringstream out;
  out << "burgers: solution magnitude " << magnitude << " exceeded the blow-up threshold at step "
      << step;
  return out.str();
}
}  // namespace

InstabilityError::InstabilityError(std::size_t step, double magnitude)
    : std::runtime_error(instability_message(step, magnitude)), step_(step) {}

double interpolate(const std::vector<double>& samples, std::size_t index, std::size_t count) {
  const double pos = static_cast<double>(index * (samples.size() - 1)) / static_cast<double>(count - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo >= samples.size() - 1) lo = samples.size() - 2;
  const double w = pos - static_cast<double>(lo);
  if (w == 0.0) return samples[lo];
  return (1.0 - w) * samples[lo] + w * samples[lo + 1];
}

std::vector<ForcingMap::Stencil> ForcingMap::stencils(std::size_t source_n,
                                                      std::size_t target_n) {
  std::vector<Stencil> out(target_n);
  for (std::size_t j = 0; j < target_n; ++j) {
    // Exact rational position avoids rounding at shared nodes.
    const double pos = static_cast<double>(j * (source_n - 1)) / static_cast<double>(target_n - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    if (lo >= source_n - 1) lo = source_n - 2;
    out[j] = {lo, pos - static_cast<double>(lo)};
  }
  return out;
}

ForcingMap::ForcingMap(const GridSpec& source, const GridSpec& target)
    : source_(source),
      sx_(stencils(source.nx, target.nx)),
      st_(stencils(source.nt, target.nt)) {}

void ForcingMap::level(const Field2D& field, std::size_t n, std::vector<double>& out) const {
  const auto& d = field.data();
  const std::size_t nt = source_.nt;
  const auto [k, wt] = st_[n];
  out.resize(sx_.size());
  for (std::size_t j = 0; j < sx_.size(); ++j) {
    const auto [i, wx] = sx_[j];
    const double a = (1.0 - wt) * d[i * nt + k] + (wt == 0.0 ? 0.0 : wt * d[i * nt + k + 1]);
    const double b = wx == 0.0 ? 0.0
                               : (1.0 - wt) * d[(i + 1) * nt + k] +
                                     (wt == 0.0 ? 0.0 : wt * d[(i + 1) * nt + k + 1]);
    out[j] = (1.0 - wx) * a + wx * b;
  }
}

void ForcingMap::level_transpose(const std::vector<double>& grad, std::size_t n,
                                 std::vector<double>& field_grad) const {
  const std::size_t nt = source_.nt;
  const auto [k, wt] = st_[n];
  for (std::size_t j = 0; j < sx_.size(); ++j) {
    const double g = grad[j];
    if (g == 0.0) continue;
    const auto [i, wx] = sx_[j];
    field_grad[i * nt + k] += (1.0 - wx) * (1.0 - wt) * g;
    if (wt != 0.0) field_grad[i * nt + k + 1] += (1.0 - wx) * wt * g;
    if (wx != 0.0) {
      field_grad[(i + 1) * nt + k] += wx * (1.0 - wt) * g;
      if (wt != 0.0) field_grad[(i + 1) * nt + k + 1] += wx * wt * g;
    }
  }
}

TridiagonalSolver::TridiagonalSolver(std::size_t size, double r)
    : r_(r), inv_denominator_(size), upper_(size) {
  const double diag = 1.0 + 2.0 * r;
  double prev = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double denom = diag + r * prev;  // diag - (-r) * upper[i-1]
    inv_denominator_[i] = 1.0 / denom;
    upper_[i] = -r / denom;
    prev = upper_[i];
  }
}

void TridiagonalSolver::solve(double* d) const {
  const std::size_t m = upper_.size();
  if (m == 0) return;
  d[0] *= inv_denominator_[0];
  for (std::size_t i = 1; i < m; ++i) d[i] = (d[i] + r_ * d[i - 1]) * inv_denominator_[i];
  for (std::size_t i = m - 1; i-- > 0;) d[i] -= upper_[i] * d[i + 1];
}

Trajectory integrate(const BurgersProblem& p) {
  p.validate();
  const GridSpec in = p.solver.internal_grid();
  const std::size_t nx = in.nx;
  const std::size_t nt = in.nt;
  const double dx = in.dx();
  const double dt = in.dt();
  const double r = p.solver.viscosity * dt / (2.0 * dx * dx);
  const double adv = dt / (4.0 * dx);

  Trajectory traj{in, std::vector<double>(nx * nt)};
  for (std::size_t j = 0; j < nx; ++j) {
    traj.levels[j] = interpolate(p.initial, j, nx);
  }

  std::optional<ForcingMap> map;
  if (p.forcing) map.emplace(p.forcing->grid(), in);
  std::vector<double> f_prev(nx, 0.0), f_next(nx, 0.0);
  if (map) map->level(*p.forcing, 0, f_prev);

  const TridiagonalSolver implicit(nx - 2, r);
  for (std::size_t n = 0; n + 1 < nt; ++n) {
    const double* cur = traj.levels.data() + n * nx;
    double* next = traj.levels.data() + (n + 1) * nx;
    if (map) map->level(*p.forcing, n + 1, f_next);
    next[0] = interpolate(p.left, n + 1, nt);
    next[nx - 1] = interpolate(p.right, n + 1, nt);
    for (std::size_t j = 1; j + 1 < nx; ++j) {
      next[j] = cur[j] + r * (cur[j - 1] - 2.0 * cur[j] + cur[j + 1]) -
                adv * (cur[j + 1] * cur[j + 1] - cur[j - 1] * cur[j - 1]) +
                0.5 * dt * (f_prev[j] + f_next[j]);
    }
    next[1] += r * next[0];
    next[nx - 2] += r * next[nx - 1];
    implicit.solve(next + 1);

    for (std::size_t j = 0; j < nx; ++j) {
      const double a = std::abs(next[j]);
      if (!(a <= p.solver.blowup)) throw InstabilityError(n + 1, a);
    }
    std::swap(f_prev, f_next);
  }
  return traj;
}

Field2D restrict_to_output(const Trajectory& traj, const SolverConfig& solver) {
  const GridSpec& g = solver.grid;
  Field2D out(g);
  for (std::size_t i = 0; i < g.nx; ++i) {
    for (std::size_t j = 0; j < g.nt; ++j) {
      out(i, j) = traj(j * solver.refine_t, i * solver.refine_x);
    }
  }
  return out;
}

Field2D solve(const BurgersProblem& problem) {
  return restrict_to_output(integrate(problem), problem.solver);
}

}  // namespace phasefno::burgers
