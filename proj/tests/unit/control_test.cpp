#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "phasefno/control.hpp"
#include "phasefno/grf.hpp"

using namespace phasefno;
using namespace phasefno::control;

namespace {

constexpr double kPi = std::numbers::pi;

ControlProblem random_problem(std::uint64_t seed, double lambda = 0.1) {
  ControlProblem p;
  const GridSpec& g = p.state.solver.grid;
  grf::GrfConfig gc;
  gc.points = g.nt;
  gc.seed = seed;
  const auto s = grf::sample(gc, 2);
  p.state.initial.resize(g.nx);
  for (std::size_t i = 0; i < g.nx; ++i) p.state.initial[i] = std::sin(kPi * g.x(i));
  p.state.left = s[0];
  p.state.right = s[1];
  p.desired = Field2D(g);
  p.regularization = lambda;
  return p;
}

Field2D random_field(const GridSpec& g, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Field2D f(g);
  for (double& v : f.data()) v = d(rng);
  return f;
}

double dot(const Field2D& a, const Field2D& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) s += a.data()[k] * b.data()[k];
  return s;
}

Field2D axpy(const Field2D& x, double a, const Field2D& d) {
  Field2D out = x;
  for (std::size_t k = 0; k < out.data().size(); ++k) out.data()[k] += a * d.data()[k];
  return out;
}

}  // namespace

TEST(Cost, ZeroAtPerfectTracking) {
  ControlProblem p = random_problem(1);
  const Field2D zero(p.state.solver.grid);
  p.desired = burgers::solve(p.state);
  EXPECT_EQ(evaluate_cost(zero, p).cost, 0.0);
  const GradientResult g = gradient(zero, p);
  for (double v : g.gradient.data()) EXPECT_EQ(v, 0.0);
}

TEST(Cost, ZeroControlIsStateEnergy) {
  const ControlProblem p = random_problem(2);
  const Field2D zero(p.state.solver.grid);
  const CostResult c = evaluate_cost(zero, p);
  const auto w = trapezoid_weights(p.state.solver.grid);
  double energy = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) energy += w[k] * c.state.data()[k] * c.state.data()[k];
  EXPECT_GT(c.cost, 0.0);
  EXPECT_NEAR(c.cost, energy, 1e-14);
}

TEST(Cost, LinearInRegularization) {
  std::mt19937_64 rng(3);
  ControlProblem p = random_problem(3);
  const Field2D u = random_field(p.state.solver.grid, rng);
  const double j1 = evaluate_cost(u, p).cost;
  const auto w = trapezoid_weights(p.state.solver.grid);
  double u2 = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) u2 += w[k] * u.data()[k] * u.data()[k];
  p.regularization *= 2.0;
  EXPECT_NEAR(evaluate_cost(u, p).cost - j1, 0.1 * u2, 1e-12);
}

TEST(Cost, RejectsInvalidProblems) {
  ControlProblem p = random_problem(4);
  const Field2D zero(p.state.solver.grid);
  p.regularization = 0.0;
  EXPECT_THROW(evaluate_cost(zero, p), std::invalid_argument);
  p = random_problem(4);
  p.desired.data()[3] = std::nan("");
  EXPECT_THROW(evaluate_cost(zero, p), std::invalid_argument);
  p = random_problem(4);
  EXPECT_THROW(evaluate_cost(Field2D(GridSpec{5, 5, 1.0, 0.5}), p), std::invalid_argument);
}

// Finite-difference oracle for the discrete adjoint.
TEST(Gradient, MatchesDirectionalDerivatives) {
  for (std::uint64_t seed : {10, 11, 12}) {
    std::mt19937_64 rng(seed);
    ControlProblem p = random_problem(seed);
    p.desired = random_field(p.state.solver.grid, rng, 0.5);
    const Field2D u = random_field(p.state.solver.grid, rng);
    const GradientResult g = gradient(u, p);
    EXPECT_DOUBLE_EQ(g.cost, evaluate_cost(u, p).cost);
    const double eps = 1e-5;
    for (int k = 0; k < 10; ++k) {
      const Field2D d = random_field(p.state.solver.grid, rng);
      const double fd =
          (evaluate_cost(axpy(u, eps, d), p).cost - evaluate_cost(axpy(u, -eps, d), p).cost) /
          (2.0 * eps);
      const double ad = dot(g.gradient, d);
      EXPECT_LT(std::abs(fd - ad) / std::abs(fd), 1e-3) << "seed " << seed << " dir " << k;
    }
  }
}

TEST(Gradient, CoarseInternalGrid) {
  std::mt19937_64 rng(5);
  ControlProblem p = random_problem(5);
  p.state.solver.refine_x = 2;
  p.state.solver.refine_t = 3;
  p.desired = random_field(p.state.solver.grid, rng, 0.5);
  const Field2D u = random_field(p.state.solver.grid, rng);
  const Field2D d = random_field(p.state.solver.grid, rng);
  const double eps = 1e-6;
  const double fd = (evaluate_cost(axpy(u, eps, d), p).cost - evaluate_cost(axpy(u, -eps, d), p).cost) /
                    (2.0 * eps);
  EXPECT_NEAR(dot(gradient(u, p).gradient, d) / fd, 1.0, 1e-6);
}

TEST(Optimize, KnownOptimumAtZero) {
  ControlProblem p = random_problem(6);
  p.desired = burgers::solve(p.state);
  const OptimizeResult r = optimize(p);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0);
  for (double v : r.control.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(r.history.back(), 0.0);
}

TEST(Optimize, MonotoneDescentAndLocalOptimality) {
  const ControlProblem p = random_problem(7);
  const OptimizeResult r = optimize(p);
  EXPECT_TRUE(r.converged) << r.gradient_ratio;
  ASSERT_GE(r.history.size(), 2u);
  for (std::size_t k = 1; k < r.history.size(); ++k) EXPECT_LE(r.history[k], r.history[k - 1]);
  EXPECT_LT(r.history.back(), r.history.front());
  EXPECT_DOUBLE_EQ(r.history.back(), evaluate_cost(r.control, p).cost);

  std::mt19937_64 rng(8);
  const double j = r.history.back();
  for (int k = 0; k < 20; ++k) {
    const Field2D d = random_field(p.state.solver.grid, rng);
    EXPECT_LE(j, evaluate_cost(axpy(r.control, 1e-2, d), p).cost) << k;
  }
}

TEST(Optimize, StrongRegularizationShrinksControl) {
  double previous = 1e300;
  for (double lambda : {0.1, 10.0, 1000.0}) {
    const OptimizeResult r = optimize(random_problem(9, lambda));
    const double size = std::sqrt(dot(r.control, r.control));
    EXPECT_LT(size, previous);
    previous = size;
  }
  EXPECT_LT(previous, 1e-2);
}

// Mirroring x -> 1 - x flips the sign of the solution, so the mirrored problem
// has phi0' = -phi0(1 - x), g' = -h, h' = -g, phi_d' = -phi_d(1 - x).
TEST(Optimize, MirrorSymmetry) {
  std::mt19937_64 rng(10);
  ControlProblem p = random_problem(11);
  p.desired = random_field(p.state.solver.grid, rng, 0.3);
  const GridSpec& g = p.state.solver.grid;
  ControlProblem q = p;
  for (std::size_t i = 0; i < g.nx; ++i) q.state.initial[i] = -p.state.initial[g.nx - 1 - i];
  q.state.left = p.state.right;
  q.state.right = p.state.left;
  for (double& v : q.state.left) v = -v;
  for (double& v : q.state.right) v = -v;
  for (std::size_t i = 0; i < g.nx; ++i) {
    for (std::size_t j = 0; j < g.nt; ++j) q.desired(i, j) = -p.desired(g.nx - 1 - i, j);
  }
  const OptimizeResult a = optimize(p);
  const OptimizeResult b = optimize(q);
  double scale = 0.0;
  for (double v : a.control.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < g.nx; ++i) {
    for (std::size_t j = 0; j < g.nt; ++j) {
      EXPECT_NEAR(b.control(i, j), -a.control(g.nx - 1 - i, j), 1e-6 * scale);
    }
  }
}

TEST(Optimize, LineSearchFailureCarriesIterate) {
  ControlProblem p = random_problem(12);
  p.optimizer.initial_step = 1e9;
  p.optimizer.max_halvings = 0;
  try {
    optimize(p);
    FAIL() << "expected LineSearchError";
  } catch (const LineSearchError& e) {
    EXPECT_EQ(e.iteration(), 0);
    EXPECT_EQ(e.iterate().grid(), p.state.solver.grid);
  }
}
