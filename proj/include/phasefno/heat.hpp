#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

namespace phasefno::heat {

using Complex = std::complex<double>;

/// omega(k) = sqrt(k^4 + 1), the closed-loop decay rate of wavenumber k.
double dispersion(double k);

/// a exp(-(x - c)^2 / (2 w^2)).
struct GaussianBump {
  double amplitude = 1.0;
  double center = 0.0;
  double width = 1.0;

  double operator()(double x) const;
  /// Fourier transform int f(x) e^{-ikx} dx.
  Complex transform(double k) const;
};

/// Heat equation phi_t = phi_xx + u on the real line with phi_d = 0, lambda = 1.
struct HeatLqrProblem {
  GaussianBump initial;
  double k_max = 12.0;
  std::size_t nk = 512;  // quadrature intervals on [-k_max, k_max], even

  void validate() const;
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Trapezoidal nodes and weights on [-k_max, k_max] (weights include 1/2pi) with
/// the transform coefficients of the optimal state and control.
struct Spectrum {
  std::vector<double> k;
  std::vector<double> weight;
  std::vector<Complex> state;    // phi0_hat(k)
  std::vector<Complex> control;  // (k^2 - omega(k)) phi0_hat(k)
};

Spectrum spectrum(const HeatLqrProblem& problem);

/// Real fields on the tensor grid xs x ts, stored x-major.
struct Fields {
  std::vector<double> xs;
  std::vector<double> ts;
  std::vector<double> state;
  std::vector<double> control;
  double max_imaginary = 0.0;

  double phi(std::size_t i, std::size_t j) const { return state[i * ts.size() + j]; }
  double u(std::size_t i, std::size_t j) const { return control[i * ts.size() + j]; }
};

/// sum_k w_k e^{ikx - omega(k) t} c_k on the grid; `max_imaginary` receives the
/// largest discarded imaginary part.
std::vector<double> synthesize(const Spectrum& spectrum, const std::vector<Complex>& coeffs,
                               const std::vector<double>& xs, const std::vector<double>& ts,
                               double& max_imaginary);

/// Optimal state and control. Throws QuadratureError if an imaginary residue
/// exceeds 1e-8.
Fields optimal_fields(const HeatLqrProblem& problem, const std::vector<double>& xs,
                      const std::vector<double>& ts);

std::vector<double> linspace(double a, double b, std::size_t n);

/// Max-norm residuals of phi_t - phi_xx - u and -psi_t - psi_xx + phi (psi = u),
/// by fourth-order central differences with spacing h on [x0, x1] x [t0, t1].
struct Residuals {
  double state = 0.0;
  double adjoint = 0.0;
};
Residuals optimality_residuals(const HeatLqrProblem& problem, double x0, double x1, double t0,
                               double t1, double h);

/// Space-time Gaussian bump a exp(-(x-xc)^2/(2 sx^2) - (t-tc)^2/(2 st^2)).
struct Perturbation {
  double amplitude = 1.0;
  double x_center = 0.0;
  double x_width = 1.0;
  double t_center = 1.0;
  double t_width = 0.3;
};

struct ProbeSettings {
  double x_extent = 15.0;  // window [-x_extent, x_extent]
  double t_end = 12.0;
  std::size_t nx = 301;
  std::size_t nt = 601;
  double epsilon = 1e-2;
  double tolerance = 0.0;
};

struct ProbeEntry {
  double plus = 0.0;   // J(u* + eps d)
  double minus = 0.0;  // J(u* - eps d)
};

struct ProbeReport {
  double base = 0.0;  // J(u*)
  std::vector<ProbeEntry> entries;
  bool optimal = true;  // J(u*) <= J(u* +- eps d) + tol for every entry
};

/// Truncated-domain cost comparison J(u*) against J(u* +- eps d).
ProbeReport cost_optimality_probe(const HeatLqrProblem& problem,
                                  const std::vector<Perturbation>& perturbations,
                                  const ProbeSettings& settings = {});

}  // namespace phasefno::heat
