#include "phasefno/heat.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

namespace phasefno::heat {

namespace {

constexpr double kPi = std::numbers::pi;
using CMat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> trapezoid(const std::vector<double>& nodes) {
  std::vector<double> w(nodes.size(), 0.0);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double h = nodes[i + 1] - nodes[i];
    w[i] += 0.5 * h;
    w[i + 1] += 0.5 * h;
  }
  return w;
}

// rows(x) x cols(k) matrix e^{ikx} scaled per column.
CMat plane_waves(const Spectrum& s, const std::vector<Complex>& coeffs, const std::vector<double>& xs) {
  CMat e(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(s.k.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t m = 0; m < s.k.size(); ++m) {
      e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) =
          std::polar(s.weight[m], s.k[m] * xs[i]) * coeffs[m];
    }
  }
  return e;
}

std::vector<double> real_or_throw(const CMat& f, double& max_imag) {
  std::vector<double> out(static_cast<std::size_t>(f.size()));
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    for (Eigen::Index c = 0; c < f.cols(); ++c) {
      const Complex z = f(r, c);
      max_imag = std::max(max_imag, std::abs(z.imag()));
      out[static_cast<std::size_t>(r * f.cols() + c)] = z.real();
    }
  }
  return out;
}

}  // namespace

double dispersion(double k) { return std::sqrt(k * k * k * k + 1.0); }

double GaussianBump::operator()(double x) const {
  const double d = (x - center) / width;
  return amplitude * std::exp(-0.5 * d * d);
}

Complex GaussianBump::transform(double k) const {
  return amplitude * width * std::sqrt(2.0 * kPi) * std::exp(-0.5 * k * k * width * width) *
         std::polar(1.0, -k * center);
}

void HeatLqrProblem::validate() const {
  if (!(k_max > 0.0)) throw std::invalid_argument("heat: k_max must be positive");
  if (nk < 2 || nk % 2 != 0) throw std::invalid_argument("heat: nk must be even and positive");
  if (!(initial.width > 0.0)) throw std::invalid_argument("heat: bump width must be positive");
  if (std::abs(initial.transform(k_max)) >= 1e-12) {
    throw QuadratureError("heat: |phi0_hat(k_max)| = " + std::to_string(std::abs(initial.transform(k_max))) +
                          " is not below 1e-12; enlarge k_max");
  }
}

Spectrum spectrum(const HeatLqrProblem& p) {
  p.validate();
  Spectrum s;
  const double h = 2.0 * p.k_max / static_cast<double>(p.nk);
  for (std::size_t m = 0; m <= p.nk; ++m) {
    const double k = -p.k_max + h * static_cast<double>(m);
    const double w = (m == 0 || m == p.nk ? 0.5 : 1.0) * h / (2.0 * kPi);
    const Complex c = p.initial.transform(k);
    s.k.push_back(k);
    s.weight.push_back(w);
    s.state.push_back(c);
    s.control.push_back((k * k - dispersion(k)) * c);
  }
  return s;
}

std::vector<double> synthesize(const Spectrum& s, const std::vector<Complex>& coeffs,
                               const std::vector<double>& xs, const std::vector<double>& ts,
                               double& max_imaginary) {
  const CMat ex = plane_waves(s, coeffs, xs);
  RowMat et(static_cast<Eigen::Index>(s.k.size()), static_cast<Eigen::Index>(ts.size()));
  for (std::size_t m = 0; m < s.k.size(); ++m) {
    const double om = dispersion(s.k[m]);
    for (std::size_t j = 0; j < ts.size(); ++j) {
      et(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) = std::exp(-om * ts[j]);
    }
  }
  const CMat f = ex * et.cast<Complex>();
  return real_or_throw(f, max_imaginary);
}

Fields optimal_fields(const HeatLqrProblem& p, const std::vector<double>& xs,
                      const std::vector<double>& ts) {
  const Spectrum s = spectrum(p);
  Fields f;
  f.xs = xs;
  f.ts = ts;
  f.state = synthesize(s, s.state, xs, ts, f.max_imaginary);
  f.control = synthesize(s, s.control, xs, ts, f.max_imaginary);
  if (f.max_imaginary > 1e-8) {
    throw QuadratureError("heat: imaginary residue " + std::to_string(f.max_imaginary) +
                          " exceeds 1e-8; quadrature window too small");
  }
  return f;
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return v;
}

Residuals optimality_residuals(const HeatLqrProblem& p, double x0, double x1, double t0, double t1,
                               double h) {
  const auto nx = static_cast<std::size_t>(std::llround((x1 - x0) / h)) + 1;
  const auto nt = static_cast<std::size_t>(std::llround((t1 - t0) / h)) + 1;
  // Two ghost layers on each side for the five-point stencils.
  std::vector<double> xs(nx + 4), ts(nt + 4);
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = x0 + h * (static_cast<double>(i) - 2.0);
  for (std::size_t j = 0; j < ts.size(); ++j) ts[j] = t0 + h * (static_cast<double>(j) - 2.0);
  const Fields f = optimal_fields(p, xs, ts);
  const std::size_t m = ts.size();
  auto d1 = [&](const std::vector<double>& v, std::size_t i, std::size_t j, std::size_t si,
                std::size_t sj) {
    auto at = [&](int o) { return v[(i + o * si) * m + (j + o * sj)]; };
    return (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h);
  };
  auto d2 = [&](const std::vector<double>& v, std::size_t i, std::size_t j) {
    auto at = [&](int o) { return v[(i + o) * m + j]; };
    return (-at(2) + 16.0 * at(1) - 30.0 * at(0) + 16.0 * at(-1) - at(-2)) / (12.0 * h * h);
  };
  Residuals r;
  for (std::size_t i = 2; i < nx + 2; ++i) {
    for (std::size_t j = 2; j < nt + 2; ++j) {
      const double phi_t = d1(f.state, i, j, 0, 1);
      const double phi_xx = d2(f.state, i, j);
      const double psi_t = d1(f.control, i, j, 0, 1);
      const double psi_xx = d2(f.control, i, j);
      r.state = std::max(r.state, std::abs(phi_t - phi_xx - f.control[i * m + j]));
      r.adjoint = std::max(r.adjoint, std::abs(-psi_t - psi_xx + f.state[i * m + j]));
    }
  }
  return r;
}

namespace {

// q(t) = int_0^t e^{-a (t - s)} tau(s) ds on the nodes, with tau linear between nodes.
std::vector<double> duhamel(double a, const std::vector<double>& ts, const std::vector<double>& tau) {
  std::vector<double> q(ts.size(), 0.0);
  for (std::size_t j = 0; j + 1 < ts.size(); ++j) {
    const double h = ts[j + 1] - ts[j];
    const double ah = a * h;
    const double decay = std::exp(-ah);
    double alpha, beta;
    if (ah < 1e-2) {
      alpha = h * (0.5 - ah / 3.0 + ah * ah / 8.0);
      beta = h * (0.5 - ah / 6.0 + ah * ah / 24.0);
    } else {
      const double total = -std::expm1(-ah) / a;
      beta = 1.0 / a - total / ah;
      alpha = total - beta;
    }
    q[j + 1] = decay * q[j] + alpha * tau[j] + beta * tau[j + 1];
  }
  return q;
}

}  // namespace

ProbeReport cost_optimality_probe(const HeatLqrProblem& p,
                                  const std::vector<Perturbation>& perturbations,
                                  const ProbeSettings& st) {
  const Spectrum s = spectrum(p);
  const std::vector<double> xs = linspace(-st.x_extent, st.x_extent, st.nx);
  const std::vector<double> ts = linspace(0.0, st.t_end, st.nt);
  const Fields f = optimal_fields(p, xs, ts);
  const std::vector<double> wx = trapezoid(xs);
  const std::vector<double> wt = trapezoid(ts);
  const std::size_t nt = ts.size();

  auto cost = [&](const std::vector<double>& phi, const std::vector<double>& u) {
    double j = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (std::size_t l = 0; l < nt; ++l) {
        const std::size_t k = i * nt + l;
        j += wx[i] * wt[l] * (phi[k] * phi[k] + u[k] * u[k]);
      }
    }
    return j;
  };

  ProbeReport report;
  report.base = cost(f.state, f.control);
  for (const Perturbation& d : perturbations) {
    std::vector<double> tau(nt);
    for (std::size_t l = 0; l < nt; ++l) {
      const double z = (ts[l] - d.t_center) / d.t_width;
      tau[l] = std::exp(-0.5 * z * z);
    }
    const GaussianBump shape{d.amplitude, d.x_center, d.x_width};
    // State response: transform of the spatial profile times a Duhamel integral per k.
    CMat ex(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(s.k.size()));
    CMat qt(static_cast<Eigen::Index>(s.k.size()), static_cast<Eigen::Index>(nt));
    for (std::size_t m = 0; m < s.k.size(); ++m) {
      const Complex c = shape.transform(s.k[m]);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        ex(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) =
            std::polar(s.weight[m], s.k[m] * xs[i]) * c;
      }
      const std::vector<double> q = duhamel(s.k[m] * s.k[m], ts, tau);
      for (std::size_t l = 0; l < nt; ++l) {
        qt(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(l)) = q[l];
      }
    }
    double imag = 0.0;
    const std::vector<double> response = real_or_throw(ex * qt, imag);
    std::vector<double> delta(xs.size() * nt);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (std::size_t l = 0; l < nt; ++l) delta[i * nt + l] = shape(xs[i]) * tau[l];
    }

    ProbeEntry e;
    for (double sign : {1.0, -1.0}) {
      std::vector<double> phi = f.state, u = f.control;
      for (std::size_t k = 0; k < phi.size(); ++k) {
        phi[k] += sign * st.epsilon * response[k];
        u[k] += sign * st.epsilon * delta[k];
      }
      (sign > 0 ? e.plus : e.minus) = cost(phi, u);
    }
    report.optimal = report.optimal && report.base <= e.plus + st.tolerance &&
                     report.base <= e.minus + st.tolerance;
    report.entries.push_back(e);
  }
  return report;
}

}  // namespace phasefno::heat
