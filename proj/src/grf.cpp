#include "phasefno/grf.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>

namespace phasefno::grf {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void GrfConfig::validate() const {
  if (!(length_scale > 0.0)) throw std::invalid_argument("grf: length scale must be positive");
  if (!(stddev >= 0.0)) throw std::invalid_argument("grf: standard deviation must be non-negative");
  if (!(jitter >= 0.0)) throw std::invalid_argument("grf: jitter must be non-negative");
  if (points < 2) throw std::invalid_argument("grf: need at least two points");
  if (!(length > 0.0)) throw std::invalid_argument("grf: interval length must be positive");
}

std::vector<double> covariance(const GrfConfig& c, double jitter) {
  const std::size_t n = c.points;
  std::vector<double> cov(n * n);
  const double h = c.length / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = h * (static_cast<double>(i) - static_cast<double>(j));
      cov[i * n + j] = c.stddev * c.stddev * std::exp(-d * d / (2.0 * c.length_scale * c.length_scale));
    }
    cov[i * n + i] += jitter;
  }
  return cov;
}

Factor factorize(const GrfConfig& c) {
  c.validate();
  const auto n = static_cast<Eigen::Index>(c.points);
  double jitter = c.jitter;
  while (true) {
    const std::vector<double> cov = covariance(c, jitter);
    const Eigen::LLT<RowMat> llt(Eigen::Map<const RowMat>(cov.data(), n, n));
    if (llt.info() == Eigen::Success) {
      const RowMat l = llt.matrixL();
      return {std::vector<double>(l.data(), l.data() + l.size()), jitter};
    }
    if (jitter >= 1e-6) break;
    jitter = jitter > 0.0 ? std::min(jitter * 10.0, 1e-6) : 1e-12;
  }
  throw FactorizationError("grf: covariance not positive definite with jitter up to 1e-6");
}

std::vector<std::vector<double>> sample(const GrfConfig& c, std::size_t count) {
  c.validate();
  std::vector<std::vector<double>> out(count, std::vector<double>(c.points, 0.0));
  if (c.stddev == 0.0) return out;
  const Factor f = factorize(c);
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = c.points;
  std::vector<double> z(n);
  for (auto& s : out) {
    for (double& v : z) v = normal(rng);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j <= i; ++j) acc += f.lower[i * n + j] * z[j];
      s[i] = acc;
    }
  }
  return out;
}

}  // namespace phasefno::grf
