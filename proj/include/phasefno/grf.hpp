#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "phasefno/tensor.hpp"

namespace phasefno::grf {

/// Zero-mean Gaussian random field on [0, length] with squared-exponential covariance.
struct GrfConfig {
  double length_scale = 0.15;
  double stddev = 1.0;
  std::size_t points = 30;
  double length = 0.5;
  double jitter = 1e-10;
  std::uint64_t seed = 0;

  void validate() const;
};

class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// C_ij = stddev^2 exp(-(t_i - t_j)^2 / (2 length_scale^2)) + jitter delta_ij.
std::vector<double> covariance(const GrfConfig& config, double jitter);

/// Lower Cholesky factor of the covariance, row-major (points x points).
/// Retries with jitter multiplied by 10 up to 1e-6 before failing.
struct Factor {
  std::vector<double> lower;
  double jitter;
};
Factor factorize(const GrfConfig& config);

/// `count` draws L z with z ~ N(0, I), in draw order.
std::vector<std::vector<double>> sample(const GrfConfig& config, std::size_t count);

}  // namespace phasefno::grf
