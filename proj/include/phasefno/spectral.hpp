#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasefno/grid.hpp"
#include "phasefno/tape.hpp"
#include "phasefno/tensor.hpp"

namespace phasefno::spectral {

/// How mode indices map to frequencies.
///   angular: k = 2*pi*m / L per axis (Fourier series on the grid extent)
///   integer: k = m
enum class FrequencyConvention { angular, integer };

/// Retained modes m = (mx, mt) with mx, mt in {-M..M}; index = (mx+M)*(2M+1) + (mt+M).
class ModeSet {
 public:
  ModeSet(int max_mode, const GridSpec& grid,
          FrequencyConvention convention = FrequencyConvention::angular);

  int max_mode() const { return max_mode_; }
  std::size_t per_axis() const { return static_cast<std::size_t>(2 * max_mode_ + 1); }
  std::size_t size() const { return per_axis() * per_axis(); }
  std::size_t index(int mx, int mt) const;
  int mx(std::size_t m) const { return static_cast<int>(m / per_axis()) - max_mode_; }
  int mt(std::size_t m) const { return static_cast<int>(m % per_axis()) - max_mode_; }
  double kx(std::size_t m) const { return kx_unit_ * mx(m); }
  double kt(std::size_t m) const { return kt_unit_ * mt(m); }
  FrequencyConvention convention() const { return convention_; }

 private:
  int max_mode_;
  double kx_unit_;
  double kt_unit_;
  FrequencyConvention convention_;
};

/// Raised when an extended synthesis basis would overflow float64.
class EnvelopeOverflow : public std::overflow_error {
 public:
  EnvelopeOverflow(std::size_t mode, double exponent);
  std::size_t mode() const { return mode_; }
  double exponent() const { return exponent_; }

 private:
  std::size_t mode_;
  double exponent_;
};

/// Largest exponent |kx sin(theta_x)| Lx + |kt sin(theta_t)| Lt over modes.
/// `phase` has shape (modes, 2) or (1, 2) (one phase pair shared by all modes).
double exponent_bound(const ModeSet& modes, const ad::Tensor& phase, const GridSpec& grid);

/// Exponents above this make exp() leave float64 range.
inline constexpr double kOverflowExponent = 700.0;

/// Precomputed analysis matrices and the basis builder for one grid and mode set.
class SpectralBasis {
 public:
  SpectralBasis(const GridSpec& grid, const ModeSet& modes);

  const GridSpec& grid() const { return grid_; }
  const ModeSet& modes() const { return modes_; }

  /// Forward transform factor along x: (per_axis x nx), e^{-i kx x}/nx.
  const std::vector<ad::Complex>& analysis_x() const { return fx_; }
  /// Forward transform factor along t: (per_axis x nt), e^{-i kt t}/nt.
  const std::vector<ad::Complex>& analysis_t() const { return ft_; }

 private:
  GridSpec grid_;
  ModeSet modes_;
  std::vector<ad::Complex> fx_;
  std::vector<ad::Complex> ft_;
};

// Differentiable operators. Leading axes are treated as independent slices.

/// Real field (..., nx, nt) -> complex coefficients (..., modes).
ad::Var analyze(const ad::Var& v, const SpectralBasis& basis);

/// Per-mode channel mixing: weights (modes, out, in) with coefficients (batch, in, modes).
ad::Var mode_mix(const ad::Var& weights, const ad::Var& coeffs);

/// Re sum_m exp(i z(m).xi) c(m) with z_j = k_j e^{i theta_j}: coefficients (..., modes) -> (..., nx, nt).
/// A zero phase yields the standard truncated Fourier synthesis.
ad::Var synthesize(const ad::Var& coeffs, const ad::Var& phase, const SpectralBasis& basis);

// Value-level entry points.

ad::Tensor analyze(const ad::Tensor& v, const SpectralBasis& basis);

/// Re sum_m e^{i k(m).xi} K(m) v(m); coeffs (..., in, modes), weights (modes, out, in).
ad::Tensor synthesize_standard(const ad::Tensor& coeffs, const ad::Tensor& weights,
                               const SpectralBasis& basis);

/// As synthesize_standard with each frequency rotated by its phase.
ad::Tensor synthesize_extended(const ad::Tensor& coeffs, const ad::Tensor& weights,
                               const ad::Tensor& phase, const SpectralBasis& basis);

/// Identity weights (modes, n, n).
ad::Tensor identity_weights(std::size_t modes, std::size_t channels);

}  // namespace phasefno::spectral
