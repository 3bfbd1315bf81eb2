#include "phasefno/spectral.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>

namespace phasefno::spectral {
namespace {

using ad::Complex;
using ad::Shape;
using ad::ShapeError;
using ad::Tensor;
using ad::Var;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstMapCMat = Eigen::Map<const CMat>;

struct PhaseView {
  std::size_t rows;
  std::span<const double> values;

  double space(std::size_t m) const { return values[(rows == 1 ? 0 : m) * 2]; }
  double time(std::size_t m) const { return values[(rows == 1 ? 0 : m) * 2 + 1]; }
};

PhaseView phase_view(const Tensor& phase, std::size_t modes) {
  ad::require_real(phase, "phase");
  if (phase.rank() != 2 || phase.dim(1) != 2 || (phase.dim(0) != modes && phase.dim(0) != 1)) {
    throw ShapeError("phase: expected shape [" + std::to_string(modes) + ", 2] or [1, 2], got " +
                     ad::to_string(phase.shape()));
  }
  return {phase.dim(0), phase.real_data()};
}

// Extended synthesis basis, points x modes, split into real and imaginary parts.
struct Basis {
  RowMat re;
  RowMat im;
};

std::shared_ptr<const Basis> build_basis(const SpectralBasis& sb, const PhaseView& phase) {
  const GridSpec& grid = sb.grid();
  const ModeSet& modes = sb.modes();
  const std::size_t nm = modes.size();

  for (std::size_t m = 0; m < nm; ++m) {
    const double e = std::abs(modes.kx(m) * std::sin(phase.space(m))) * grid.length_x +
                     std::abs(modes.kt(m) * std::sin(phase.time(m))) * grid.length_t;
    if (!(e <= kOverflowExponent)) throw EnvelopeOverflow(m, e);
  }

  // exp(i z x) factors per mode along each axis.
  std::vector<Complex> ex(nm * grid.nx), et(nm * grid.nt);
  for (std::size_t m = 0; m < nm; ++m) {
    const double ax = modes.kx(m) * std::sin(phase.space(m));
    const double bx = modes.kx(m) * std::cos(phase.space(m));
    const double at = modes.kt(m) * std::sin(phase.time(m));
    const double bt = modes.kt(m) * std::cos(phase.time(m));
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const double x = grid.x(i);
      ex[m * grid.nx + i] = std::exp(-ax * x) * Complex(std::cos(bx * x), std::sin(bx * x));
    }
    for (std::size_t j = 0; j < grid.nt; ++j) {
      const double t = grid.t(j);
      et[m * grid.nt + j] = std::exp(-at * t) * Complex(std::cos(bt * t), std::sin(bt * t));
    }
  }

  auto basis = std::make_shared<Basis>();
  const auto np = static_cast<Eigen::Index>(grid.points());
  basis->re.resize(np, static_cast<Eigen::Index>(nm));
  basis->im.resize(np, static_cast<Eigen::Index>(nm));
  for (std::size_t i = 0; i < grid.nx; ++i) {
    for (std::size_t j = 0; j < grid.nt; ++j) {
      const auto p = static_cast<Eigen::Index>(i * grid.nt + j);
      for (std::size_t m = 0; m < nm; ++m) {
        const Complex g = ex[m * grid.nx + i] * et[m * grid.nt + j];
        basis->re(p, static_cast<Eigen::Index>(m)) = g.real();
        basis->im(p, static_cast<Eigen::Index>(m)) = g.imag();
      }
    }
  }
  return basis;
}

std::size_t leading_slices(const Tensor& t, std::size_t trailing, const char* op) {
  if (t.rank() < trailing) {
    throw ShapeError(std::string(op) + ": rank too small for shape " + ad::to_string(t.shape()));
  }
  std::size_t s = 1;
  for (std::size_t a = 0; a + trailing < t.rank(); ++a) s *= t.dim(a);
  return s;
}

}  // namespace

ModeSet::ModeSet(int max_mode, const GridSpec& grid, FrequencyConvention convention)
    : max_mode_(max_mode), convention_(convention) {
  if (max_mode < 0) throw std::invalid_argument("modes: max mode must be non-negative");
  grid.validate();
  if (convention == FrequencyConvention::angular) {
    kx_unit_ = 2.0 * std::numbers::pi / grid.length_x;
    kt_unit_ = 2.0 * std::numbers::pi / grid.length_t;
  } else {
    kx_unit_ = 1.0;
    kt_unit_ = 1.0;
  }
}

std::size_t ModeSet::index(int mx, int mt) const {
  if (std::abs(mx) > max_mode_ || std::abs(mt) > max_mode_) {
    throw std::out_of_range("modes: index outside the retained set");
  }
  return static_cast<std::size_t>(mx + max_mode_) * per_axis() +
         static_cast<std::size_t>(mt + max_mode_);
}

namespace {
std::string overflow_message(std::size_t mode, double exponent) {
  std::ostringstream out;
  out << "synthesize: envelope exponent " << exponent << " at mode " << mode
      << " exceeds float64 range";
  return out.str();
}
}  // namespace

EnvelopeOverflow::EnvelopeOverflow(std::size_t mode, double exponent)
    : std::overflow_error(overflow_message(mode, exponent)), mode_(mode), exponent_(exponent) {}

double exponent_bound(const ModeSet& modes, const Tensor& phase, const GridSpec& grid) {
  const PhaseView view = phase_view(phase, modes.size());
  double bound = 0.0;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const double e = std::abs(modes.kx(m) * std::sin(view.space(m))) * grid.length_x +
                     std::abs(modes.kt(m) * std::sin(view.time(m))) * grid.length_t;
    bound = std::max(bound, e);
  }
  return bound;
}

SpectralBasis::SpectralBasis(const GridSpec& grid, const ModeSet& modes)
    : grid_(grid), modes_(modes) {
  grid_.validate();
  const std::size_t pa = modes_.per_axis();
  const int mmax = modes_.max_mode();
  fx_.resize(pa * grid_.nx);
  ft_.resize(pa * grid_.nt);
  for (std::size_t a = 0; a < pa; ++a) {
    const std::size_t mode_x = modes_.index(static_cast<int>(a) - mmax, 0);
    const std::size_t mode_t = modes_.index(0, static_cast<int>(a) - mmax);
    const double kx = modes_.kx(mode_x);
    const double kt = modes_.kt(mode_t);
    for (std::size_t i = 0; i < grid_.nx; ++i) {
      fx_[a * grid_.nx + i] = std::polar(1.0 / static_cast<double>(grid_.nx), -kx * grid_.x(i));
    }
    for (std::size_t j = 0; j < grid_.nt; ++j) {
      ft_[a * grid_.nt + j] = std::polar(1.0 / static_cast<double>(grid_.nt), -kt * grid_.t(j));
    }
  }
}

Var analyze(const Var& v, const SpectralBasis& basis) {
  const Tensor& in = v.value();
  ad::require_real(in, "analyze");
  const GridSpec& grid = basis.grid();
  if (in.rank() < 2 || in.dim(in.rank() - 2) != grid.nx || in.dim(in.rank() - 1) != grid.nt) {
    throw ShapeError("analyze: field shape " + ad::to_string(in.shape()) +
                     " does not end in the grid shape [" + std::to_string(grid.nx) + ", " +
                     std::to_string(grid.nt) + "]");
  }
  const std::size_t slices = leading_slices(in, 2, "analyze");
  const auto pa = static_cast<Eigen::Index>(basis.modes().per_axis());
  const auto nx = static_cast<Eigen::Index>(grid.nx);
  const auto nt = static_cast<Eigen::Index>(grid.nt);
  ConstMapCMat fx(basis.analysis_x().data(), pa, nx);
  ConstMapCMat ft(basis.analysis_t().data(), pa, nt);

  // Contract time first for all slices at once, then space per slice.
  const auto rows = static_cast<Eigen::Index>(slices) * nx;
  const CMat along_t =
      ConstMapMat(in.real_data().data(), rows, nt).cast<Complex>() * ft.transpose();

  Shape shape(in.shape().begin(), in.shape().end() - 2);
  shape.push_back(basis.modes().size());
  Tensor out(shape, ad::DType::complex128);
  auto o = out.complex_data();
  for (std::size_t s = 0; s < slices; ++s) {
    const CMat coeff = fx * along_t.middleRows(static_cast<Eigen::Index>(s) * nx, nx);
    std::copy(coeff.data(), coeff.data() + coeff.size(), o.data() + s * coeff.size());
  }

  return v.tape().record(std::move(out), {v}, [&basis, slices, pa, nx, nt](
                                                   const ad::BackwardContext& ctx) {
    ConstMapCMat fx(basis.analysis_x().data(), pa, nx);
    ConstMapCMat ft(basis.analysis_t().data(), pa, nt);
    auto go = ctx.grad_output().complex_data();
    CMat stacked(static_cast<Eigen::Index>(slices) * nx, pa);
    for (std::size_t s = 0; s < slices; ++s) {
      const CMat h = ConstMapCMat(go.data() + s * pa * pa, pa, pa).conjugate();
      stacked.middleRows(static_cast<Eigen::Index>(s) * nx, nx).noalias() = fx.transpose() * h;
    }
    const RowMat dv = (stacked * ft).real();
    MapMat(ctx.grad_input(0)->real_data().data(), dv.rows(), dv.cols()) += dv;
  });
}

Var mode_mix(const Var& weights, const Var& coeffs) {
  const Tensor& k = weights.value();
  const Tensor& v = coeffs.value();
  ad::require_complex(k, "mode_mix");
  ad::require_complex(v, "mode_mix");
  if (k.rank() != 3 || v.rank() < 2 || v.dim(v.rank() - 1) != k.dim(0) ||
      v.dim(v.rank() - 2) != k.dim(2)) {
    throw ShapeError("mode_mix: weights " + ad::to_string(k.shape()) + " do not act on " +
                     ad::to_string(v.shape()));
  }
  const std::size_t nm = k.dim(0);
  const std::size_t outc = k.dim(1);
  const std::size_t inc = k.dim(2);
  const std::size_t batch = leading_slices(v, 2, "mode_mix");
  Shape shape = v.shape();
  shape[shape.size() - 2] = outc;
  Tensor out(shape, ad::DType::complex128);
  auto o = out.complex_data();
  auto kw = k.complex_data();
  auto vv = v.complex_data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oc = 0; oc < outc; ++oc) {
      for (std::size_t c = 0; c < inc; ++c) {
        for (std::size_t m = 0; m < nm; ++m) {
          o[(b * outc + oc) * nm + m] += kw[(m * outc + oc) * inc + c] * vv[(b * inc + c) * nm + m];
        }
      }
    }
  }
  return weights.tape().record(
      std::move(out), {weights, coeffs}, [nm, outc, inc, batch](const ad::BackwardContext& ctx) {
        auto go = ctx.grad_output().complex_data();
        auto kw = ctx.input(0).complex_data();
        auto vv = ctx.input(1).complex_data();
        ad::Tensor* gk = ctx.grad_input(0);
        ad::Tensor* gv = ctx.grad_input(1);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t oc = 0; oc < outc; ++oc) {
            for (std::size_t c = 0; c < inc; ++c) {
              for (std::size_t m = 0; m < nm; ++m) {
                const Complex g = go[(b * outc + oc) * nm + m];
                if (gk) {
                  gk->complex_data()[(m * outc + oc) * inc + c] +=
                      g * std::conj(vv[(b * inc + c) * nm + m]);
                }
                if (gv) {
                  gv->complex_data()[(b * inc + c) * nm + m] +=
                      g * std::conj(kw[(m * outc + oc) * inc + c]);
                }
              }
            }
          }
        }
      });
}

Var synthesize(const Var& coeffs, const Var& phase, const SpectralBasis& sb) {
  const Tensor& c = coeffs.value();
  ad::require_complex(c, "synthesize");
  const std::size_t nm = sb.modes().size();
  if (c.rank() < 1 || c.dim(c.rank() - 1) != nm) {
    throw ShapeError("synthesize: coefficients " + ad::to_string(c.shape()) + " do not hold " +
                     std::to_string(nm) + " modes");
  }
  const PhaseView pv = phase_view(phase.value(), nm);
  auto basis = build_basis(sb, pv);

  const std::size_t slices = leading_slices(c, 1, "synthesize");
  const auto s = static_cast<Eigen::Index>(slices);
  const auto m = static_cast<Eigen::Index>(nm);
  const auto np = static_cast<Eigen::Index>(sb.grid().points());
  const ConstMapCMat cm(c.complex_data().data(), s, m);
  const RowMat cr = cm.real();
  const RowMat ci = cm.imag();

  Shape shape(c.shape().begin(), c.shape().end() - 1);
  shape.push_back(sb.grid().nx);
  shape.push_back(sb.grid().nt);
  Tensor out(shape);
  MapMat y(out.real_data().data(), s, np);
  y.noalias() = cr * basis->re.transpose();
  y.noalias() -= ci * basis->im.transpose();

  return coeffs.tape().record(
      std::move(out), {coeffs, phase},
      [&sb, basis, s, m, np](const ad::BackwardContext& ctx) {
        ConstMapMat dy(ctx.grad_output().real_data().data(), s, np);
        if (ad::Tensor* gc = ctx.grad_input(0)) {
          const RowMat dcr = dy * basis->re;
          const RowMat dci = -(dy * basis->im);
          auto d = gc->complex_data();
          for (Eigen::Index r = 0; r < s; ++r) {
            for (Eigen::Index k = 0; k < m; ++k) {
              d[static_cast<std::size_t>(r * m + k)] += Complex(dcr(r, k), dci(r, k));
            }
          }
        }
        ad::Tensor* gp = ctx.grad_input(1);
        if (!gp) return;
        const ConstMapCMat cm(ctx.input(0).complex_data().data(), s, m);
        const RowMat dgr = dy.transpose() * cm.real();
        const RowMat dgi = -(dy.transpose() * cm.imag());
        const GridSpec& grid = sb.grid();
        const ModeSet& modes = sb.modes();
        const PhaseView pv = phase_view(ctx.input(1), modes.size());
        auto d = gp->real_data();
        for (Eigen::Index k = 0; k < m; ++k) {
          Complex sx{}, st{};
          for (std::size_t i = 0; i < grid.nx; ++i) {
            for (std::size_t j = 0; j < grid.nt; ++j) {
              const auto p = static_cast<Eigen::Index>(i * grid.nt + j);
              // conj(dL/dG) * G
              const Complex q(dgr(p, k) * basis->re(p, k) + dgi(p, k) * basis->im(p, k),
                              dgr(p, k) * basis->im(p, k) - dgi(p, k) * basis->re(p, k));
              sx += grid.x(i) * q;
              st += grid.t(j) * q;
            }
          }
          const auto mode = static_cast<std::size_t>(k);
          const std::size_t row = pv.rows == 1 ? 0 : mode;
          // dG/dtheta_j = -k_j xi_j e^{i theta_j} G
          d[row * 2] += std::real(-modes.kx(mode) * std::polar(1.0, pv.space(mode)) * sx);
          d[row * 2 + 1] += std::real(-modes.kt(mode) * std::polar(1.0, pv.time(mode)) * st);
        }
      });
}

Tensor analyze(const Tensor& v, const SpectralBasis& basis) {
  ad::Tape tape;
  return analyze(tape.constant(v), basis).value();
}

Tensor synthesize_standard(const Tensor& coeffs, const Tensor& weights, const SpectralBasis& basis) {
  return synthesize_extended(coeffs, weights, Tensor({1, 2}), basis);
}

Tensor synthesize_extended(const Tensor& coeffs, const Tensor& weights, const Tensor& phase,
                           const SpectralBasis& basis) {
  ad::Tape tape;
  const Var mixed = mode_mix(tape.constant(weights), tape.constant(coeffs));
  return synthesize(mixed, tape.constant(phase), basis).value();
}

Tensor identity_weights(std::size_t modes, std::size_t channels) {
  Tensor k({modes, channels, channels}, ad::DType::complex128);
  auto d = k.complex_data();
  for (std::size_t m = 0; m < modes; ++m) {
    for (std::size_t c = 0; c < channels; ++c) d[(m * channels + c) * channels + c] = 1.0;
  }
  return k;
}

}  // namespace phasefno::spectral
