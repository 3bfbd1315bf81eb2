#include "phasefno/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

namespace phasefno::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::string mismatch(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b);
}

void check_elementwise(const Var& a, const Var& b, const char* op) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) throw ShapeError(mismatch(op, x.shape(), y.shape()));
  if (x.dtype() != y.dtype()) throw ShapeError(std::string(op) + ": dtype mismatch");
}

// Sizes of (batch, channels, rest) for a tensor with at least two axes.
struct ChannelLayout {
  std::size_t batch;
  std::size_t channels;
  std::size_t inner;
};

ChannelLayout channel_layout(const Tensor& x, const char* op) {
  if (x.rank() < 2) {
    throw ShapeError(std::string(op) + ": expected (batch, channels, ...) but got " +
                     to_string(x.shape()));
  }
  return {x.dim(0), x.dim(1), x.numel() / (x.dim(0) * x.dim(1))};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_elementwise(a, b, "add");
  Tensor out = a.value();
  out.accumulate(b.value());
  return a.tape().record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (Tensor* g = ctx.grad_input(i)) g->accumulate(ctx.grad_output());
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_elementwise(a, b, "sub");
  Tensor out = a.value();
  if (out.is_complex()) {
    auto o = out.complex_data();
    auto y = b.value().complex_data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= y[i];
  } else {
    auto o = out.real_data();
    auto y = b.value().real_data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= y[i];
  }
  return a.tape().record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    if (Tensor* g = ctx.grad_input(0)) g->accumulate(ctx.grad_output());
    if (Tensor* g = ctx.grad_input(1)) {
      if (g->is_complex()) {
        auto d = g->complex_data();
        auto go = ctx.grad_output().complex_data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= go[i];
      } else {
        auto d = g->real_data();
        auto go = ctx.grad_output().real_data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= go[i];
      }
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_elementwise(a, b, "mul");
  Tensor out = Tensor::zeros_like(a.value());
  if (out.is_complex()) {
    auto o = out.complex_data();
    auto x = a.value().complex_data();
    auto y = b.value().complex_data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  } else {
    auto o = out.real_data();
    auto x = a.value().real_data();
    auto y = b.value().real_data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  }
  return a.tape().record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    // For complex operands the gradient pair (d/dre, d/dim) of x in x*y is g*conj(y).
    for (std::size_t i = 0; i < 2; ++i) {
      Tensor* g = ctx.grad_input(i);
      if (!g) continue;
      const Tensor& other = ctx.input(1 - i);
      if (g->is_complex()) {
        auto d = g->complex_data();
        auto go = ctx.grad_output().complex_data();
        auto y = other.complex_data();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] += go[k] * std::conj(y[k]);
      } else {
        auto d = g->real_data();
        auto go = ctx.grad_output().real_data();
        auto y = other.real_data();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] += go[k] * y[k];
      }
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  if (out.is_complex()) {
    for (Complex& v : out.complex_data()) v *= factor;
  } else {
    for (double& v : out.real_data()) v *= factor;
  }
  return a.tape().record(std::move(out), {a}, [factor](const BackwardContext& ctx) {
    Tensor* g = ctx.grad_input(0);
    if (g->is_complex()) {
      auto d = g->complex_data();
      auto go = ctx.grad_output().complex_data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += factor * go[k];
    } else {
      auto d = g->real_data();
      auto go = ctx.grad_output().real_data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += factor * go[k];
    }
  });
}

Var sum(const Var& a) {
  require_real(a.value(), "sum");
  double total = 0.0;
  for (double v : a.value().real_data()) total += v;
  return a.tape().record(Tensor::scalar(total), {a}, [](const BackwardContext& ctx) {
    const double go = ctx.grad_output().item();
    for (double& d : ctx.grad_input(0)->real_data()) d += go;
  });
}

Var mean(const Var& a) {
  require_real(a.value(), "mean");
  const auto n = static_cast<double>(a.value().numel());
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_real(x, "matmul");
  require_real(y, "matmul");
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(0)) {
    throw ShapeError(mismatch("matmul", x.shape(), y.shape()));
  }
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto k = static_cast<Eigen::Index>(x.dim(1));
  const auto m = static_cast<Eigen::Index>(y.dim(1));
  Tensor out({x.dim(0), y.dim(1)});
  MapMat(out.real_data().data(), n, m).noalias() =
      ConstMapMat(x.real_data().data(), n, k) * ConstMapMat(y.real_data().data(), k, m);
  return a.tape().record(std::move(out), {a, b}, [n, k, m](const BackwardContext& ctx) {
    ConstMapMat go(ctx.grad_output().real_data().data(), n, m);
    if (Tensor* g = ctx.grad_input(0)) {
      MapMat(g->real_data().data(), n, k).noalias() +=
          go * ConstMapMat(ctx.input(1).real_data().data(), k, m).transpose();
    }
    if (Tensor* g = ctx.grad_input(1)) {
      MapMat(g->real_data().data(), k, m).noalias() +=
          ConstMapMat(ctx.input(0).real_data().data(), n, k).transpose() * go;
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a}, [](const BackwardContext& ctx) {
    Tensor* g = ctx.grad_input(0);
    g->accumulate(ctx.grad_output().reshaped(g->shape()));
  });
}

Var make_complex(const Var& re, const Var& im) {
  check_elementwise(re, im, "make_complex");
  require_real(re.value(), "make_complex");
  Tensor out(re.value().shape(), DType::complex128);
  auto o = out.complex_data();
  auto r = re.value().real_data();
  auto i = im.value().real_data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = {r[k], i[k]};
  return re.tape().record(std::move(out), {re, im}, [](const BackwardContext& ctx) {
    auto go = ctx.grad_output().complex_data();
    if (Tensor* g = ctx.grad_input(0)) {
      auto d = g->real_data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += go[k].real();
    }
    if (Tensor* g = ctx.grad_input(1)) {
      auto d = g->real_data();
      for (std::size_t k = 0; k < d.size(); ++k) d[k] += go[k].imag();
    }
  });
}

Var real_part(const Var& z) {
  require_complex(z.value(), "real_part");
  Tensor out(z.value().shape());
  auto o = out.real_data();
  auto in = z.value().complex_data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = in[k].real();
  return z.tape().record(std::move(out), {z}, [](const BackwardContext& ctx) {
    auto d = ctx.grad_input(0)->complex_data();
    auto go = ctx.grad_output().real_data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] += Complex(go[k], 0.0);
  });
}

Var imag_part(const Var& z) {
  require_complex(z.value(), "imag_part");
  Tensor out(z.value().shape());
  auto o = out.real_data();
  auto in = z.value().complex_data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = in[k].imag();
  return z.tape().record(std::move(out), {z}, [](const BackwardContext& ctx) {
    auto d = ctx.grad_input(0)->complex_data();
    auto go = ctx.grad_output().real_data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] += Complex(0.0, go[k]);
  });
}

Var conj(const Var& z) {
  require_complex(z.value(), "conj");
  Tensor out = z.value();
  for (Complex& v : out.complex_data()) v = std::conj(v);
  return z.tape().record(std::move(out), {z}, [](const BackwardContext& ctx) {
    auto d = ctx.grad_input(0)->complex_data();
    auto go = ctx.grad_output().complex_data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] += std::conj(go[k]);
  });
}

double gelu(double x) { return x * normal_cdf(x); }

Var gelu(const Var& x) {
  require_real(x.value(), "gelu");
  Tensor out = x.value();
  for (double& v : out.real_data()) v = gelu(v);
  return x.tape().record(std::move(out), {x}, [](const BackwardContext& ctx) {
    auto d = ctx.grad_input(0)->real_data();
    auto in = ctx.input(0).real_data();
    auto go = ctx.grad_output().real_data();
    for (std::size_t k = 0; k < d.size(); ++k) {
      d[k] += go[k] * (normal_cdf(in[k]) + in[k] * normal_pdf(in[k]));
    }
  });
}

Var channel_mix(const Var& weight, const Var& x) {
  const Tensor& w = weight.value();
  const Tensor& v = x.value();
  require_real(w, "channel_mix");
  require_real(v, "channel_mix");
  const auto [batch, in, inner] = channel_layout(v, "channel_mix");
  if (w.rank() != 2 || w.dim(1) != in) {
    throw ShapeError(mismatch("channel_mix", w.shape(), v.shape()));
  }
  const std::size_t outc = w.dim(0);
  Shape shape = v.shape();
  shape[1] = outc;
  Tensor out(shape);
  const auto o = static_cast<Eigen::Index>(outc);
  const auto c = static_cast<Eigen::Index>(in);
  const auto p = static_cast<Eigen::Index>(inner);
  ConstMapMat wm(w.real_data().data(), o, c);
  for (std::size_t b = 0; b < batch; ++b) {
    MapMat(out.real_data().data() + b * outc * inner, o, p).noalias() =
        wm * ConstMapMat(v.real_data().data() + b * in * inner, c, p);
  }
  return weight.tape().record(
      std::move(out), {weight, x}, [batch, o, c, p](const BackwardContext& ctx) {
        const double* go = ctx.grad_output().real_data().data();
        const double* xv = ctx.input(1).real_data().data();
        ConstMapMat wm(ctx.input(0).real_data().data(), o, c);
        Tensor* gw = ctx.grad_input(0);
        Tensor* gx = ctx.grad_input(1);
        for (std::size_t b = 0; b < batch; ++b) {
          ConstMapMat gob(go + b * o * p, o, p);
          if (gw) {
            MapMat(gw->real_data().data(), o, c).noalias() +=
                gob * ConstMapMat(xv + b * c * p, c, p).transpose();
          }
          if (gx) {
            MapMat(gx->real_data().data() + b * c * p, c, p).noalias() += wm.transpose() * gob;
          }
        }
      });
}

Var add_channel_bias(const Var& x, const Var& bias) {
  const Tensor& v = x.value();
  require_real(v, "add_channel_bias");
  const auto [batch, channels, inner] = channel_layout(v, "add_channel_bias");
  if (bias.value().rank() != 1 || bias.value().dim(0) != channels) {
    throw ShapeError(mismatch("add_channel_bias", v.shape(), bias.value().shape()));
  }
  Tensor out = v;
  auto o = out.real_data();
  auto bv = bias.value().real_data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      double* row = o.data() + (b * channels + c) * inner;
      for (std::size_t k = 0; k < inner; ++k) row[k] += bv[c];
    }
  }
  return x.tape().record(
      std::move(out), {x, bias}, [batch, channels, inner](const BackwardContext& ctx) {
        if (Tensor* g = ctx.grad_input(0)) g->accumulate(ctx.grad_output());
        if (Tensor* g = ctx.grad_input(1)) {
          auto go = ctx.grad_output().real_data();
          auto d = g->real_data();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t c = 0; c < channels; ++c) {
              const double* row = go.data() + (b * channels + c) * inner;
              double s = 0.0;
              for (std::size_t k = 0; k < inner; ++k) s += row[k];
              d[c] += s;
            }
          }
        }
      });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, Mode mode,
               BatchNormOptions options) {
  const Tensor& v = x.value();
  require_real(v, "batch_norm");
  const auto [batch, channels, inner] = channel_layout(v, "batch_norm");
  for (const Var* p : {&gamma, &beta}) {
    if (p->value().rank() != 1 || p->value().dim(0) != channels) {
      throw ShapeError(mismatch("batch_norm", v.shape(), p->value().shape()));
    }
  }
  if (state.running_mean.numel() != channels || state.running_var.numel() != channels) {
    throw ShapeError("batch_norm: running statistics hold " +
                     std::to_string(state.running_mean.numel()) + " channels, input has " +
                     std::to_string(channels));
  }

  const std::size_t count = batch * inner;
  auto in = v.real_data();
  std::vector<double> mu(channels), inv_std(channels);
  if (mode == Mode::train) {
    if (count < 2) throw ShapeError("batch_norm: train mode needs at least two values per channel");
    auto rm = state.running_mean.real_data();
    auto rv = state.running_var.real_data();
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* row = in.data() + (b * channels + c) * inner;
        for (std::size_t k = 0; k < inner; ++k) s += row[k];
      }
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* row = in.data() + (b * channels + c) * inner;
        for (std::size_t k = 0; k < inner; ++k) ss += (row[k] - m) * (row[k] - m);
      }
      const double var = ss / static_cast<double>(count);
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + options.epsilon);
      const double unbiased = ss / static_cast<double>(count - 1);
      rm[c] = (1.0 - options.momentum) * rm[c] + options.momentum * m;
      rv[c] = (1.0 - options.momentum) * rv[c] + options.momentum * unbiased;
    }
  } else {
    auto rm = state.running_mean.real_data();
    auto rv = state.running_var.real_data();
    for (std::size_t c = 0; c < channels; ++c) {
      mu[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + options.epsilon);
    }
  }

  auto normalized = std::make_shared<std::vector<double>>(v.numel());
  Tensor out(v.shape());
  auto o = out.real_data();
  auto g = gamma.value().real_data();
  auto bt = beta.value().real_data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * inner;
      for (std::size_t k = 0; k < inner; ++k) {
        const double xh = (in[base + k] - mu[c]) * inv_std[c];
        (*normalized)[base + k] = xh;
        o[base + k] = g[c] * xh + bt[c];
      }
    }
  }

  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [batch, channels, inner, count, mode, normalized,
       inv_std = std::move(inv_std)](const BackwardContext& ctx) {
        auto go = ctx.grad_output().real_data();
        auto gam = ctx.input(1).real_data();
        const auto& xh = *normalized;
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_go = 0.0;
          double sum_go_xh = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * inner;
            for (std::size_t k = 0; k < inner; ++k) {
              sum_go += go[base + k];
              sum_go_xh += go[base + k] * xh[base + k];
            }
          }
          if (Tensor* gg = ctx.grad_input(1)) gg->real_data()[c] += sum_go_xh;
          if (Tensor* gb = ctx.grad_input(2)) gb->real_data()[c] += sum_go;
          Tensor* gx = ctx.grad_input(0);
          if (!gx) continue;
          auto d = gx->real_data();
          const double k_scale = gam[c] * inv_std[c];
          const double n = static_cast<double>(count);
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * inner;
            for (std::size_t k = 0; k < inner; ++k) {
              if (mode == Mode::train) {
                d[base + k] +=
                    k_scale * (go[base + k] - sum_go / n - xh[base + k] * sum_go_xh / n);
              } else {
                d[base + k] += k_scale * go[base + k];
              }
            }
          }
        }
      });
}

Var mse(const Var& pred, const Var& target) {
  Var diff = sub(pred, target);
  return mean(mul(diff, diff));
}

Var relative_mse(const Var& pred, const Var& target) {
  check_elementwise(pred, target, "relative_mse");
  require_real(pred.value(), "relative_mse");
  if (pred.value().rank() < 1 || pred.value().dim(0) == 0) {
    throw ShapeError("relative_mse: expected a leading sample axis");
  }
  const std::size_t samples = pred.value().dim(0);
  const std::size_t per = pred.value().numel() / samples;
  auto p = pred.value().real_data();
  auto t = target.value().real_data();
  auto denom = std::make_shared<std::vector<double>>(samples);
  double total = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = s * per; k < (s + 1) * per; ++k) {
      num += (p[k] - t[k]) * (p[k] - t[k]);
      den += t[k] * t[k];
    }
    if (den == 0.0) {
      throw std::domain_error("relative_mse: target sample " + std::to_string(s) +
                              " has zero norm");
    }
    (*denom)[s] = den;
    total += num / den;
  }
  return pred.tape().record(
      Tensor::scalar(total / static_cast<double>(samples)), {pred, target},
      [samples, per, denom](const BackwardContext& ctx) {
        const double go = ctx.grad_output().item() / static_cast<double>(samples);
        auto p = ctx.input(0).real_data();
        auto t = ctx.input(1).real_data();
        for (std::size_t i = 0; i < 2; ++i) {
          Tensor* g = ctx.grad_input(i);
          if (!g) continue;
          auto d = g->real_data();
          const double sign = i == 0 ? 1.0 : -1.0;
          for (std::size_t s = 0; s < samples; ++s) {
            const double f = 2.0 * go / (*denom)[s];
            for (std::size_t k = s * per; k < (s + 1) * per; ++k) {
              d[k] += sign * f * (p[k] - t[k]);
            }
          }
        }
        // d/dt of 1/||t||^2 contributes when the target itself is tracked.
        if (Tensor* g = ctx.grad_input(1)) {
          auto d = g->real_data();
          for (std::size_t s = 0; s < samples; ++s) {
            double num = 0.0;
            for (std::size_t k = s * per; k < (s + 1) * per; ++k) {
              num += (p[k] - t[k]) * (p[k] - t[k]);
            }
            const double den = (*denom)[s];
            for (std::size_t k = s * per; k < (s + 1) * per; ++k) {
              d[k] -= go * 2.0 * t[k] * num / (den * den);
            }
          }
        }
      });
}

}  // namespace phasefno::ad
