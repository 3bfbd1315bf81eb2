#pragma once

#include "phasefno/tape.hpp"
#include "phasefno/tensor.hpp"

namespace phasefno::ad {

// Elementwise (real or complex, matching shapes and dtypes).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);

// Reductions to a real scalar.
Var sum(const Var& a);
Var mean(const Var& a);

/// Real 2-D matrix product (n×k)·(k×m).
Var matmul(const Var& a, const Var& b);

Var reshape(const Var& a, Shape shape);

Var make_complex(const Var& re, const Var& im);
Var real_part(const Var& z);
Var imag_part(const Var& z);
Var conj(const Var& z);

/// x·Φ(x) with Φ the standard normal CDF in its exact erf form.
Var gelu(const Var& x);
double gelu(double x);

/// Pointwise channel mixing: weight (out×in) applied to x of shape (batch, in, ...).
Var channel_mix(const Var& weight, const Var& x);

/// Adds a per-channel bias to x of shape (batch, channels, ...).
Var add_channel_bias(const Var& x, const Var& bias);

enum class Mode { train, eval };

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
};

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
};

/// Normalizes x of shape (batch, channels, ...) per channel.
///
/// Train mode uses batch statistics over all non-channel axes and updates
/// `state` (running variance uses the unbiased estimate). Eval mode reads
/// `state` only.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, Mode mode,
               BatchNormOptions options = {});

/// mean((a - b)^2) over all elements.
Var mse(const Var& pred, const Var& target);

/// Mean over the leading (sample) axis of ||pred - target||^2 / ||target||^2.
Var relative_mse(const Var& pred, const Var& target);

}  // namespace phasefno::ad
