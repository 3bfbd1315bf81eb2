#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "phasefno/archive.hpp"
#include "phasefno/grid.hpp"
#include "phasefno/ops.hpp"
#include "phasefno/spectral.hpp"
#include "phasefno/tape.hpp"

namespace phasefno::neuralop {

enum class Variant { fno, fno_phase };

/// One phase pair per retained mode, or a single pair shared by all modes.
enum class PhaseLayout { per_mode, shared };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
std::string to_string(PhaseLayout p);
PhaseLayout parse_phase_layout(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::fno;
  int layers = 4;
  int max_mode = 4;
  std::size_t in_channels = 4;
  std::size_t width = 4;
  std::size_t out_channels = 1;
  bool batch_norm = true;
  spectral::FrequencyConvention frequency = spectral::FrequencyConvention::angular;
  PhaseLayout phase_layout = PhaseLayout::per_mode;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on layers < 1, max_mode < 0, width < in_channels
  /// or zero channel counts.
  void validate() const;
  std::size_t modes() const;
  std::size_t phase_rows() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerParams {
  ad::Tensor mix;       // (width, width), pointwise, no bias
  ad::Tensor spectral;  // complex (modes, width, width)
  ad::Tensor phase;     // (phase_rows, 2): (space, time) angles; empty for the baseline
  ad::Tensor gamma;     // (width)
  ad::Tensor beta;      // (width)
  ad::BatchNormState norm;
};

struct ModelParams {
  ad::Tensor lift_weight;  // (width, in_channels)
  ad::Tensor lift_bias;    // (width)
  std::vector<LayerParams> layers;
  ad::Tensor proj_weight;  // (out_channels, width)
  ad::Tensor proj_bias;    // (out_channels)
};

/// A named trainable tensor inside ModelParams.
struct ParamRef {
  std::string name;
  ad::Tensor* tensor;
  bool is_phase;
};

/// Lifting R, L spectral layers v <- gelu(norm(W v + K v)), projection Q.
class Model {
 public:
  /// Fresh parameters drawn from config.seed.
  Model(ModelConfig config, GridSpec grid);
  Model(ModelConfig config, GridSpec grid, ModelParams params);

  const ModelConfig& config() const { return config_; }
  const GridSpec& grid() const { return grid_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  const spectral::SpectralBasis& basis() const { return basis_; }

  /// Trainable tensors in a fixed order (running statistics excluded).
  std::vector<ParamRef> parameters();
  std::size_t parameter_count() const;

  /// Records the forward pass on `tape`. `vars` must come from bind() on the same tape.
  /// Input shape (batch, in_channels, nx, nt). Train mode updates running statistics.
  ad::Var forward(const std::vector<ad::Var>& vars, const ad::Var& input, ad::Mode mode);

  /// Records every parameter as a leaf; phase entries become constants when `freeze_phase`.
  std::vector<ad::Var> bind(ad::Tape& tape, bool freeze_phase = false);

  /// Eval-mode forward without gradient tracking.
  ad::Tensor predict(const ad::Tensor& input);

  /// Largest envelope exponent over layers (0 for the baseline).
  double phase_exponent_bound() const;

  /// Shrinks phase rows whose envelope exponent exceeds `bound` until it equals `bound`.
  /// Returns the number of rows changed.
  std::size_t clamp_phase(double bound);

 private:
  ModelConfig config_;
  GridSpec grid_;
  spectral::SpectralBasis basis_;
  ModelParams params_;
};

ModelParams init_params(const ModelConfig& config);

/// Non-finite activation inside the network.
class NonFiniteActivation : public std::runtime_error {
 public:
  NonFiniteActivation(int layer, const std::string& where);
  int layer() const { return layer_; }

 private:
  int layer_;
};

inline constexpr double kPhaseExponentGuard = 60.0;

struct Checkpoint {
  ModelConfig config;
  GridSpec grid;
  ModelParams params;
};

Archive to_archive(const Checkpoint& checkpoint);
Checkpoint from_archive(const Archive& archive);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Converts a baseline checkpoint to the phase variant with all angles zero.
Checkpoint promote(const Checkpoint& baseline);

}  // namespace phasefno::neuralop
