#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasefno/archive.hpp"
#include "phasefno/burgers.hpp"
#include "phasefno/control.hpp"
#include "phasefno/grf.hpp"
#include "phasefno/neuralop.hpp"

namespace phasefno::train {

enum class Task { state, control };
std::string to_string(Task t);
Task parse_task(const std::string& s);

struct GenerateConfig {
  Task task = Task::state;
  std::size_t count = 50;
  std::uint64_t seed = 7;
  double length_scale = 0.15;
  double stddev = 1.0;
  double jitter = 1e-10;
  burgers::SolverConfig solver;
  double regularization = 0.1;  // control task; desired state is zero
  control::OptimizerConfig optimizer;
  std::size_t workers = 1;

  void validate() const;
};

/// Boundary data and targets on a shared grid.
struct Dataset {
  Task task = Task::state;
  GridSpec grid;
  ad::Tensor left;    // (count, nt): g(t)
  ad::Tensor right;   // (count, nt): h(t)
  ad::Tensor target;  // (count, nx, nt): phi or u*
  Archive manifest;   // generator settings as key-value meta

  std::size_t size() const { return left.dim(0); }
};

class GenerationError : public std::runtime_error {
 public:
  GenerationError(std::size_t sample, const std::string& what);
  std::size_t sample() const { return sample_; }

 private:
  std::size_t sample_;
};

/// g and h for sample s are GRF draws 2s and 2s+1 from one stream; phi0 = sin(pi x).
Dataset generate_dataset(const GenerateConfig& config);

/// Writes the dataset with its settings embedded; byte-identical for equal settings.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
GenerateConfig config_from_manifest(const Archive& manifest);

/// Input channels (g, h, x, t), each broadcast to the grid: (count, 4, nx, nt).
ad::Tensor encode_inputs(const Dataset& dataset);
/// Targets with a channel axis: (count, 1, nx, nt).
ad::Tensor encode_targets(const Dataset& dataset);
inline constexpr std::size_t kInputChannels = 4;

/// Mean over samples of ||pred - target||^2 / ||target||^2.
double relative_mse(const ad::Tensor& pred, const ad::Tensor& target);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}
  /// One update; grads[i] matches params[i]; entries with `skip[i]` are left alone.
  void step(const std::vector<neuralop::ParamRef>& params, const std::vector<ad::Tensor>& grads,
            const std::vector<bool>& skip);

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long step_ = 0;
};

struct TrainConfig {
  neuralop::ModelConfig model;
  int epochs = 500;
  std::size_t batch_size = 0;  // 0 = full batch
  AdamConfig adam;
  std::uint64_t seed = 0;      // shuffling
  bool freeze_phase = false;
  double divergence = 1e6;

  void validate() const;
};

struct EpochMetric {
  int epoch;
  double loss;
  double wall_time;
};

struct FitResult {
  neuralop::Checkpoint best;
  double best_loss = 0.0;
  int best_epoch = -1;
  std::vector<EpochMetric> curve;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, double loss);
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

using EpochCallback = std::function<void(const EpochMetric&)>;

/// Adam on relative MSE. The best checkpoint holds the parameters that produced
/// the lowest logged loss. Deterministic given the configs.
FitResult fit(const Dataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean absolute error per region of an (nx, nt) field.
struct RegionErrors {
  double left = 0.0;      // x = 0
  double right = 0.0;     // x = Lx
  double initial = 0.0;   // t = 0
  double final = 0.0;     // t = Lt
  double boundary = 0.0;  // union of the four edges
  double interior = 0.0;
  double all = 0.0;
};

RegionErrors region_errors(const std::vector<double>& abs_error, const GridSpec& grid);

struct BoundaryReport {
  RegionErrors regions;            // over every sample
  std::vector<double> mean_error;  // (nx, nt) mean of |pred - target| over samples
  double relative_mse = 0.0;
};

/// Eval-mode predictions against targets. With `sample` set, only that sample is used.
BoundaryReport boundary_error_report(neuralop::Model& model, const Dataset& dataset,
                                     std::optional<std::size_t> sample = std::nullopt);

}  // namespace phasefno::train
