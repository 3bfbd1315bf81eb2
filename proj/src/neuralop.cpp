#include "phasefno/neuralop.hpp"

#include <cmath>
#include <random>

namespace phasefno::neuralop {

using ad::Tensor;
using ad::Var;

std::string to_string(Variant v) { return v == Variant::fno ? "fno" : "fno-phase"; }

Variant parse_variant(const std::string& s) {
  if (s == "fno") return Variant::fno;
  if (s == "fno-phase" || s == "fno_phase") return Variant::fno_phase;
  throw std::invalid_argument("unknown variant '" + s + "' (expected fno or fno-phase)");
}

std::string to_string(PhaseLayout p) { return p == PhaseLayout::per_mode ? "per-mode" : "shared"; }

PhaseLayout parse_phase_layout(const std::string& s) {
  if (s == "per-mode") return PhaseLayout::per_mode;
  if (s == "shared") return PhaseLayout::shared;
  throw std::invalid_argument("unknown phase layout '" + s + "' (expected per-mode or shared)");
}

void ModelConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("model: need at least one layer");
  if (max_mode < 0) throw std::invalid_argument("model: max mode must be non-negative");
  if (in_channels == 0 || out_channels == 0) {
    throw std::invalid_argument("model: channel counts must be positive");
  }
  if (width < in_channels) {
    throw std::invalid_argument("model: width " + std::to_string(width) +
                                " is smaller than the input channel count " +
                                std::to_string(in_channels));
  }
}

std::size_t ModelConfig::modes() const {
  const auto pa = static_cast<std::size_t>(2 * max_mode + 1);
  return pa * pa;
}

std::size_t ModelConfig::phase_rows() const {
  return phase_layout == PhaseLayout::per_mode ? modes() : 1;
}

NonFiniteActivation::NonFiniteActivation(int layer, const std::string& where)
    : std::runtime_error("non-finite activation in " + where + " (layer " + std::to_string(layer) +
                         ")"),
      layer_(layer) {}

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const std::size_t nv = config.width;
  const double bound = 1.0 / std::sqrt(static_cast<double>(nv));
  std::uniform_real_distribution<double> fan_in(-bound, bound);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double spectral_scale = 1.0 / (static_cast<double>(nv) * static_cast<double>(config.modes()));

  auto uniform = [&](ad::Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.real_data()) v = fan_in(rng);
    return t;
  };

  ModelParams p;
  p.lift_weight = uniform({nv, config.in_channels});
  p.lift_bias = Tensor({nv});
  for (int l = 0; l < config.layers; ++l) {
    LayerParams layer;
    layer.mix = uniform({nv, nv});
    layer.spectral = Tensor({config.modes(), nv, nv}, ad::DType::complex128);
    for (auto& z : layer.spectral.complex_data()) {
      const double re = unit(rng);
      const double im = unit(rng);
      z = ad::Complex(re, im) * spectral_scale;
    }
    if (config.variant == Variant::fno_phase) layer.phase = Tensor({config.phase_rows(), 2});
    if (config.batch_norm) {
      layer.gamma = Tensor::real({nv}, std::vector<double>(nv, 1.0));
      layer.beta = Tensor({nv});
      layer.norm.running_mean = Tensor({nv});
      layer.norm.running_var = Tensor::real({nv}, std::vector<double>(nv, 1.0));
    }
    p.layers.push_back(std::move(layer));
  }
  p.proj_weight = uniform({config.out_channels, nv});
  p.proj_bias = Tensor({config.out_channels});
  return p;
}

namespace {

void check_shape(const Tensor& t, const ad::Shape& shape, const std::string& name) {
  if (t.shape() != shape) {
    throw ad::ShapeError("model: parameter " + name + " has shape " + ad::to_string(t.shape()) +
                         ", expected " + ad::to_string(shape));
  }
}

void check_params(const ModelConfig& c, const ModelParams& p) {
  const std::size_t nv = c.width;
  check_shape(p.lift_weight, {nv, c.in_channels}, "lift.weight");
  check_shape(p.lift_bias, {nv}, "lift.bias");
  if (p.layers.size() != static_cast<std::size_t>(c.layers)) {
    throw ad::ShapeError("model: expected " + std::to_string(c.layers) + " layers, got " +
                         std::to_string(p.layers.size()));
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    check_shape(layer.mix, {nv, nv}, pre + "mix");
    check_shape(layer.spectral, {c.modes(), nv, nv}, pre + "spectral");
    if (!layer.spectral.is_complex()) throw ad::ShapeError("model: " + pre + "spectral must be complex");
    if (c.variant == Variant::fno_phase) {
      check_shape(layer.phase, {c.phase_rows(), 2}, pre + "phase");
    }
    if (c.batch_norm) {
      check_shape(layer.gamma, {nv}, pre + "gamma");
      check_shape(layer.beta, {nv}, pre + "beta");
      check_shape(layer.norm.running_mean, {nv}, pre + "running_mean");
      check_shape(layer.norm.running_var, {nv}, pre + "running_var");
    }
  }
  check_shape(p.proj_weight, {c.out_channels, nv}, "proj.weight");
  check_shape(p.proj_bias, {c.out_channels}, "proj.bias");
}

bool all_finite(const Tensor& t) {
  for (double v : t.real_data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

Model::Model(ModelConfig config, GridSpec grid)
    : Model(config, grid, init_params(config)) {}

Model::Model(ModelConfig config, GridSpec grid, ModelParams params)
    : config_(config),
      grid_(grid),
      basis_(grid, spectral::ModeSet(config.max_mode, grid, config.frequency)),
      params_(std::move(params)) {
  config_.validate();
  check_params(config_, params_);
}

std::vector<ParamRef> Model::parameters() {
  std::vector<ParamRef> out;
  out.push_back({"lift.weight", &params_.lift_weight, false});
  out.push_back({"lift.bias", &params_.lift_bias, false});
  for (std::size_t l = 0; l < params_.layers.size(); ++l) {
    auto& layer = params_.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    out.push_back({pre + "mix", &layer.mix, false});
    out.push_back({pre + "spectral", &layer.spectral, false});
    if (config_.variant == Variant::fno_phase) out.push_back({pre + "phase", &layer.phase, true});
    if (config_.batch_norm) {
      out.push_back({pre + "gamma", &layer.gamma, false});
      out.push_back({pre + "beta", &layer.beta, false});
    }
  }
  out.push_back({"proj.weight", &params_.proj_weight, false});
  out.push_back({"proj.bias", &params_.proj_bias, false});
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const ParamRef& p : const_cast<Model*>(this)->parameters()) {
    n += p.tensor->numel() * (p.tensor->is_complex() ? 2 : 1);
  }
  return n;
}

std::vector<Var> Model::bind(ad::Tape& tape, bool freeze_phase) {
  std::vector<Var> vars;
  for (const ParamRef& p : parameters()) {
    vars.push_back(p.is_phase && freeze_phase ? tape.constant(*p.tensor) : tape.leaf(*p.tensor));
  }
  return vars;
}

Var Model::forward(const std::vector<Var>& vars, const Var& input, ad::Mode mode) {
  const Tensor& a = input.value();
  if (a.rank() != 4 || a.dim(1) != config_.in_channels || a.dim(2) != grid_.nx ||
      a.dim(3) != grid_.nt) {
    throw ad::ShapeError("model: input shape " + ad::to_string(a.shape()) + " does not match [batch, " +
                         std::to_string(config_.in_channels) + ", " + std::to_string(grid_.nx) +
                         ", " + std::to_string(grid_.nt) + "]");
  }
  if (vars.size() != parameters().size()) {
    throw std::invalid_argument("model: parameter binding does not match the model");
  }
  ad::Tape& tape = input.tape();
  std::size_t next = 0;
  auto take = [&]() -> const Var& { return vars[next++]; };

  const Var& lift_w = take();
  const Var& lift_b = take();
  Var v = ad::add_channel_bias(ad::channel_mix(lift_w, input), lift_b);
  if (!all_finite(v.value())) throw NonFiniteActivation(0, "lifting");

  const Var zero_phase = tape.constant(Tensor({1, 2}));
  for (std::size_t l = 0; l < params_.layers.size(); ++l) {
    const Var& mix = take();
    const Var& weights = take();
    const Var& phase = config_.variant == Variant::fno_phase ? take() : zero_phase;
    const Var local = ad::channel_mix(mix, v);
    const Var global = spectral::synthesize(
        spectral::mode_mix(weights, spectral::analyze(v, basis_)), phase, basis_);
    Var z = ad::add(local, global);
    if (config_.batch_norm) {
      const Var& gamma = take();
      const Var& beta = take();
      z = ad::batch_norm(z, gamma, beta, params_.layers[l].norm, mode);
    }
    v = ad::gelu(z);
    if (!all_finite(v.value())) {
      throw NonFiniteActivation(static_cast<int>(l) + 1, "spectral layer");
    }
  }

  const Var& proj_w = take();
  const Var& proj_b = take();
  Var out = ad::add_channel_bias(ad::channel_mix(proj_w, v), proj_b);
  if (!all_finite(out.value())) throw NonFiniteActivation(config_.layers + 1, "projection");
  return out;
}

Tensor Model::predict(const Tensor& input) {
  ad::Tape tape;
  std::vector<Var> vars;
  for (const ParamRef& p : parameters()) vars.push_back(tape.constant(*p.tensor));
  return forward(vars, tape.constant(input), ad::Mode::eval).value();
}

double Model::phase_exponent_bound() const {
  if (config_.variant != Variant::fno_phase) return 0.0;
  double bound = 0.0;
  for (const auto& layer : params_.layers) {
    bound = std::max(bound, spectral::exponent_bound(basis_.modes(), layer.phase, grid_));
  }
  return bound;
}

std::size_t Model::clamp_phase(double bound) {
  if (config_.variant != Variant::fno_phase) return 0;
  const spectral::ModeSet& modes = basis_.modes();
  const bool shared = config_.phase_layout == PhaseLayout::shared;
  std::size_t changed = 0;
  for (auto& layer : params_.layers) {
    auto ph = layer.phase.real_data();
    for (std::size_t r = 0; r < layer.phase.dim(0); ++r) {
      const double ax = ph[2 * r];
      const double at = ph[2 * r + 1];
      auto exponent = [&](double s) {
        double e = 0.0;
        const std::size_t first = shared ? 0 : r;
        const std::size_t last = shared ? modes.size() : r + 1;
        for (std::size_t m = first; m < last; ++m) {
          e = std::max(e, std::abs(modes.kx(m) * std::sin(s * ax)) * grid_.length_x +
                              std::abs(modes.kt(m) * std::sin(s * at)) * grid_.length_t);
        }
        return e;
      };
      if (exponent(1.0) <= bound) continue;
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (exponent(mid) <= bound ? lo : hi) = mid;
      }
      ph[2 * r] = lo * ax;
      ph[2 * r + 1] = lo * at;
      ++changed;
    }
  }
  return changed;
}

// Checkpoints.

namespace {

std::string convention_name(spectral::FrequencyConvention c) {
  return c == spectral::FrequencyConvention::angular ? "angular" : "integer";
}

spectral::FrequencyConvention parse_convention(const std::string& s) {
  if (s == "angular") return spectral::FrequencyConvention::angular;
  if (s == "integer") return spectral::FrequencyConvention::integer;
  throw ArchiveError("checkpoint: unknown frequency convention '" + s + "'");
}

long long parse_int(const std::string& s) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ArchiveError("checkpoint: expected an integer, got '" + s + "'");
  }
}

}  // namespace

Archive to_archive(const Checkpoint& ck) {
  const ModelConfig& c = ck.config;
  Archive a;
  a.kind = "checkpoint";
  a.set("variant", to_string(c.variant));
  a.set("layers", std::to_string(c.layers));
  a.set("max_mode", std::to_string(c.max_mode));
  a.set("in_channels", std::to_string(c.in_channels));
  a.set("width", std::to_string(c.width));
  a.set("out_channels", std::to_string(c.out_channels));
  a.set("activation", "gelu");
  a.set("batch_norm", c.batch_norm ? "on" : "off");
  a.set("frequency", convention_name(c.frequency));
  a.set("phase_layout", to_string(c.phase_layout));
  a.set("seed", std::to_string(c.seed));
  a.set("grid.nx", std::to_string(ck.grid.nx));
  a.set("grid.nt", std::to_string(ck.grid.nt));
  a.set("grid.length_x", format_double(ck.grid.length_x));
  a.set("grid.length_t", format_double(ck.grid.length_t));

  const ModelParams& p = ck.params;
  a.add("lift.weight", p.lift_weight);
  a.add("lift.bias", p.lift_bias);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    a.add(pre + "mix", layer.mix);
    a.add(pre + "spectral", layer.spectral);
    if (c.variant == Variant::fno_phase) a.add(pre + "phase", layer.phase);
    if (c.batch_norm) {
      a.add(pre + "gamma", layer.gamma);
      a.add(pre + "beta", layer.beta);
      a.add(pre + "running_mean", layer.norm.running_mean);
      a.add(pre + "running_var", layer.norm.running_var);
    }
  }
  a.add("proj.weight", p.proj_weight);
  a.add("proj.bias", p.proj_bias);
  return a;
}

Checkpoint from_archive(const Archive& a) {
  if (a.kind != "checkpoint") throw ArchiveError("expected a checkpoint, found '" + a.kind + "'");
  Checkpoint ck;
  ModelConfig& c = ck.config;
  try {
    c.variant = parse_variant(a.get("variant"));
    c.phase_layout = parse_phase_layout(a.get("phase_layout"));
  } catch (const std::invalid_argument& e) {
    throw ArchiveError(std::string("checkpoint: ") + e.what());
  }
  if (a.get("activation") != "gelu") {
    throw ArchiveError("checkpoint: unsupported activation '" + a.get("activation") + "'");
  }
  c.layers = static_cast<int>(parse_int(a.get("layers")));
  c.max_mode = static_cast<int>(parse_int(a.get("max_mode")));
  c.in_channels = static_cast<std::size_t>(parse_int(a.get("in_channels")));
  c.width = static_cast<std::size_t>(parse_int(a.get("width")));
  c.out_channels = static_cast<std::size_t>(parse_int(a.get("out_channels")));
  c.batch_norm = a.get("batch_norm") == "on";
  c.frequency = parse_convention(a.get("frequency"));
  c.seed = static_cast<std::uint64_t>(std::stoull(a.get("seed")));
  ck.grid.nx = static_cast<std::size_t>(parse_int(a.get("grid.nx")));
  ck.grid.nt = static_cast<std::size_t>(parse_int(a.get("grid.nt")));
  ck.grid.length_x = parse_double(a.get("grid.length_x"));
  ck.grid.length_t = parse_double(a.get("grid.length_t"));
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ArchiveError(std::string("checkpoint: ") + e.what());
  }

  ModelParams& p = ck.params;
  p.lift_weight = a.array("lift.weight");
  p.lift_bias = a.array("lift.bias");
  for (int l = 0; l < c.layers; ++l) {
    LayerParams layer;
    const std::string pre = "layer" + std::to_string(l) + ".";
    layer.mix = a.array(pre + "mix");
    layer.spectral = a.array(pre + "spectral");
    if (c.variant == Variant::fno_phase) layer.phase = a.array(pre + "phase");
    if (c.batch_norm) {
      layer.gamma = a.array(pre + "gamma");
      layer.beta = a.array(pre + "beta");
      layer.norm.running_mean = a.array(pre + "running_mean");
      layer.norm.running_var = a.array(pre + "running_var");
    }
    p.layers.push_back(std::move(layer));
  }
  p.proj_weight = a.array("proj.weight");
  p.proj_bias = a.array("proj.bias");
  try {
    check_params(c, p);
  } catch (const ad::ShapeError& e) {
    throw ArchiveError(std::string("checkpoint: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_archive(to_archive(checkpoint), path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return from_archive(read_archive(path));
}

Checkpoint promote(const Checkpoint& baseline) {
  if (baseline.config.variant == Variant::fno_phase) return baseline;
  Checkpoint out = baseline;
  out.config.variant = Variant::fno_phase;
  for (auto& layer : out.params.layers) layer.phase = Tensor({out.config.phase_rows(), 2});
  return out;
}

}  // namespace phasefno::neuralop
