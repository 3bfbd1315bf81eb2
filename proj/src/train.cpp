#include "phasefno/train.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

namespace phasefno::train {

using ad::Tensor;

std::string to_string(Task t) { return t == Task::state ? "state" : "control"; }

Task parse_task(const std::string& s) {
  if (s == "state") return Task::state;
  if (s == "control") return Task::control;
  throw std::invalid_argument("unknown task '" + s + "' (expected state or control)");
}

void GenerateConfig::validate() const {
  if (count == 0) throw std::invalid_argument("generate: count must be positive");
  if (workers == 0) throw std::invalid_argument("generate: need at least one worker");
  solver.validate();
  grf::GrfConfig g{length_scale, stddev, solver.grid.nt, solver.grid.length_t, jitter, seed};
  g.validate();
  if (task == Task::control && !(regularization > 0.0)) {
    throw std::invalid_argument("generate: lambda must be positive");
  }
}

GenerationError::GenerationError(std::size_t sample, const std::string& what)
    : std::runtime_error("sample " + std::to_string(sample) + ": " + what), sample_(sample) {}

namespace {

Archive manifest_of(const GenerateConfig& c) {
  Archive a;
  a.kind = "dataset";
  a.set("task", to_string(c.task));
  a.set("count", std::to_string(c.count));
  a.set("seed", std::to_string(c.seed));
  a.set("grid.nx", std::to_string(c.solver.grid.nx));
  a.set("grid.nt", std::to_string(c.solver.grid.nt));
  a.set("grid.length_x", format_double(c.solver.grid.length_x));
  a.set("grid.length_t", format_double(c.solver.grid.length_t));
  a.set("initial", "sin(pi x)");
  a.set("grf.kernel", "squared-exponential");
  a.set("grf.length_scale", format_double(c.length_scale));
  a.set("grf.stddev", format_double(c.stddev));
  a.set("grf.jitter", format_double(c.jitter));
  a.set("solver.viscosity", format_double(c.solver.viscosity));
  a.set("solver.refine_x", std::to_string(c.solver.refine_x));
  a.set("solver.refine_t", std::to_string(c.solver.refine_t));
  a.set("solver.blowup", format_double(c.solver.blowup));
  if (c.task == Task::control) {
    a.set("control.lambda", format_double(c.regularization));
    a.set("control.desired", "0");
    a.set("control.max_iterations", std::to_string(c.optimizer.max_iterations));
    a.set("control.tolerance", format_double(c.optimizer.tolerance));
    a.set("control.armijo", format_double(c.optimizer.armijo));
    a.set("control.max_halvings", std::to_string(c.optimizer.max_halvings));
    a.set("control.initial_step", format_double(c.optimizer.initial_step));
  }
  return a;
}

std::size_t parse_count(const std::string& s) {
  std::size_t used = 0;
  const unsigned long long v = std::stoull(s, &used);
  if (used != s.size()) throw ArchiveError("manifest: expected an integer, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

GenerateConfig config_from_manifest(const Archive& m) {
  GenerateConfig c;
  try {
    c.task = parse_task(m.get("task"));
    c.count = parse_count(m.get("count"));
    c.seed = std::stoull(m.get("seed"));
    c.solver.grid = {parse_count(m.get("grid.nx")), parse_count(m.get("grid.nt")),
                     parse_double(m.get("grid.length_x")), parse_double(m.get("grid.length_t"))};
    c.length_scale = parse_double(m.get("grf.length_scale"));
    c.stddev = parse_double(m.get("grf.stddev"));
    c.jitter = parse_double(m.get("grf.jitter"));
    c.solver.viscosity = parse_double(m.get("solver.viscosity"));
    c.solver.refine_x = parse_count(m.get("solver.refine_x"));
    c.solver.refine_t = parse_count(m.get("solver.refine_t"));
    c.solver.blowup = parse_double(m.get("solver.blowup"));
    if (c.task == Task::control) {
      c.regularization = parse_double(m.get("control.lambda"));
      c.optimizer.max_iterations = static_cast<int>(parse_count(m.get("control.max_iterations")));
      c.optimizer.tolerance = parse_double(m.get("control.tolerance"));
      c.optimizer.armijo = parse_double(m.get("control.armijo"));
      c.optimizer.max_halvings = static_cast<int>(parse_count(m.get("control.max_halvings")));
      c.optimizer.initial_step = parse_double(m.get("control.initial_step"));
    }
  } catch (const std::invalid_argument& e) {
    throw ArchiveError(std::string("manifest: ") + e.what());
  }
  return c;
}

Dataset generate_dataset(const GenerateConfig& c) {
  c.validate();
  const GridSpec& grid = c.solver.grid;
  const grf::GrfConfig gc{c.length_scale, c.stddev, grid.nt, grid.length_t, c.jitter, c.seed};
  const auto draws = grf::sample(gc, 2 * c.count);

  Dataset d;
  d.task = c.task;
  d.grid = grid;
  d.left = Tensor({c.count, grid.nt});
  d.right = Tensor({c.count, grid.nt});
  d.target = Tensor({c.count, grid.nx, grid.nt});
  d.manifest = manifest_of(c);

  std::vector<double> initial(grid.nx);
  for (std::size_t i = 0; i < grid.nx; ++i) initial[i] = std::sin(std::numbers::pi * grid.x(i) / grid.length_x);

  std::vector<int> unconverged(c.count, 0);
  auto run = [&](std::size_t s) {
    burgers::BurgersProblem p;
    p.solver = c.solver;
    p.initial = initial;
    p.left = draws[2 * s];
    p.right = draws[2 * s + 1];
    Field2D out;
    if (c.task == Task::state) {
      out = burgers::solve(p);
    } else {
      control::ControlProblem cp;
      cp.state = p;
      cp.desired = Field2D(grid);
      cp.regularization = c.regularization;
      cp.optimizer = c.optimizer;
      const control::OptimizeResult r = control::optimize(cp);
      unconverged[s] = r.converged ? 0 : 1;
      out = r.control;
    }
    std::copy(p.left.begin(), p.left.end(), d.left.real_data().begin() + s * grid.nt);
    std::copy(p.right.begin(), p.right.end(), d.right.real_data().begin() + s * grid.nt);
    std::copy(out.data().begin(), out.data().end(), d.target.real_data().begin() + s * grid.points());
  };

  // Workers take sample ids from a shared counter; every sample writes its own slots.
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::size_t failed = c.count;
  std::string failure;
  auto worker = [&]() {
    for (std::size_t s = next++; s < c.count; s = next++) {
      try {
        run(s);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (s < failed) {
          failed = s;
          failure = e.what();
        }
      }
    }
  };
  const std::size_t n = std::min(c.workers, c.count);
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed < c.count) throw GenerationError(failed, failure);

  if (c.task == Task::control) {
    d.manifest.set("control.unconverged",
                   std::to_string(std::accumulate(unconverged.begin(), unconverged.end(), 0)));
  }
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  Archive a = d.manifest;
  a.kind = "dataset";
  a.arrays.clear();
  a.add("g", d.left);
  a.add("h", d.right);
  a.add("target", d.target);
  write_archive(a, path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  Archive a = read_archive(path);
  if (a.kind != "dataset") throw ArchiveError(path.string() + ": not a dataset");
  const GenerateConfig c = config_from_manifest(a);
  Dataset d;
  d.task = c.task;
  d.grid = c.solver.grid;
  d.left = a.array("g");
  d.right = a.array("h");
  d.target = a.array("target");
  const ad::Shape bc{c.count, d.grid.nt};
  if (d.left.shape() != bc || d.right.shape() != bc ||
      d.target.shape() != ad::Shape{c.count, d.grid.nx, d.grid.nt}) {
    throw ArchiveError(path.string() + ": array shapes do not match the manifest");
  }
  a.arrays.clear();
  d.manifest = std::move(a);
  return d;
}

Tensor encode_inputs(const Dataset& d) {
  const GridSpec& g = d.grid;
  const std::size_t n = d.size();
  Tensor out({n, kInputChannels, g.nx, g.nt});
  auto o = out.real_data();
  for (std::size_t s = 0; s < n; ++s) {
    double* base = o.data() + s * kInputChannels * g.points();
    for (std::size_t i = 0; i < g.nx; ++i) {
      for (std::size_t j = 0; j < g.nt; ++j) {
        const std::size_t p = i * g.nt + j;
        base[p] = d.left.real_data()[s * g.nt + j];
        base[g.points() + p] = d.right.real_data()[s * g.nt + j];
        base[2 * g.points() + p] = g.x(i);
        base[3 * g.points() + p] = g.t(j);
      }
    }
  }
  return out;
}

Tensor encode_targets(const Dataset& d) {
  return d.target.reshaped({d.size(), 1, d.grid.nx, d.grid.nt});
}

double relative_mse(const Tensor& pred, const Tensor& target) {
  ad::Tape tape;
  return ad::relative_mse(tape.constant(pred), tape.constant(target)).value().item();
}

void Adam::step(const std::vector<neuralop::ParamRef>& params, const std::vector<Tensor>& grads,
                const std::vector<bool>& skip) {
  if (m_.empty()) {
    for (const auto& p : params) {
      const std::size_t n = p.tensor->numel() * (p.tensor->is_complex() ? 2 : 1);
      m_.emplace_back(n, 0.0);
      v_.emplace_back(n, 0.0);
    }
  }
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (skip[i]) continue;
    Tensor& t = *params[i].tensor;
    double* x = t.is_complex() ? reinterpret_cast<double*>(t.complex_data().data()) : t.real_data().data();
    const double* g = grads[i].is_complex()
                          ? reinterpret_cast<const double*>(grads[i].complex_data().data())
                          : grads[i].real_data().data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < m.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
      x[k] -= config_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.epsilon);
    }
  }
}

void TrainConfig::validate() const {
  model.validate();
  if (epochs < 0) throw std::invalid_argument("train: epochs must be non-negative");
  if (!(adam.learning_rate >= 0.0)) throw std::invalid_argument("train: learning rate must be non-negative");
  if (model.in_channels != kInputChannels || model.out_channels != 1) {
    throw std::invalid_argument("train: model must map 4 input channels to 1 output channel");
  }
}

DivergenceError::DivergenceError(int epoch, double loss)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                         std::to_string(loss) + ")"),
      epoch_(epoch) {}

namespace {

Tensor gather(const Tensor& t, const std::vector<std::size_t>& rows) {
  ad::Shape shape = t.shape();
  const std::size_t stride = t.numel() / shape[0];
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(t.real_data().begin() + rows[r] * stride, stride, out.real_data().begin() + r * stride);
  }
  return out;
}

}  // namespace

FitResult fit(const Dataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.size() == 0) throw std::invalid_argument("train: empty dataset");
  const Tensor inputs = encode_inputs(dataset);
  const Tensor targets = encode_targets(dataset);
  const std::size_t n = dataset.size();
  const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);

  neuralop::Model model(config.model, dataset.grid);
  Adam adam(config.adam);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  FitResult result;
  result.best = {model.config(), model.grid(), model.params()};
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b0 = 0; b0 < n; b0 += batch) {
      const std::size_t b1 = std::min(n, b0 + batch);
      const std::vector<std::size_t> rows(order.begin() + b0, order.begin() + b1);
      ad::Tape tape;
      const auto vars = model.bind(tape, config.freeze_phase);
      const ad::Var in = tape.constant(batch < n ? gather(inputs, rows) : inputs);
      const ad::Var tg = tape.constant(batch < n ? gather(targets, rows) : targets);
      const ad::Var loss = ad::relative_mse(model.forward(vars, in, ad::Mode::train), tg);
      const double value = loss.value().item();
      if (!std::isfinite(value) || value > config.divergence) throw DivergenceError(epoch, value);
      total += value * static_cast<double>(b1 - b0);

      if (batch == n && (result.best_epoch < 0 || value < result.best_loss)) {
        result.best = {model.config(), model.grid(), model.params()};
        result.best_loss = value;
        result.best_epoch = epoch;
      }
      const ad::Gradients grads = tape.backward(loss);
      const auto params = model.parameters();
      std::vector<Tensor> g;
      std::vector<bool> skip;
      for (std::size_t i = 0; i < params.size(); ++i) {
        const bool frozen = params[i].is_phase && config.freeze_phase;
        g.push_back(frozen ? Tensor() : grads.of(vars[i].id()));
        skip.push_back(frozen);
      }
      adam.step(params, g, skip);
      model.clamp_phase(neuralop::kPhaseExponentGuard);
    }
    const double epoch_loss = total / static_cast<double>(n);
    if (batch < n && (result.best_epoch < 0 || epoch_loss < result.best_loss)) {
      // With mini-batches the logged loss mixes parameter states; keep the end-of-epoch one.
      result.best = {model.config(), model.grid(), model.params()};
      result.best_loss = epoch_loss;
      result.best_epoch = epoch;
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.curve.push_back({epoch, epoch_loss, wall});
    if (on_epoch) on_epoch(result.curve.back());
  }
  return result;
}

RegionErrors region_errors(const std::vector<double>& e, const GridSpec& g) {
  RegionErrors r;
  double left = 0, right = 0, initial = 0, final = 0, boundary = 0, interior = 0, all = 0;
  std::size_t nb = 0, ni = 0;
  for (std::size_t i = 0; i < g.nx; ++i) {
    for (std::size_t j = 0; j < g.nt; ++j) {
      const double v = e[i * g.nt + j];
      all += v;
      if (i == 0) left += v;
      if (i + 1 == g.nx) right += v;
      if (j == 0) initial += v;
      if (j + 1 == g.nt) final += v;
      if (i == 0 || i + 1 == g.nx || j == 0 || j + 1 == g.nt) {
        boundary += v;
        ++nb;
      } else {
        interior += v;
        ++ni;
      }
    }
  }
  r.left = left / static_cast<double>(g.nt);
  r.right = right / static_cast<double>(g.nt);
  r.initial = initial / static_cast<double>(g.nx);
  r.final = final / static_cast<double>(g.nx);
  r.boundary = boundary / static_cast<double>(nb);
  r.interior = ni > 0 ? interior / static_cast<double>(ni) : 0.0;
  r.all = all / static_cast<double>(g.points());
  return r;
}

BoundaryReport boundary_error_report(neuralop::Model& model, const Dataset& dataset,
                                     std::optional<std::size_t> sample) {
  if (sample && *sample >= dataset.size()) {
    throw std::out_of_range("sample id " + std::to_string(*sample) + " out of range [0, " +
                            std::to_string(dataset.size() - 1) + "]");
  }
  Tensor inputs = encode_inputs(dataset);
  Tensor targets = encode_targets(dataset);
  if (sample) {
    inputs = gather(inputs, {*sample});
    targets = gather(targets, {*sample});
  }
  const Tensor pred = model.predict(inputs);
  const GridSpec& g = dataset.grid;
  const std::size_t n = targets.dim(0);
  BoundaryReport report;
  report.mean_error.assign(g.points(), 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t p = 0; p < g.points(); ++p) {
      const std::size_t k = s * g.points() + p;
      report.mean_error[p] += std::abs(pred.real_data()[k] - targets.real_data()[k]) / static_cast<double>(n);
    }
  }
  report.regions = region_errors(report.mean_error, g);
  report.relative_mse = relative_mse(pred, targets);
  return report;
}

}  // namespace phasefno::train
