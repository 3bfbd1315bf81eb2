#include "phasefno/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <random>
#include <sstream>

#include "phasefno/heat.hpp"
#include "phasefno/train.hpp"

namespace phasefno::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenerateOptions {
  std::string task = "state";
  std::size_t count = 50;
  std::uint64_t seed = 7;
  double viscosity = 0.05;
  std::size_t refine_x = 8;
  std::size_t refine_t = 32;
  double length_scale = 0.15;
  double stddev = 1.0;
  double jitter = 1e-10;
  double lambda = 0.1;
  int max_iterations = 200;
  std::size_t workers = 1;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GenerateOptions, task, count, seed, viscosity, refine_x, refine_t,
                                   length_scale, stddev, jitter, lambda, max_iterations, workers)

struct TrainOptions {
  std::string dataset;
  std::string variant = "fno";
  int layers = 4;
  int modes = 4;
  std::size_t width = 0;  // 0: equal to the input channel count
  int epochs = 500;
  double lr = 1e-3;
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  bool freeze_theta = false;
  bool batch_norm = true;
  std::string frequency = "angular";
  std::string phase_layout = "per-mode";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainOptions, dataset, variant, layers, modes, width, epochs, lr,
                                   batch_size, seed, freeze_theta, batch_norm, frequency,
                                   phase_layout)

struct EvalOptions {
  std::string checkpoint;
  std::string dataset;
  long long sample_id = -1;  // -1: every sample
  bool pgm = false;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalOptions, checkpoint, dataset, sample_id, pgm)

struct OracleOptions {
  double phi0_amplitude = 1.0;
  double phi0_center = 0.0;
  double phi0_width = 1.0;
  double k_max = 12.0;
  std::size_t nk = 512;
  double x_extent = 6.0;
  double t_end = 3.0;
  std::size_t nx = 121;
  std::size_t nt = 61;
  double residual_step = 0.02;
  std::size_t probes = 10;
  double epsilon = 1e-2;
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(OracleOptions, phi0_amplitude, phi0_center, phi0_width, k_max, nk,
                                   x_extent, t_end, nx, nt, residual_step, probes, epsilon, seed)

std::string hex(const unsigned char* p, std::size_t n) {
  std::ostringstream s;
  for (std::size_t i = 0; i < n; ++i) s << std::hex << std::setw(2) << std::setfill('0') << int(p[i]);
  return s.str();
}

fs::path output_dir(const std::string& flag, const std::string& command) {
  if (!flag.empty()) return flag;
  const char* root = std::getenv(kOutputRootVariable);
  return fs::path(root && *root ? root : "phasefno-runs") / command;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

/// Config recorded by an earlier run of `command`.
template <class Options>
Options options_from_manifest(const fs::path& path, const std::string& command) {
  const json m = read_json(path);
  if (m.value("command", "") != command) {
    throw UsageError(path.string() + " is a manifest for '" + m.value("command", "?") +
                     "', not '" + command + "'");
  }
  try {
    return m.at("config").get<Options>();
  } catch (const json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) { write_file(path, text); }

std::string input_hash(const std::vector<fs::path>& inputs, const json& config) {
  std::string all = config.dump();
  for (const auto& p : inputs) all += git_blob_hash(read_file(p));
  return git_blob_hash(all);
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    const json& seeds, const std::vector<fs::path>& inputs,
                    const std::vector<std::string>& outputs, double wall) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["seeds"] = seeds;
  m["input_hash"] = input_hash(inputs, config);
  json in = json::array();
  for (const auto& p : inputs) in.push_back({{"path", p.string()}, {"hash", git_blob_hash(read_file(p))}});
  m["inputs"] = in;
  m["outputs"] = outputs;
  m["wall_time_s"] = wall;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::string grid_csv(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  std::string s;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (j) s += ',';
      s += format_double(v[i * cols + j]);
    }
    s += '\n';
  }
  return s;
}

// Binary greyscale image, black = 0, white = largest value.
std::string pgm(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  double top = 0.0;
  for (double x : v) top = std::max(top, std::abs(x));
  std::string s = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  for (double x : v) {
    s += static_cast<char>(top > 0.0 ? static_cast<unsigned char>(std::lround(255.0 * std::abs(x) / top)) : 0);
  }
  return s;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

template <class F>
auto as_usage(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

// Commands.

int cmd_generate(const GenerateOptions& o, const fs::path& dir, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  train::GenerateConfig c;
  as_usage([&] {
    c.task = train::parse_task(o.task);
    c.count = o.count;
    c.seed = o.seed;
    c.solver.viscosity = o.viscosity;
    c.solver.refine_x = o.refine_x;
    c.solver.refine_t = o.refine_t;
    c.length_scale = o.length_scale;
    c.stddev = o.stddev;
    c.jitter = o.jitter;
    c.regularization = o.lambda;
    c.optimizer.max_iterations = o.max_iterations;
    c.workers = o.workers;
    c.validate();
    return 0;
  });
  const train::Dataset d = train::generate_dataset(c);
  fs::create_directories(dir);
  train::save_dataset(d, dir / "dataset.bin");
  write_manifest(dir, "generate", json(o), {{"grf", o.seed}}, {}, {"dataset.bin"}, seconds_since(start));
  out << "wrote " << d.size() << " " << o.task << " samples to " << (dir / "dataset.bin").string() << "\n";
  if (d.manifest.has("control.unconverged")) {
    out << "optimizer stopped at the iteration cap for " << d.manifest.get("control.unconverged")
        << " samples\n";
  }
  return kSuccess;
}

int cmd_train(const TrainOptions& o, const fs::path& dir, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  if (o.dataset.empty()) throw UsageError("train: --dataset is required");
  const train::Dataset d = train::load_dataset(o.dataset);
  train::TrainConfig c;
  as_usage([&] {
    c.model.variant = neuralop::parse_variant(o.variant);
    c.model.layers = o.layers;
    c.model.max_mode = o.modes;
    c.model.in_channels = train::kInputChannels;
    c.model.width = o.width == 0 ? train::kInputChannels : o.width;
    c.model.out_channels = 1;
    c.model.batch_norm = o.batch_norm;
    if (o.frequency == "angular") {
      c.model.frequency = spectral::FrequencyConvention::angular;
    } else if (o.frequency == "integer") {
      c.model.frequency = spectral::FrequencyConvention::integer;
    } else {
      throw std::invalid_argument("unknown frequency convention '" + o.frequency + "'");
    }
    c.model.phase_layout = neuralop::parse_phase_layout(o.phase_layout);
    c.model.seed = o.seed;
    c.epochs = o.epochs;
    c.adam.learning_rate = o.lr;
    c.batch_size = o.batch_size;
    c.seed = o.seed;
    c.freeze_phase = o.freeze_theta;
    c.validate();
    return 0;
  });
  fs::create_directories(dir);
  std::string csv = "epoch,train_relative_mse,wall_time_s\n";
  const train::FitResult r = train::fit(d, c, [&](const train::EpochMetric& m) {
    csv += std::to_string(m.epoch) + "," + format_double(m.loss) + "," + format_double(m.wall_time) + "\n";
  });
  neuralop::save_checkpoint(r.best, dir / "checkpoint.bin");
  write_text(dir / "metrics.csv", csv);
  write_manifest(dir, "train", json(o), {{"init", o.seed}, {"shuffle", o.seed}}, {o.dataset},
                 {"checkpoint.bin", "metrics.csv"}, seconds_since(start));
  out << "variant " << o.variant << ": ";
  if (r.best_epoch > 0) {
    out << "best training relative MSE " << r.best_loss << " at epoch " << r.best_epoch << "\n";
  } else {
    out << "no training epochs; checkpoint holds the initialization\n";
  }
  return kSuccess;
}

int cmd_eval(const EvalOptions& o, const fs::path& dir, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  if (o.checkpoint.empty() || o.dataset.empty()) {
    throw UsageError("eval: --checkpoint and --dataset are required");
  }
  const neuralop::Checkpoint ck = neuralop::load_checkpoint(o.checkpoint);
  const train::Dataset d = train::load_dataset(o.dataset);
  if (!(ck.grid == d.grid)) throw std::runtime_error("eval: checkpoint and dataset grids differ");
  neuralop::Model model(ck.config, ck.grid, ck.params);
  std::optional<std::size_t> sample;
  if (o.sample_id >= 0) sample = static_cast<std::size_t>(o.sample_id);
  const train::BoundaryReport r = train::boundary_error_report(model, d, sample);

  fs::create_directories(dir);
  const auto& g = r.regions;
  std::ostringstream report;
  report << "region,mean_abs_error\n";
  const std::pair<const char*, double> rows[] = {
      {"left", g.left},         {"right", g.right},       {"initial", g.initial}, {"final", g.final},
      {"boundary", g.boundary}, {"interior", g.interior}, {"all", g.all}};
  for (const auto& [name, v] : rows) report << name << "," << format_double(v) << "\n";
  report << "relative_mse," << format_double(r.relative_mse) << "\n";
  write_text(dir / "report.csv", report.str());
  write_text(dir / "error.csv", grid_csv(r.mean_error, d.grid.nx, d.grid.nt));
  std::vector<std::string> outputs{"report.csv", "error.csv"};
  if (o.pgm) {
    write_text(dir / "error.pgm", pgm(r.mean_error, d.grid.nx, d.grid.nt));
    outputs.push_back("error.pgm");
  }
  write_manifest(dir, "eval", json(o), json::object(), {o.checkpoint, o.dataset}, outputs,
                 seconds_since(start));
  out << report.str();
  return kSuccess;
}

int cmd_oracle(const OracleOptions& o, const fs::path& dir, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  heat::HeatLqrProblem p;
  p.initial = {o.phi0_amplitude, o.phi0_center, o.phi0_width};
  p.k_max = o.k_max;
  p.nk = o.nk;
  as_usage([&] {
    if (o.nx < 2 || o.nt < 2) throw std::invalid_argument("oracle: need at least 2 points per axis");
    p.validate();
    return 0;
  });
  const auto xs = heat::linspace(-o.x_extent, o.x_extent, o.nx);
  const auto ts = heat::linspace(0.0, o.t_end, o.nt);
  const heat::Fields f = heat::optimal_fields(p, xs, ts);
  heat::HeatLqrProblem doubled = p;
  doubled.nk *= 2;
  const heat::Fields f2 = heat::optimal_fields(doubled, xs, ts);
  double delta = 0.0;
  for (std::size_t k = 0; k < f.state.size(); ++k) {
    delta = std::max({delta, std::abs(f.state[k] - f2.state[k]), std::abs(f.control[k] - f2.control[k])});
  }
  const double h = o.residual_step;
  const heat::Residuals res =
      heat::optimality_residuals(p, -std::min(o.x_extent, 4.0), std::min(o.x_extent, 4.0), 5 * h,
                                 std::max(6 * h, std::min(o.t_end, 2.0)), h);

  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> amp(-1.0, 1.0), xc(-3.0, 3.0), w(0.5, 1.5), tc(0.5, 3.0),
      tw(0.2, 0.6);
  std::vector<heat::Perturbation> perts;
  for (std::size_t k = 0; k < o.probes; ++k) perts.push_back({amp(rng), xc(rng), w(rng), tc(rng), tw(rng)});
  heat::ProbeSettings ps;
  ps.epsilon = o.epsilon;
  const heat::ProbeReport probe = heat::cost_optimality_probe(p, perts, ps);

  fs::create_directories(dir);
  write_text(dir / "state.csv", grid_csv(f.state, xs.size(), ts.size()));
  write_text(dir / "control.csv", grid_csv(f.control, xs.size(), ts.size()));
  std::ostringstream report;
  report << "quantity,value\n";
  report << "residual_state," << format_double(res.state) << "\n";
  report << "residual_adjoint," << format_double(res.adjoint) << "\n";
  report << "max_residual," << format_double(std::max(res.state, res.adjoint)) << "\n";
  report << "nk_doubling_delta," << format_double(delta) << "\n";
  report << "max_imaginary," << format_double(f.max_imaginary) << "\n";
  report << "cost_optimal," << format_double(probe.base) << "\n";
  for (std::size_t k = 0; k < probe.entries.size(); ++k) {
    report << "cost_plus_" << k << "," << format_double(probe.entries[k].plus) << "\n";
    report << "cost_minus_" << k << "," << format_double(probe.entries[k].minus) << "\n";
  }
  report << "probe_optimal," << (probe.optimal ? 1 : 0) << "\n";
  write_text(dir / "report.csv", report.str());
  write_manifest(dir, "oracle", json(o), {{"probes", o.seed}}, {},
                 {"state.csv", "control.csv", "report.csv"}, seconds_since(start));

  out << "max optimality residual " << std::max(res.state, res.adjoint) << " (state " << res.state
      << ", adjoint " << res.adjoint << ")\n";
  out << "field change when doubling nk " << delta << "\n";
  out << "cost probe: J(u*) = " << probe.base << ", "
      << (probe.optimal ? "no perturbation lowers J" : "a perturbation lowered J") << "\n";
  return kSuccess;
}

}  // namespace

std::string git_blob_hash(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  return hex(md, len);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Phase-extended Fourier neural operators on Burgers' equation"};
  app.name("phasefno");
  app.require_subcommand(1);

  std::string output_flag, manifest;
  GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Sample boundary data and write a state or control dataset");
  g->add_option("--task", gen.task, "state or control")->check(CLI::IsMember({"state", "control"}));
  g->add_option("--count", gen.count, "Number of samples");
  g->add_option("--seed", gen.seed, "Random-field seed");
  g->add_option("--viscosity", gen.viscosity);
  g->add_option("--refine-x", gen.refine_x, "Internal refinement in space");
  g->add_option("--refine-t", gen.refine_t, "Internal refinement in time");
  g->add_option("--length-scale", gen.length_scale);
  g->add_option("--stddev", gen.stddev);
  g->add_option("--jitter", gen.jitter);
  g->add_option("--lambda", gen.lambda, "Control regularization");
  g->add_option("--max-iterations", gen.max_iterations, "Control optimizer iteration cap");
  g->add_option("--workers", gen.workers, "Parallel sample workers");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Fit a neural operator to a dataset");
  t->add_option("--dataset", tr.dataset, "Dataset file");
  t->add_option("--variant", tr.variant)->check(CLI::IsMember({"fno", "fno-phase"}));
  t->add_option("--layers", tr.layers);
  t->add_option("--modes", tr.modes, "Largest retained mode index per axis");
  t->add_option("--width", tr.width, "Lifted width (default: input channels)");
  t->add_option("--epochs", tr.epochs);
  t->add_option("--lr", tr.lr);
  t->add_option("--batch-size", tr.batch_size, "0 for full batch");
  t->add_option("--seed", tr.seed);
  t->add_flag("--freeze-theta", tr.freeze_theta, "Keep phase angles at zero");
  t->add_flag("!--no-batch-norm", tr.batch_norm, "Disable batch normalization");
  t->add_option("--frequency", tr.frequency)->check(CLI::IsMember({"angular", "integer"}));
  t->add_option("--phase-layout", tr.phase_layout)->check(CLI::IsMember({"per-mode", "shared"}));

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Region error report and heatmap for a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint);
  e->add_option("--dataset", ev.dataset);
  e->add_option("--sample-id", ev.sample_id, "Single sample (default: all)");
  e->add_flag("--pgm", ev.pgm, "Also write a greyscale heatmap");

  OracleOptions orc;
  auto* o = app.add_subcommand("oracle", "Heat-equation optimal control oracle");
  o->add_option("--phi0-amplitude", orc.phi0_amplitude);
  o->add_option("--phi0-center", orc.phi0_center);
  o->add_option("--phi0-width", orc.phi0_width);
  o->add_option("--k-max", orc.k_max);
  o->add_option("--nk", orc.nk, "Quadrature intervals (even)");
  o->add_option("--x-extent", orc.x_extent);
  o->add_option("--t-end", orc.t_end);
  o->add_option("--nx", orc.nx);
  o->add_option("--nt", orc.nt);
  o->add_option("--probes", orc.probes);
  o->add_option("--epsilon", orc.epsilon);
  o->add_option("--seed", orc.seed);

  for (auto* sub : {g, t, e, o}) {
    sub->add_option("--output-dir", output_flag,
                    std::string("Output directory (default: $") + kOutputRootVariable + "/<command>)");
    sub->add_option("--from-manifest", manifest, "Rerun with the config recorded in a manifest.json");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (g->parsed()) {
      if (!manifest.empty()) gen = options_from_manifest<GenerateOptions>(manifest, "generate");
      return cmd_generate(gen, output_dir(output_flag, "generate"), out);
    }
    if (t->parsed()) {
      if (!manifest.empty()) tr = options_from_manifest<TrainOptions>(manifest, "train");
      return cmd_train(tr, output_dir(output_flag, "train"), out);
    }
    if (e->parsed()) {
      if (!manifest.empty()) ev = options_from_manifest<EvalOptions>(manifest, "eval");
      return cmd_eval(ev, output_dir(output_flag, "eval"), out);
    }
    if (!manifest.empty()) orc = options_from_manifest<OracleOptions>(manifest, "oracle");
    return cmd_oracle(orc, output_dir(output_flag, "oracle"), out);
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << "\n";
    return kUsageError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace phasefno::cli
