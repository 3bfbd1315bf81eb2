#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "phasefno/neuralop.hpp"

using namespace phasefno;
using namespace phasefno::neuralop;
using ad::Tensor;
using phasefno::testing::gradcheck;
using phasefno::testing::random_complex;
using phasefno::testing::random_real;

namespace {

const GridSpec kGrid{24, 30, 1.0, 0.5};

ModelConfig small_config(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.layers = 2;
  c.max_mode = 2;
  c.in_channels = 3;
  c.width = 5;
  c.out_channels = 2;
  c.seed = 11;
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.numel(); ++k) {
    m = std::max(m, std::abs(a.real_data()[k] - b.real_data()[k]));
  }
  return m;
}

// Fills biases, norm parameters and running statistics with random values.
void randomize_extras(Model& model, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  auto& p = model.params();
  for (double& v : p.lift_bias.real_data()) v = d(rng);
  for (double& v : p.proj_bias.real_data()) v = d(rng);
  for (auto& layer : p.layers) {
    for (double& v : layer.gamma.real_data()) v = 1.0 + d(rng);
    for (double& v : layer.beta.real_data()) v = d(rng);
    for (double& v : layer.norm.running_mean.real_data()) v = d(rng);
    for (double& v : layer.norm.running_var.real_data()) v = 1.0 + d(rng);
  }
}

class TempDir {
 public:
  TempDir() : path_(std::filesystem::temp_directory_path() / ("neuralop_test_" + std::to_string(::getpid()))) {
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace

TEST(ModelConfig, RejectsWidthBelowInputChannels) {
  ModelConfig c;
  c.in_channels = 4;
  c.width = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(Model(c, kGrid), std::invalid_argument);
  c.width = 4;
  c.layers = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Init, SameSeedIsBitIdentical) {
  const auto c = small_config(Variant::fno_phase);
  const ModelParams a = init_params(c);
  const ModelParams b = init_params(c);
  EXPECT_EQ(a.lift_weight, b.lift_weight);
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    EXPECT_EQ(a.layers[l].mix, b.layers[l].mix);
    EXPECT_EQ(a.layers[l].spectral, b.layers[l].spectral);
  }
  EXPECT_EQ(a.proj_weight, b.proj_weight);
  auto c2 = c;
  c2.seed = 12;
  EXPECT_NE(init_params(c2).lift_weight, a.lift_weight);
}

TEST(Init, RangesAndZeroPhase) {
  const auto c = small_config(Variant::fno_phase);
  const ModelParams p = init_params(c);
  const double bound = 1.0 / std::sqrt(static_cast<double>(c.width));
  for (const Tensor* t : {&p.lift_weight, &p.proj_weight, &p.layers[0].mix}) {
    for (double v : t->real_data()) EXPECT_LE(std::abs(v), bound);
  }
  const double scale = 1.0 / (static_cast<double>(c.width) * c.modes());
  for (const auto& z : p.layers[1].spectral.complex_data()) {
    EXPECT_GE(z.real(), 0.0);
    EXPECT_LE(z.real(), scale);
    EXPECT_GE(z.imag(), 0.0);
    EXPECT_LE(z.imag(), scale);
  }
  for (const auto& layer : p.layers) {
    for (double v : layer.phase.real_data()) EXPECT_EQ(v, 0.0);
  }
  for (double v : p.lift_bias.real_data()) EXPECT_EQ(v, 0.0);
}

TEST(Init, BaselineAndPhaseShareWeights) {
  const ModelParams a = init_params(small_config(Variant::fno));
  const ModelParams b = init_params(small_config(Variant::fno_phase));
  EXPECT_EQ(a.lift_weight, b.lift_weight);
  EXPECT_EQ(a.layers[1].spectral, b.layers[1].spectral);
  EXPECT_EQ(a.proj_weight, b.proj_weight);
}

TEST(Forward, OutputShape) {
  std::mt19937_64 rng(1);
  Model model(small_config(Variant::fno), kGrid);
  const Tensor out = model.predict(random_real({3, 3, kGrid.nx, kGrid.nt}, rng));
  EXPECT_EQ(out.shape(), (ad::Shape{3, 2, kGrid.nx, kGrid.nt}));
}

TEST(Forward, RejectsGridMismatch) {
  Model model(small_config(Variant::fno), kGrid);
  EXPECT_THROW(model.predict(Tensor({1, 3, kGrid.nx, kGrid.nt + 1})), ad::ShapeError);
  EXPECT_THROW(model.predict(Tensor({1, 2, kGrid.nx, kGrid.nt})), ad::ShapeError);
}

TEST(Forward, ZeroInputGivesZeroOutput) {
  for (auto mode : {ad::Mode::eval, ad::Mode::train}) {
    Model model(small_config(Variant::fno_phase), kGrid);
    ad::Tape tape;
    const auto vars = model.bind(tape);
    const Tensor out =
        model.forward(vars, tape.constant(Tensor({2, 3, kGrid.nx, kGrid.nt})), mode).value();
    for (double v : out.real_data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Forward, EvalIsDeterministic) {
  std::mt19937_64 rng(2);
  Model model(small_config(Variant::fno_phase), kGrid);
  randomize_extras(model, rng);
  const Tensor in = random_real({2, 3, kGrid.nx, kGrid.nt}, rng);
  EXPECT_EQ(model.predict(in), model.predict(in));
}

TEST(Forward, NonFiniteActivationNamesLayer) {
  Model model(small_config(Variant::fno), kGrid);
  model.params().layers[1].mix.real_data()[0] = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(3);
  try {
    model.predict(random_real({1, 3, kGrid.nx, kGrid.nt}, rng));
    FAIL() << "expected NonFiniteActivation";
  } catch (const NonFiniteActivation& e) {
    EXPECT_EQ(e.layer(), 2);
  }
}

// The phase variant at zero angle is the baseline, for every configuration.
class ZeroPhaseReduction : public ::testing::TestWithParam<std::tuple<bool, int, PhaseLayout>> {};

TEST_P(ZeroPhaseReduction, ForwardAndGradientsMatch) {
  const auto [norm, max_mode, layout] = GetParam();
  std::mt19937_64 rng(4);
  ModelConfig base = small_config(Variant::fno);
  base.batch_norm = norm;
  base.max_mode = max_mode;
  base.phase_layout = layout;
  ModelConfig ext = base;
  ext.variant = Variant::fno_phase;
  Model a(base, kGrid);
  Model b(ext, kGrid);
  const Tensor in = random_real({3, 3, kGrid.nx, kGrid.nt}, rng);
  const Tensor target = random_real({3, 2, kGrid.nx, kGrid.nt}, rng);

  EXPECT_LT(max_abs_diff(a.predict(in), b.predict(in)), 1e-12);

  ad::Tape ta, tb;
  const auto va = a.bind(ta);
  const auto vb = b.bind(tb);
  const auto la = ad::relative_mse(a.forward(va, ta.constant(in), ad::Mode::train), ta.constant(target));
  const auto lb = ad::relative_mse(b.forward(vb, tb.constant(in), ad::Mode::train), tb.constant(target));
  EXPECT_EQ(la.value().item(), lb.value().item());
  const auto ga = ta.backward(la);
  const auto gb = tb.backward(lb);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  std::size_t j = 0;
  for (std::size_t i = 0; i < pa.size(); ++i, ++j) {
    if (pb[j].is_phase) ++j;
    ASSERT_EQ(pa[i].name, pb[j].name);
    const Tensor& x = ga.of(va[i]);
    const Tensor& y = gb.of(vb[j]);
    ASSERT_EQ(x.shape(), y.shape());
    const auto fx = phasefno::testing::flatten(x);
    const auto fy = phasefno::testing::flatten(y);
    for (std::size_t k = 0; k < fx.size(); ++k) EXPECT_NEAR(fx[k], fy[k], 1e-12) << pa[i].name;
  }
}

INSTANTIATE_TEST_SUITE_P(Configs, ZeroPhaseReduction,
                         ::testing::Combine(::testing::Bool(), ::testing::Values(0, 1, 4),
                                            ::testing::Values(PhaseLayout::per_mode,
                                                              PhaseLayout::shared)));

TEST(Parameters, PhaseAddsTwoPerModePerLayer) {
  for (int layers : {1, 4}) {
    for (std::size_t width : {3, 8}) {
      ModelConfig c = small_config(Variant::fno);
      c.layers = layers;
      c.width = width;
      const std::size_t base = Model(c, kGrid).parameter_count();
      c.variant = Variant::fno_phase;
      EXPECT_EQ(Model(c, kGrid).parameter_count(), base + c.modes() * 2 * layers);
      c.phase_layout = PhaseLayout::shared;
      EXPECT_EQ(Model(c, kGrid).parameter_count(), base + 2 * layers);
    }
  }
}

TEST(Parameters, CountFormula) {
  ModelConfig c = small_config(Variant::fno);
  const std::size_t nv = c.width, m = c.modes();
  const std::size_t per_layer = nv * nv + 2 * m * nv * nv + 2 * nv;
  EXPECT_EQ(Model(c, kGrid).parameter_count(),
            nv * c.in_channels + nv + c.layers * per_layer + c.out_channels * nv + c.out_channels);
}

TEST(Forward, LiftedChannelPermutationInvariance) {
  std::mt19937_64 rng(5);
  ModelConfig c = small_config(Variant::fno_phase);
  Model model(c, kGrid);
  randomize_extras(model, rng);
  std::uniform_real_distribution<double> d(-0.3, 0.3);
  for (auto& layer : model.params().layers) {
    for (double& v : layer.phase.real_data()) v = d(rng);
  }
  const Tensor in = random_real({2, 3, kGrid.nx, kGrid.nt}, rng);
  const Tensor before = model.predict(in);

  std::vector<std::size_t> perm(c.width);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t nv = c.width;
  ModelParams p = model.params();
  const ModelParams& q = model.params();
  for (std::size_t o = 0; o < nv; ++o) {
    for (std::size_t i = 0; i < c.in_channels; ++i) {
      p.lift_weight.real_data()[o * c.in_channels + i] = q.lift_weight.real_data()[perm[o] * c.in_channels + i];
    }
    p.lift_bias.real_data()[o] = q.lift_bias.real_data()[perm[o]];
    for (std::size_t b = 0; b < c.out_channels; ++b) {
      p.proj_weight.real_data()[b * nv + o] = q.proj_weight.real_data()[b * nv + perm[o]];
    }
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& dst = p.layers[l];
    const auto& src = q.layers[l];
    for (std::size_t o = 0; o < nv; ++o) {
      for (std::size_t i = 0; i < nv; ++i) {
        dst.mix.real_data()[o * nv + i] = src.mix.real_data()[perm[o] * nv + perm[i]];
        for (std::size_t m = 0; m < c.modes(); ++m) {
          dst.spectral.complex_data()[(m * nv + o) * nv + i] =
              src.spectral.complex_data()[(m * nv + perm[o]) * nv + perm[i]];
        }
      }
      dst.gamma.real_data()[o] = src.gamma.real_data()[perm[o]];
      dst.beta.real_data()[o] = src.beta.real_data()[perm[o]];
      dst.norm.running_mean.real_data()[o] = src.norm.running_mean.real_data()[perm[o]];
      dst.norm.running_var.real_data()[o] = src.norm.running_var.real_data()[perm[o]];
    }
  }
  Model permuted(c, kGrid, std::move(p));
  EXPECT_LT(max_abs_diff(permuted.predict(in), before), 1e-10);
}

TEST(Gradients, TinyModelMatchesFiniteDifferences) {
  const GridSpec grid{6, 5, 1.0, 0.5};
  for (Variant variant : {Variant::fno, Variant::fno_phase}) {
    for (bool norm : {true, false}) {
      std::mt19937_64 rng(6);
      ModelConfig c;
      c.variant = variant;
      c.layers = 2;
      c.max_mode = 1;
      c.in_channels = 2;
      c.width = 2;
      c.out_channels = 1;
      c.batch_norm = norm;
      c.seed = 3;
      Model model(c, grid);
      randomize_extras(model, rng);
      std::uniform_real_distribution<double> d(-0.4, 0.4);
      for (auto& layer : model.params().layers) {
        for (double& v : layer.phase.real_data()) v = d(rng);
        layer.spectral = random_complex(layer.spectral.shape(), rng);
      }
      const Tensor in = random_real({3, 2, grid.nx, grid.nt}, rng);
      const Tensor target = random_real({3, 1, grid.nx, grid.nt}, rng);
      std::vector<Tensor> leaves;
      for (const ParamRef& p : model.parameters()) leaves.push_back(*p.tensor);
      const double err = gradcheck(
          [&](ad::Tape& tape, const std::vector<ad::Var>& vars) {
            return ad::relative_mse(model.forward(vars, tape.constant(in), ad::Mode::train),
                                    tape.constant(target));
          },
          leaves);
      EXPECT_LT(err, 1e-4) << to_string(variant) << " norm=" << norm;
    }
  }
}

TEST(PhaseGuard, ClampsToBound) {
  ModelConfig c = small_config(Variant::fno_phase);
  c.max_mode = 6;
  Model model(c, kGrid);
  EXPECT_EQ(model.phase_exponent_bound(), 0.0);
  EXPECT_EQ(model.clamp_phase(kPhaseExponentGuard), 0u);
  auto& phase = model.params().layers[0].phase;
  phase.real_data()[2 * (c.modes() - 1)] = 1.2;  // mode (6, 6): kx Lx = kt Lt = 12 pi
  phase.real_data()[2 * (c.modes() - 1) + 1] = 1.0;
  phase.real_data()[0] = 0.01;
  EXPECT_GT(model.phase_exponent_bound(), kPhaseExponentGuard);
  EXPECT_EQ(model.clamp_phase(kPhaseExponentGuard), 1u);
  EXPECT_LE(model.phase_exponent_bound(), kPhaseExponentGuard);
  EXPECT_NEAR(model.phase_exponent_bound(), kPhaseExponentGuard, 1e-9);
  EXPECT_EQ(phase.real_data()[0], 0.01);
  EXPECT_NEAR(phase.real_data()[2 * (c.modes() - 1)] / phase.real_data()[2 * (c.modes() - 1) + 1],
              1.2, 1e-12);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  std::mt19937_64 rng(7);
  for (Variant variant : {Variant::fno, Variant::fno_phase}) {
    Model model(small_config(variant), kGrid);
    randomize_extras(model, rng);
    for (auto& layer : model.params().layers) {
      for (double& v : layer.phase.real_data()) v = 0.1;
    }
    const auto path = dir.path() / "model.ckpt";
    save_checkpoint({model.config(), model.grid(), model.params()}, path);
    Checkpoint back = load_checkpoint(path);
    EXPECT_EQ(back.config, model.config());
    EXPECT_EQ(back.grid, model.grid());
    Model loaded(back.config, back.grid, back.params);
    const Tensor in = random_real({2, 3, kGrid.nx, kGrid.nt}, rng);
    EXPECT_EQ(loaded.predict(in), model.predict(in));
    EXPECT_EQ(serialize(to_archive(back)), read_file(path));
  }
}

TEST(Checkpoint, TruncatedFileFails) {
  TempDir dir;
  Model model(small_config(Variant::fno_phase), kGrid);
  const std::string bytes = serialize(to_archive({model.config(), model.grid(), model.params()}));
  for (std::size_t cut : {std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
    write_file(dir.path() / "cut.ckpt", bytes.substr(0, cut));
    EXPECT_THROW(load_checkpoint(dir.path() / "cut.ckpt"), ArchiveError) << cut;
  }
}

TEST(Checkpoint, RejectsVersionAndVariant) {
  Model model(small_config(Variant::fno), kGrid);
  Archive a = to_archive({model.config(), model.grid(), model.params()});
  std::string bytes = serialize(a);
  std::string bumped = bytes;
  bumped.replace(bumped.find("version 1"), 9, "version 2");
  EXPECT_THROW(from_archive(deserialize(bumped)), ArchiveError);
  a.set("variant", "transformer");
  EXPECT_THROW(from_archive(a), ArchiveError);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), ArchiveError);
}

TEST(Checkpoint, BaselinePromotesToZeroPhase) {
  std::mt19937_64 rng(8);
  Model base(small_config(Variant::fno), kGrid);
  randomize_extras(base, rng);
  const Checkpoint promoted = promote({base.config(), base.grid(), base.params()});
  EXPECT_EQ(promoted.config.variant, Variant::fno_phase);
  Model ext(promoted.config, promoted.grid, promoted.params);
  const Tensor in = random_real({2, 3, kGrid.nx, kGrid.nt}, rng);
  EXPECT_LT(max_abs_diff(ext.predict(in), base.predict(in)), 1e-12);
}

TEST(Archive, PreservesMetaAndArrays) {
  Archive a;
  a.kind = "thing";
  a.set("alpha", "1.5");
  a.set("name", "with spaces = fine");
  a.add("r", Tensor::real({2, 3}, {1, 2, 3, 4, 5, 6}));
  a.add("c", Tensor::complex({2}, {{1, -1}, {0.5, 2}}));
  a.add("empty", Tensor({0}));
  const Archive b = deserialize(serialize(a));
  EXPECT_EQ(b.kind, "thing");
  EXPECT_EQ(b.meta, a.meta);
  EXPECT_EQ(b.arrays, a.arrays);
  EXPECT_THROW(a.add("r", Tensor({1})), std::invalid_argument);
  EXPECT_THROW(b.get("missing"), ArchiveError);
}

TEST(Archive, DoubleTextRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(parse_double(format_double(v)), v);
  EXPECT_THROW(parse_double("1.0x"), ArchiveError);
}
