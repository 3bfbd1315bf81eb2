#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "phasefno/train.hpp"

namespace phasefno::train {
namespace {

namespace fs = std::filesystem;
using ad::Tensor;

GenerateConfig small(Task task, std::size_t count) {
  GenerateConfig c;
  c.task = task;
  c.count = count;
  c.seed = 11;
  return c;
}

const Dataset& state_data() {
  static const Dataset d = generate_dataset(small(Task::state, 6));
  return d;
}

TrainConfig quick(neuralop::Variant v, int epochs) {
  TrainConfig c;
  c.model.variant = v;
  c.epochs = epochs;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("phasefno_train_" + name);
  fs::remove_all(p);
  return p;
}

TEST(Generate, SameSettingsSameBytes) {
  const Dataset a = generate_dataset(small(Task::state, 4));
  const Dataset b = generate_dataset(small(Task::state, 4));
  EXPECT_TRUE(a.target == b.target);
  EXPECT_TRUE(a.left == b.left);
}

TEST(Generate, WorkerCountDoesNotChangeData) {
  GenerateConfig c = small(Task::state, 5);
  const Dataset serial = generate_dataset(c);
  c.workers = 3;
  const Dataset pooled = generate_dataset(c);
  EXPECT_TRUE(serial.target == pooled.target);
  EXPECT_TRUE(serial.right == pooled.right);
}

TEST(Generate, TargetsHonourInitialAndBoundaryData) {
  const Dataset& d = state_data();
  const GridSpec& g = d.grid;
  for (std::size_t s = 0; s < d.size(); ++s) {
    const double* phi = d.target.real_data().data() + s * g.points();
    for (std::size_t i = 1; i + 1 < g.nx; ++i) {
      EXPECT_NEAR(phi[i * g.nt], std::sin(std::numbers::pi * g.x(i) / g.length_x), 1e-14);
    }
    for (std::size_t j = 1; j < g.nt; ++j) {
      EXPECT_DOUBLE_EQ(phi[j], d.left.real_data()[s * g.nt + j]);
      EXPECT_DOUBLE_EQ(phi[(g.nx - 1) * g.nt + j], d.right.real_data()[s * g.nt + j]);
    }
  }
}

TEST(Generate, ControlManifestRecordsProblem) {
  const Dataset d = generate_dataset(small(Task::control, 2));
  EXPECT_EQ(d.manifest.get("task"), "control");
  EXPECT_TRUE(d.manifest.has("control.unconverged"));
  const GenerateConfig back = config_from_manifest(d.manifest);
  EXPECT_EQ(back.regularization, 0.1);
  EXPECT_EQ(back.task, Task::control);
}

TEST(Generate, RejectsBadSettings) {
  GenerateConfig c = small(Task::state, 0);
  EXPECT_THROW(generate_dataset(c), std::invalid_argument);
  c = small(Task::control, 2);
  c.regularization = 0.0;
  EXPECT_THROW(generate_dataset(c), std::invalid_argument);
}

TEST(Dataset, ManifestRegeneratesIdenticalBytes) {
  const fs::path dir = scratch("regen");
  save_dataset(state_data(), dir / "a.bin");
  const Dataset loaded = load_dataset(dir / "a.bin");
  save_dataset(generate_dataset(config_from_manifest(loaded.manifest)), dir / "b.bin");
  EXPECT_EQ(read_file(dir / "a.bin"), read_file(dir / "b.bin"));
  fs::remove_all(dir);
}

TEST(Dataset, RoundTrip) {
  const fs::path dir = scratch("roundtrip");
  save_dataset(state_data(), dir / "d.bin");
  const Dataset d = load_dataset(dir / "d.bin");
  EXPECT_TRUE(d.target == state_data().target);
  EXPECT_EQ(d.task, Task::state);
  EXPECT_TRUE(d.grid == state_data().grid);
  fs::remove_all(dir);
}

TEST(Dataset, RejectsOtherArchiveKinds) {
  const fs::path dir = scratch("kind");
  Archive a;
  a.kind = "checkpoint";
  write_archive(a, dir / "x.bin");
  EXPECT_THROW(load_dataset(dir / "x.bin"), ArchiveError);
  fs::remove_all(dir);
}

TEST(Encoding, ChannelsAreBoundaryDataAndCoordinates) {
  const Dataset& d = state_data();
  const GridSpec& g = d.grid;
  const Tensor in = encode_inputs(d);
  ASSERT_EQ(in.shape(), (ad::Shape{d.size(), kInputChannels, g.nx, g.nt}));
  const auto& v = in.real_data();
  auto at = [&](std::size_t s, std::size_t c, std::size_t i, std::size_t j) {
    return v[((s * kInputChannels + c) * g.nx + i) * g.nt + j];
  };
  for (std::size_t i = 0; i < g.nx; i += 5) {
    for (std::size_t j = 0; j < g.nt; j += 7) {
      EXPECT_EQ(at(1, 0, i, j), d.left.real_data()[g.nt + j]);
      EXPECT_EQ(at(1, 1, i, j), d.right.real_data()[g.nt + j]);
      EXPECT_DOUBLE_EQ(at(1, 2, i, j), g.x(i));
      EXPECT_DOUBLE_EQ(at(1, 3, i, j), g.t(j));
    }
  }
  EXPECT_EQ(encode_targets(d).shape(), (ad::Shape{d.size(), 1, g.nx, g.nt}));
}

TEST(RelativeMse, Cases) {
  const Tensor t = Tensor::real({2, 3}, {1, 2, 3, -1, 0, 4});
  EXPECT_EQ(relative_mse(t, t), 0.0);
  EXPECT_DOUBLE_EQ(relative_mse(Tensor({2, 3}), t), 1.0);
  Tensor twice = t;
  for (double& x : twice.real_data()) x *= 2.0;
  EXPECT_DOUBLE_EQ(relative_mse(twice, t), 1.0);
}

TEST(RelativeMse, JointScaleInvariance) {
  const Tensor p = Tensor::real({2, 3}, {0.5, 2, 2, -1, 1, 3});
  const Tensor t = Tensor::real({2, 3}, {1, 2, 3, -1, 0, 4});
  for (double alpha : {-3.0, 1e-4, 7.5}) {
    Tensor ps = p, ts = t;
    for (double& x : ps.real_data()) x *= alpha;
    for (double& x : ts.real_data()) x *= alpha;
    EXPECT_NEAR(relative_mse(ps, ts), relative_mse(p, t), 1e-14);
  }
}

TEST(Fit, SameSeedSameCurve) {
  const auto a = fit(state_data(), quick(neuralop::Variant::fno_phase, 4));
  const auto b = fit(state_data(), quick(neuralop::Variant::fno_phase, 4));
  ASSERT_EQ(a.curve.size(), 4u);
  for (std::size_t e = 0; e < a.curve.size(); ++e) EXPECT_EQ(a.curve[e].loss, b.curve[e].loss);
}

TEST(Fit, ZeroLearningRateKeepsParameters) {
  TrainConfig c = quick(neuralop::Variant::fno_phase, 3);
  c.adam.learning_rate = 0.0;
  const auto r = fit(state_data(), c);
  const neuralop::Model init(c.model, state_data().grid);
  neuralop::Model trained(r.best.config, r.best.grid, r.best.params);
  neuralop::Model fresh = init;
  const auto a = fresh.parameters();
  const auto b = trained.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(*a[i].tensor == *b[i].tensor) << a[i].name;
  for (const auto& m : r.curve) EXPECT_EQ(m.loss, r.curve.front().loss);
}

TEST(Fit, FrozenPhaseMatchesBaselineCurve) {
  TrainConfig phase = quick(neuralop::Variant::fno_phase, 5);
  phase.freeze_phase = true;
  const auto a = fit(state_data(), phase);
  const auto b = fit(state_data(), quick(neuralop::Variant::fno, 5));
  for (std::size_t e = 0; e < a.curve.size(); ++e) EXPECT_EQ(a.curve[e].loss, b.curve[e].loss);
}

TEST(Fit, ZeroEpochsReturnsInitialization) {
  const auto r = fit(state_data(), quick(neuralop::Variant::fno, 0));
  EXPECT_TRUE(r.curve.empty());
  EXPECT_EQ(r.best_epoch, -1);
  const neuralop::Model init(r.best.config, r.best.grid);
  neuralop::Model a = init;
  neuralop::Model b(r.best.config, r.best.grid, r.best.params);
  EXPECT_EQ(a.parameters().size(), b.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_TRUE(*a.parameters()[i].tensor == *b.parameters()[i].tensor);
  }
}

TEST(Fit, OverfitsOneSample) {
  Dataset one = generate_dataset(small(Task::state, 1));
  TrainConfig c = quick(neuralop::Variant::fno_phase, 300);
  c.model.width = 8;
  c.model.batch_norm = false;
  c.adam.learning_rate = 1e-2;
  const auto r = fit(one, c);
  EXPECT_LT(r.best_loss, 1e-2);
}

TEST(Fit, MiniBatchesCoverEverySample) {
  TrainConfig c = quick(neuralop::Variant::fno, 3);
  c.batch_size = 4;
  const auto r = fit(state_data(), c);
  EXPECT_EQ(r.curve.size(), 3u);
  for (const auto& m : r.curve) EXPECT_TRUE(std::isfinite(m.loss));
}

TEST(Fit, DivergenceAborts) {
  TrainConfig c = quick(neuralop::Variant::fno, 5);
  c.divergence = 1e-12;
  try {
    fit(state_data(), c);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.epoch(), 1);
  }
}

TEST(Fit, RejectsWrongChannelCounts) {
  TrainConfig c = quick(neuralop::Variant::fno, 1);
  c.model.out_channels = 2;
  EXPECT_THROW(fit(state_data(), c), std::invalid_argument);
}

TEST(Regions, ZeroField) {
  const GridSpec g;
  const RegionErrors r = region_errors(std::vector<double>(g.points(), 0.0), g);
  EXPECT_EQ(r.boundary, 0.0);
  EXPECT_EQ(r.interior, 0.0);
  EXPECT_EQ(r.all, 0.0);
}

TEST(Regions, ConstantFieldGivesConstantEverywhere) {
  const GridSpec g;
  const RegionErrors r = region_errors(std::vector<double>(g.points(), 0.37), g);
  for (double v : {r.left, r.right, r.initial, r.final, r.boundary, r.interior, r.all}) {
    EXPECT_NEAR(v, 0.37, 1e-14);
  }
}

TEST(Regions, EdgesAreSeparated) {
  const GridSpec g;
  std::vector<double> e(g.points(), 0.0);
  for (std::size_t j = 0; j < g.nt; ++j) e[j] = 1.0;  // x = 0 only
  const RegionErrors r = region_errors(e, g);
  EXPECT_DOUBLE_EQ(r.left, 1.0);
  EXPECT_EQ(r.right, 0.0);
  EXPECT_DOUBLE_EQ(r.initial, 1.0 / static_cast<double>(g.nx));
  EXPECT_EQ(r.interior, 0.0);
  EXPECT_GT(r.boundary, 0.0);
}

TEST(Report, SampleOutOfRangeListsValidRange) {
  neuralop::Model m(neuralop::ModelConfig{}, state_data().grid);
  try {
    boundary_error_report(m, state_data(), 6);
    FAIL() << "expected out_of_range";
  } catch (const std::out_of_range& e) {
    EXPECT_NE(std::string(e.what()).find("[0, 5]"), std::string::npos);
  }
}

TEST(Report, MeanFieldMatchesSingleSamples) {
  neuralop::Model m(neuralop::ModelConfig{}, state_data().grid);
  const auto all = boundary_error_report(m, state_data());
  std::vector<double> mean(all.mean_error.size(), 0.0);
  for (std::size_t s = 0; s < state_data().size(); ++s) {
    const auto one = boundary_error_report(m, state_data(), s);
    for (std::size_t p = 0; p < mean.size(); ++p) mean[p] += one.mean_error[p] / 6.0;
  }
  for (std::size_t p = 0; p < mean.size(); ++p) EXPECT_NEAR(mean[p], all.mean_error[p], 1e-12);
}

}  // namespace
}  // namespace phasefno::train
