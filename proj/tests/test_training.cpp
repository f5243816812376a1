#include <cmath>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "afn/gradcheck.hpp"
#include "afn/synthetic_terrain.hpp"
#include "afn/training.hpp"
#include "afn/verify.hpp"
#include "test_util.hpp"

using namespace afn;
using verify::random_tensor;

namespace {

ModelConfig tiny(int T = 2) {
  ModelConfig c;
  c.m = 4;
  c.N = 2;
  c.T = T;
  return c;
}

TrainConfig quick(int epochs) {
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.epochs = epochs;
  tc.lr_milestones = {2};
  tc.batch_size = 2;
  tc.seed = 17;
  tc.finetune_rgb = false;
  return tc;
}

DatasetManifest tiny_dataset(const std::filesystem::path& dir) {
  SynthConfig sc;
  sc.seed = 8;
  sc.size = 24;
  return gen_dataset(5, sc, dir);
}

}  // namespace

// ---------------------------------------------------------------------------
// Loss

TEST(Loss, ZeroWhenEveryStepIsExact) {
  const auto hr = random_tensor<double>({1, 6, 6}, 1);
  const std::vector<Tensor<double>> sr(4, hr);
  EXPECT_EQ(multi_step_l1_loss<double>(sr, hr), 0.0);
}

TEST(Loss, UniformOffsetGivesTDelta) {
  const auto hr = random_tensor<double>({1, 7, 5}, 2);
  for (double delta : {0.25, -3.0}) {
    std::vector<Tensor<double>> sr(4, hr);
    for (auto& s : sr) {
      for (double& v : s.values()) v += delta;
    }
    EXPECT_NEAR(multi_step_l1_loss<double>(sr, hr), 4.0 * std::abs(delta), 1e-12);
  }
}

TEST(Loss, InvariantUnderJointPixelPermutation) {
  const auto hr = random_tensor<double>({1, 5, 5}, 3);
  const std::vector<Tensor<double>> sr{random_tensor<double>({1, 5, 5}, 4), random_tensor<double>({1, 5, 5}, 5)};
  std::vector<std::size_t> perm(hr.size());
  std::iota(perm.begin(), perm.end(), 0);
  seeded_shuffle(perm, 9);
  Tensor<double> hr_p(hr.shape());
  std::vector<Tensor<double>> sr_p(2, Tensor<double>(hr.shape()));
  for (std::size_t i = 0; i < perm.size(); ++i) {
    hr_p[i] = hr[perm[i]];
    for (int t = 0; t < 2; ++t) sr_p[t][i] = sr[t][perm[i]];
  }
  EXPECT_NEAR(multi_step_l1_loss<double>(sr, hr), multi_step_l1_loss<double>(sr_p, hr_p), 1e-12);
}

TEST(Loss, SignSubgradient) {
  Tensor<double> hr(1, 1, 4), sr(1, 1, 4);
  sr[0] = 1.0;
  sr[1] = -2.0;
  const auto g = multi_step_l1<double>(std::vector<Tensor<double>>{sr}, hr);
  EXPECT_EQ(g.grads[0][0], 0.25);
  EXPECT_EQ(g.grads[0][1], -0.25);
  EXPECT_EQ(g.grads[0][2], 0.0);
}

TEST(Loss, ShapeMismatchRejected) {
  const std::vector<Tensor<double>> sr{Tensor<double>(1, 3, 3)};
  EXPECT_THROW(multi_step_l1<double>(sr, Tensor<double>(1, 3, 4)), ShapeError);
}

// ---------------------------------------------------------------------------
// Schedule

TEST(Schedule, DefaultMilestones) {
  const TrainConfig tc;
  EXPECT_DOUBLE_EQ(lr_at_epoch(tc, 0), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(tc, 44), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(tc, 45), 5e-5);
  EXPECT_DOUBLE_EQ(lr_at_epoch(tc, 60), 2.5e-5);
  EXPECT_DOUBLE_EQ(lr_at_epoch(tc, 70), 1.25e-5);
  EXPECT_DOUBLE_EQ(lr_at_epoch(tc, 74), 1.25e-5);
}

TEST(Schedule, Validation) {
  TrainConfig tc;
  tc.lr_milestones = {60, 45};
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = TrainConfig{};
  tc.lr = 0.0;
  EXPECT_THROW(tc.validate(), ConfigError);
  EXPECT_THROW(lr_at_epoch(TrainConfig{}, -1), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Initialization

TEST(Init, GammaStartsAtZero) {
  AfnModel<float> model(tiny());
  init_params(model, 4);
  EXPECT_EQ(model.param("afm.gamma")->value[0], 0.0f);
}

TEST(Init, SameSeedSameParameters) {
  AfnModel<float> a(tiny()), b(tiny()), c(tiny());
  init_params(a, 11);
  init_params(b, 11);
  init_params(c, 12);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params().items().size(); ++i) {
    const auto& va = a.params().items()[i].second->value;
    EXPECT_EQ(max_abs_diff(va, b.params().items()[i].second->value), 0.0f);
    any_diff = any_diff || max_abs_diff(va, c.params().items()[i].second->value) > 0.0f;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Init, KaimingFanInVariance) {
  ModelConfig cfg;
  cfg.m = 64;
  cfg.N = 2;
  cfg.T = 1;
  AfnModel<double> model(cfg);
  init_params(model, 5);
  for (const char* name : {"afm.unit1.conv.weight", "rec.conv1.weight", "fe.rgb.conv2.weight"}) {
    const auto& w = model.param(name)->value;
    const int c = w.rows();
    double mean = 0.0, sq = 0.0;
    for (double v : w.values()) mean += v;
    mean /= static_cast<double>(w.size());
    for (double v : w.values()) sq += (v - mean) * (v - mean);
    const double var = sq / static_cast<double>(w.size());
    EXPECT_NEAR(var, 2.0 / (9.0 * c), 0.2 * 2.0 / (9.0 * c)) << name;
  }
}

TEST(Init, PretrainedRgbCheckpoint) {
  const auto dir = scratch_dir();
  ModelConfig cfg = tiny();
  AfnModel<float> donor(cfg);
  init_params(donor, 99);
  Checkpoint ck;
  store_params(donor, ck);
  save_checkpoint(ck, dir / "rgb.afnc");

  cfg.rgb_checkpoint = (dir / "rgb.afnc").string();
  AfnModel<float> model(cfg);
  init_params(model, 1);
  EXPECT_EQ(max_abs_diff(model.param("fe.rgb.conv1.weight")->value, donor.param("fe.rgb.conv1.weight")->value), 0.0f);
  EXPECT_GT(max_abs_diff(model.param("fe.dem.conv1.weight")->value, donor.param("fe.dem.conv1.weight")->value), 0.0f);

  cfg.rgb_checkpoint = (dir / "missing.afnc").string();
  AfnModel<float> missing(cfg);
  EXPECT_THROW(init_params(missing, 1), ResourceError);
}

// ---------------------------------------------------------------------------
// Gradients

TEST(GradientCheck, FullNetworkDoublePrecision) {
  ModelConfig cfg;
  cfg.m = 4;
  cfg.N = 4;
  cfg.T = 2;
  const auto rep = gradient_check(cfg, 3);
  EXPECT_LT(rep.max_rel_error, 1e-3);
  EXPECT_NE(rep.gamma_gradient, 0.0);
  EXPECT_EQ(rep.groups.size(), layer_table(cfg).size());
  for (const auto& g : rep.groups) EXPECT_GT(g.checked, 0u) << g.name;
}

TEST(GradientCheck, VariantsToo) {
  for (Variant v : {Variant::no_afm, Variant::afn_static}) {
    ModelConfig cfg;
    cfg.m = 3;
    cfg.N = 2;
    cfg.T = 2;
    cfg.variant = v;
    GradCheckOptions opt;
    opt.patch = 8;
    EXPECT_LT(gradient_check(cfg, 4, opt).max_rel_error, 1e-3) << to_string(v);
  }
}

TEST(GradientCheck, ZeroResidualBiasGradientIsSignMean) {
  ModelConfig cfg = tiny(3);
  AfnModel<double> model = gradcheck_model(cfg, 2);
  model.param("rec.conv2.weight")->value.fill(0.0);
  model.param("rec.conv2.bias")->value.fill(0.0);
  const Sample<double> s = gradcheck_sample(10, 2);
  model.params().zero_grad();
  accumulate_gradients(model, s, 1.0);
  double sign_mean = 0.0;
  for (std::size_t i = 0; i < s.data.hr.size(); ++i) {
    const double d = s.data.dem_ilr[i] - s.data.hr[i];
    sign_mean += (d > 0) - (d < 0);
  }
  sign_mean /= static_cast<double>(s.data.hr.size());
  EXPECT_NEAR(model.param("rec.conv2.bias")->grad[0], cfg.T * sign_mean, 1e-12);
}

// ---------------------------------------------------------------------------
// Adam

TEST(Adam, FirstStepMovesByLearningRate) {
  AfnModel<double> model(tiny());
  init_params(model, 1);
  auto& b = model.param("rec.conv2.bias");
  b->grad_buffer()[0] = 0.37;
  Adam<double> adam;
  adam.step(model.params(), 0.01);
  // Bias-corrected first step is lr * g / (|g| + eps).
  EXPECT_NEAR(b->value[0], -0.01 * 0.37 / (0.37 + 1e-8), 1e-15);
}

TEST(Adam, SkipsFrozenParameters) {
  AfnModel<double> model(tiny());
  init_params(model, 1);
  model.set_rgb_trainable(false);
  const auto before = model.param("fe.rgb.conv1.weight")->value;
  model.param("fe.rgb.conv1.weight")->grad_buffer().fill(1.0);
  Adam<double> adam;
  adam.step(model.params(), 0.1);
  EXPECT_EQ(max_abs_diff(before, model.param("fe.rgb.conv1.weight")->value), 0.0);
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, RoundTripPreservesPredictions) {
  const auto dir = scratch_dir();
  AfnModel<float> model(tiny());
  init_params(model, 6);
  model.param("afm.gamma")->value[0] = 0.358f;
  save_checkpoint(make_checkpoint(model, 3), dir / "m.afnc");
  const AfnModel<float> back = load_model<float>(dir / "m.afnc");
  EXPECT_EQ(back.config().m, 4);
  const auto dem = random_tensor<float>({1, 8, 8}, 1);
  const auto rgb = random_tensor<float>({3, 16, 16}, 2);
  EXPECT_EQ(max_abs_diff(model.predict(dem, rgb).final_prediction(), back.predict(dem, rgb).final_prediction()), 0.0f);
  EXPECT_EQ(load_checkpoint(dir / "m.afnc").epoch, 3);
}

TEST(Checkpoint, Errors) {
  const auto dir = scratch_dir();
  EXPECT_THROW(load_checkpoint(dir / "nope.afnc"), ResourceError);
  std::ofstream(dir / "junk.afnc") << "not a checkpoint at all";
  EXPECT_THROW(load_checkpoint(dir / "junk.afnc"), FormatError);

  AfnModel<float> model(tiny());
  save_checkpoint(make_checkpoint(model, 0), dir / "ok.afnc");
  std::filesystem::resize_file(dir / "ok.afnc", std::filesystem::file_size(dir / "ok.afnc") - 8);
  EXPECT_THROW(load_checkpoint(dir / "ok.afnc"), CorruptionError);

  Checkpoint wrong;
  ModelConfig bigger = tiny();
  bigger.m = 5;
  store_params(AfnModel<float>(bigger), wrong);
  EXPECT_THROW(restore_params(model, wrong), ShapeError);
}

// ---------------------------------------------------------------------------
// Training loop

TEST(Train, DeterministicAcrossRuns) {
  const auto dir = scratch_dir();
  const auto manifest = tiny_dataset(dir / "data");
  const auto a = train<float>(manifest, tiny(), quick(3));
  const auto b = train<float>(manifest, tiny(), quick(3));
  ASSERT_EQ(a.log.size(), 3u);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val_rmse_m, b.log[i].val_rmse_m);
  }
}

TEST(Train, ResumeContinuesEpochsAndMatchesStraightRun) {
  const auto dir = scratch_dir();
  const auto manifest = tiny_dataset(dir / "data");
  TrainOptions first;
  first.out_dir = dir / "run";
  const auto partial = train<float>(manifest, tiny(), quick(2), first);
  ASSERT_EQ(partial.log.back().epoch, 1);

  TrainOptions resume;
  resume.out_dir = dir / "run";
  resume.resume_from = dir / "run" / "last.afnc";
  const auto resumed = train<float>(manifest, tiny(), quick(4), resume);
  ASSERT_EQ(resumed.log.size(), 2u);
  EXPECT_EQ(resumed.log.front().epoch, 2);

  const auto straight = train<float>(manifest, tiny(), quick(4));
  EXPECT_EQ(resumed.log[0].train_loss, straight.log[2].train_loss);
  EXPECT_EQ(resumed.log[1].val_rmse_m, straight.log[3].val_rmse_m);

  std::ifstream csv(dir / "run" / "metrics.csv");
  std::string header, line;
  std::getline(csv, header);
  EXPECT_EQ(header, "epoch,lr,train_loss,val_rmse_m,val_psnr_db,gamma");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 4);
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "best.afnc"));
}

TEST(Train, GammaLoggedAndFinite) {
  const auto dir = scratch_dir();
  TrainConfig tc = quick(2);
  tc.finetune_rgb = true;
  const auto r = train<float>(tiny_dataset(dir / "data"), tiny(), tc);
  for (const auto& m : r.log) {
    EXPECT_TRUE(std::isfinite(m.gamma));
    EXPECT_TRUE(std::isfinite(m.val_psnr_db));
  }
  EXPECT_NE(r.log.back().gamma, 0.0);
}

TEST(Train, DivergenceReported) {
  const auto dir = scratch_dir();
  TrainConfig tc = quick(1);
  tc.lr = 1e30;
  tc.batch_size = 1;
  EXPECT_THROW(train<float>(tiny_dataset(dir / "data"), tiny(), tc), NumericError);
}
