#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "afn/gradcheck.hpp"
#include "afn/reference.hpp"
#include "afn/verify.hpp"

using namespace afn;
using verify::random_tensor;

namespace {

ModelConfig cfg(int m, int N, int T, Variant v = Variant::afn) {
  ModelConfig c;
  c.m = m;
  c.N = N;
  c.T = T;
  c.variant = v;
  return c;
}

AfnModel<double> generic_model(const ModelConfig& c, std::uint64_t seed = 1) { return gradcheck_model(c, seed); }

void zero_all(AfnModel<double>& model) {
  for (auto& [name, p] : model.params().items()) {
    if (!name.ends_with(".slope")) p->value.fill(0.0);
  }
}

bool interior_constant(const Tensor<double>& t, int margin, double tol) {
  for (int c = 0; c < t.channels(); ++c) {
    const double ref = t(c, margin, margin);
    for (int r = margin; r < t.rows() - margin; ++r) {
      for (int q = margin; q < t.cols() - margin; ++q) {
        if (std::abs(t(c, r, q) - ref) > tol) return false;
      }
    }
  }
  return true;
}

// Central-difference check of d<seed, f(x)>/dx for a single tape op.
double op_gradient_error(const std::function<Var<double>(Tape<double>&, const Var<double>&)>& op, Shape in,
                         std::uint64_t seed) {
  auto x = leaf(random_tensor<double>(in, seed), true);
  Tape<double> tape(true);
  auto y = op(tape, x);
  const auto w = random_tensor<double>(y->value.shape(), seed + 1);
  y->grad_buffer() = w;
  tape.backward();
  auto objective = [&] {
    Tape<double> t(false);
    const auto out = op(t, x)->value;
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += w[i] * out[i];
    return s;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) {
    const double saved = x->value[i];
    x->value[i] = saved + 1e-6;
    const double up = objective();
    x->value[i] = saved - 1e-6;
    const double down = objective();
    x->value[i] = saved;
    worst = std::max(worst, relative_error(x->grad[i], (up - down) / 2e-6));
  }
  return worst;
}

}  // namespace

// ---------------------------------------------------------------------------
// Kernels and tape ops

TEST(Conv, MatchesNaiveOracleForSeveralKernelSizes) {
  for (int k : {1, 3, 5}) {
    const auto x = random_tensor<double>({3, 7, 9}, 10 + k);
    const auto w = random_tensor<double>({5, 3, k * k}, 20 + k);
    const auto b = random_tensor<double>({5, 1, 1}, 30 + k);
    Tensor<double> y;
    kernels::conv2d_forward(x, w, &b, y);
    EXPECT_LT(max_abs_diff(y, reference::conv(x, w, b)), 1e-12) << "k=" << k;
  }
}

TEST(Conv, BandedIm2colMatchesOracle) {
  // Enough channels that the scratch budget forces several row bands.
  const auto x = random_tensor<double>({64, 128, 128}, 1);
  const auto w = random_tensor<double>({2, 64, 9}, 2);
  const Tensor<double> b(2, 1, 1);
  ASSERT_LT(kernels::detail::band_rows(64, 3, 128, 128), 128);
  Tensor<double> y;
  kernels::conv2d_forward(x, w, &b, y);
  EXPECT_LT(max_abs_diff(y, reference::conv(x, w, b)), 1e-10);
}

TEST(Conv, RejectsEvenKernelAndChannelMismatch) {
  Tensor<double> y;
  const Tensor<double> x(2, 4, 4), even(1, 2, 4), wrong_in(1, 3, 9);
  const Tensor<double>* no_bias = nullptr;
  EXPECT_THROW(kernels::conv2d_forward(x, even, no_bias, y), ShapeError);
  EXPECT_THROW(kernels::conv2d_forward(x, wrong_in, no_bias, y), ShapeError);
}

TEST(Ops, GradientsMatchFiniteDifferences) {
  const auto w3 = leaf(random_tensor<double>({4, 3, 9}, 7), true);
  const auto b3 = leaf(random_tensor<double>({4, 1, 1}, 8), true);
  const auto slope = leaf(Tensor<double>(3, 1, 1, 0.2), true);
  const auto other = leaf(random_tensor<double>({3, 5, 6}, 9), true);
  const auto scalar = leaf(Tensor<double>(1, 1, 1, -0.7), true);
  const Shape s{3, 5, 6};
  using Op = std::function<Var<double>(Tape<double>&, const Var<double>&)>;
  const std::vector<std::pair<const char*, Op>> cases{
      {"conv", [&](Tape<double>& t, const Var<double>& x) { return ops::conv2d(t, x, w3, b3); }},
      {"prelu", [&](Tape<double>& t, const Var<double>& x) { return ops::prelu(t, x, slope); }},
      {"relu", [](Tape<double>& t, const Var<double>& x) { return ops::relu(t, x); }},
      {"sigmoid", [](Tape<double>& t, const Var<double>& x) { return ops::sigmoid(t, x); }},
      {"concat", [&](Tape<double>& t, const Var<double>& x) { return ops::concat<double>(t, {other, x, x}); }},
      {"slice", [](Tape<double>& t, const Var<double>& x) { return ops::slice_channels(t, x, 1, 2); }},
      {"mul", [&](Tape<double>& t, const Var<double>& x) { return ops::mul(t, x, other); }},
      {"add", [&](Tape<double>& t, const Var<double>& x) { return ops::add(t, x, x); }},
      {"scale", [&](Tape<double>& t, const Var<double>& x) { return ops::scale(t, x, scalar); }},
      {"maxpool", [](Tape<double>& t, const Var<double>& x) { return ops::maxpool2(t, x); }},
  };
  for (const auto& [name, op] : cases) EXPECT_LT(op_gradient_error(op, s, 42), 1e-6) << name;
}

TEST(Ops, ParameterGradientsAccumulateAcrossReuse) {
  auto x = leaf(random_tensor<double>({1, 4, 4}, 1));
  auto s = leaf(Tensor<double>(1, 1, 1, 2.0), true);
  Tape<double> tape(true);
  auto y = ops::scale(tape, ops::scale(tape, x, s), s);  // s^2 x
  y->grad_buffer().fill(1.0);
  tape.backward();
  double sum = 0.0;
  for (double v : x->value.values()) sum += v;
  EXPECT_NEAR(s->grad[0], 2.0 * 2.0 * sum, 1e-12);
}

TEST(Ops, NonRecordingTapeKeepsNoNodes) {
  Tape<double> tape(false);
  auto w = leaf(random_tensor<double>({2, 1, 9}, 1), true);
  ops::conv2d<double>(tape, leaf(Tensor<double>(1, 4, 4)), w, nullptr);
  EXPECT_EQ(tape.size(), 0u);
}

// ---------------------------------------------------------------------------
// Feature extraction

TEST(FeatureExtractDem, FullWidthShape) {
  AfnModel<float> model(ModelConfig{});
  kaiming_init(model, 1);
  Tape<float> tape(false);
  const auto out = model.feature_extract_dem(tape, leaf(Tensor<float>(1, 200, 200)));
  EXPECT_EQ(out->value.shape(), (Shape{64, 200, 200}));
}

TEST(FeatureExtractDem, ZeroInputZeroBiasGivesZero) {
  AfnModel<double> model(cfg(4, 2, 1));
  kaiming_init(model, 3);
  Tape<double> tape(false);
  const auto out = model.feature_extract_dem(tape, leaf(Tensor<double>(1, 12, 12)));
  for (double v : out->value.values()) EXPECT_EQ(v, 0.0);
}

TEST(FeatureExtractDem, MatchesOracle) {
  const auto model = generic_model(cfg(4, 2, 1));
  const auto x = random_tensor<double>({1, 16, 16}, 5);
  Tape<double> tape(false);
  EXPECT_LT(max_abs_diff(model.feature_extract_dem(tape, leaf(x))->value, reference::feature_extract_dem(model, x)),
            1e-5);
}

TEST(FeatureExtractDem, InputValidation) {
  const auto model = generic_model(cfg(2, 2, 1));
  Tape<double> tape(false);
  EXPECT_THROW(model.feature_extract_dem(tape, leaf(Tensor<double>(2, 16, 16))), ShapeError);
  EXPECT_THROW(model.feature_extract_dem(tape, leaf(Tensor<double>(1, 7, 16))), ShapeError);
  Tensor<double> bad(1, 8, 8);
  bad[5] = std::nan("");
  EXPECT_THROW(model.feature_extract_dem(tape, leaf(bad)), NumericError);
}

TEST(FeatureExtractRgb, FullWidthShape) {
  AfnModel<float> model(ModelConfig{});
  kaiming_init(model, 1);
  Tape<float> tape(false);
  const auto out = model.feature_extract_rgb(tape, leaf(Tensor<float>(3, 400, 400)));
  EXPECT_EQ(out->value.shape(), (Shape{64, 200, 200}));
}

TEST(FeatureExtractRgb, ConstantColourGivesConstantInterior) {
  const auto model = generic_model(cfg(4, 2, 1));
  Tensor<double> img(3, 24, 24);
  for (int c = 0; c < 3; ++c) {
    for (double& v : img.channel(c)) v = 0.3 * (c + 1) - 0.5;
  }
  Tape<double> tape(false);
  const auto out = model.feature_extract_rgb(tape, leaf(img));
  EXPECT_EQ(out->value.shape(), (Shape{4, 12, 12}));
  EXPECT_TRUE(interior_constant(out->value, 2, 1e-12));
}

TEST(FeatureExtractRgb, TinyInputMatchesOracle) {
  for (int m : {4, 64}) {
    const auto model = generic_model(cfg(m, 2, 1));
    const auto x = random_tensor<double>({3, 8, 8}, 6);
    Tape<double> tape(false);
    EXPECT_LT(max_abs_diff(model.feature_extract_rgb(tape, leaf(x))->value, reference::feature_extract_rgb(model, x)),
              1e-5)
        << "m=" << m;
  }
}

// ---------------------------------------------------------------------------
// Residual stack

TEST(UnitSources, OppositeParitySkipsWithDedup) {
  EXPECT_EQ(unit_sources(1), (std::vector<int>{0}));
  EXPECT_EQ(unit_sources(2), (std::vector<int>{1}));
  EXPECT_EQ(unit_sources(3), (std::vector<int>{2}));
  EXPECT_EQ(unit_sources(4), (std::vector<int>{1, 3}));
  EXPECT_EQ(unit_sources(5), (std::vector<int>{2, 4}));
  EXPECT_EQ(unit_sources(6), (std::vector<int>{1, 3, 5}));
}

TEST(ResidualStack, TwoUnitsMatchHandComposition) {
  const auto model = generic_model(cfg(3, 2, 1));
  const auto f = random_tensor<double>({3, 8, 8}, 1), fb = random_tensor<double>({3, 8, 8}, 2);
  using namespace reference;
  const Map c = conv_prelu(model, "afm.compress", "afm.compress_act", concat({&f, &fb}));
  const Map b1 = conv_prelu(model, "afm.unit1.conv", "afm.unit1.conv_act",
                            conv_prelu(model, "afm.unit1.fuse", "afm.unit1.fuse_act", c));
  const Map b2 = conv_prelu(model, "afm.unit2.conv", "afm.unit2.conv_act",
                            conv_prelu(model, "afm.unit2.fuse", "afm.unit2.fuse_act", b1));
  const Map expected = conv_prelu(model, "afm.merge", "afm.merge_act", b2);
  Tape<double> tape(false);
  EXPECT_LT(max_abs_diff(model.residual_stack(tape, leaf(f), leaf(fb))->value, expected), 1e-5);
  EXPECT_EQ(model.param("afm.unit2.fuse.weight")->value.rows(), 3);  // B1 output enters once
}

TEST(ResidualStack, FourUnitsMatchSkipTableOracle) {
  const auto model = generic_model(cfg(2, 4, 1));
  const auto f = random_tensor<double>({2, 8, 8}, 3), fb = random_tensor<double>({2, 8, 8}, 4);
  Tape<double> tape(false);
  EXPECT_LT(max_abs_diff(model.residual_stack(tape, leaf(f), leaf(fb))->value, reference::residual_stack(model, f, fb)),
            1e-5);
}

TEST(ResidualStack, SixUnitsMatchSkipTableOracle) {
  const auto model = generic_model(cfg(3, 6, 1));
  const auto f = random_tensor<double>({3, 9, 7}, 5), fb = random_tensor<double>({3, 9, 7}, 6);
  Tape<double> tape(false);
  EXPECT_LT(max_abs_diff(model.residual_stack(tape, leaf(f), leaf(fb))->value, reference::residual_stack(model, f, fb)),
            1e-5);
}

TEST(ResidualStack, ZeroWeightsGiveZero) {
  auto model = generic_model(cfg(2, 4, 1));
  zero_all(model);
  Tape<double> tape(false);
  const auto out = model.residual_stack(tape, leaf(random_tensor<double>({2, 8, 8}, 1)),
                                        leaf(random_tensor<double>({2, 8, 8}, 2)));
  for (double v : out->value.values()) EXPECT_EQ(v, 0.0);
}

// ---------------------------------------------------------------------------
// Attention and fusion

TEST(Attention, FullWidthMasksInUnitInterval) {
  AfnModel<double> model(cfg(64, 2, 1));
  kaiming_init(model, 2);
  Tape<double> tape(false);
  const auto [a, b] = model.attention(tape, leaf(random_tensor<double>({64, 6, 6}, 1)),
                                      leaf(random_tensor<double>({64, 6, 6}, 2)));
  EXPECT_EQ(a->value.shape(), (Shape{64, 6, 6}));
  EXPECT_EQ(b->value.shape(), (Shape{64, 6, 6}));
  for (const auto* t : {&a->value, &b->value}) {
    for (double v : t->values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Attention, ZeroWeightsGiveOneHalf) {
  auto model = generic_model(cfg(3, 2, 1));
  zero_all(model);
  Tape<double> tape(false);
  const auto [a, b] = model.attention(tape, leaf(random_tensor<double>({3, 8, 8}, 1)),
                                      leaf(random_tensor<double>({3, 8, 8}, 2)));
  for (double v : a->value.values()) EXPECT_EQ(v, 0.5);
  for (double v : b->value.values()) EXPECT_EQ(v, 0.5);
}

TEST(Attention, ConstantInputsGiveConstantInterior) {
  const auto model = generic_model(cfg(3, 2, 1));
  const Tensor<double> f(3, 20, 20, 0.4), g(3, 20, 20, -1.1);
  Tape<double> tape(false);
  const auto [a, b] = model.attention(tape, leaf(f), leaf(g));
  EXPECT_TRUE(interior_constant(a->value, 4, 1e-12));
  EXPECT_TRUE(interior_constant(b->value, 4, 1e-12));
}

TEST(Attention, MatchesOracle) {
  const auto model = generic_model(cfg(4, 2, 1));
  const auto f = random_tensor<double>({4, 16, 16}, 3), g = random_tensor<double>({4, 16, 16}, 4);
  Tape<double> tape(false);
  const auto [a, b] = model.attention(tape, leaf(f), leaf(g));
  const auto [ra, rb] = reference::attention(model, f, g);
  EXPECT_LT(max_abs_diff(a->value, ra), 1e-5);
  EXPECT_LT(max_abs_diff(b->value, rb), 1e-5);
}

TEST(Fuse, ZeroGammaDropsRgbTermExactly) {
  const Shape s{2, 4, 4};
  const auto f = random_tensor<double>(s, 1), g = random_tensor<double>(s, 2, 1e8);
  const auto a = random_tensor<double>(s, 3), b = random_tensor<double>(s, 4);
  Tape<double> tape(false);
  const auto out = fuse_features(tape, leaf(f), leaf(g), leaf(a), leaf(b), leaf(Tensor<double>(1, 1, 1, 0.0)));
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(out->value[i], f[i] * a[i]);
}

TEST(Fuse, UnitMasksAndGammaAdd) {
  const Shape s{2, 4, 4};
  const auto f = random_tensor<double>(s, 1), g = random_tensor<double>(s, 2);
  const Tensor<double> ones(s, 1.0);
  Tape<double> tape(false);
  const auto out = fuse_features(tape, leaf(f), leaf(g), leaf(ones), leaf(ones), leaf(Tensor<double>(1, 1, 1, 1.0)));
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(out->value[i], f[i] + g[i]);
}

TEST(Fuse, MatchesElementwiseOracle) {
  const Shape s{2, 4, 4};
  const auto f = random_tensor<double>(s, 5), g = random_tensor<double>(s, 6);
  const auto a = random_tensor<double>(s, 7), b = random_tensor<double>(s, 8);
  Tape<double> tape(false);
  const auto out = fuse_features(tape, leaf(f), leaf(g), leaf(a), leaf(b), leaf(Tensor<double>(1, 1, 1, 0.358)));
  EXPECT_LT(max_abs_diff(out->value, reference::fuse(f, g, a, b, 0.358)), 1e-7);
}

// ---------------------------------------------------------------------------
// Reconstruction and the full loop

TEST(Reconstruct, ZeroFinalLayerGivesZeroResidual) {
  auto model = generic_model(cfg(3, 2, 1));
  model.param("rec.conv2.weight")->value.fill(0.0);
  model.param("rec.conv2.bias")->value.fill(0.0);
  Tape<double> tape(false);
  const auto out = model.reconstruct(tape, leaf(random_tensor<double>({3, 8, 8}, 1)));
  for (double v : out->value.values()) EXPECT_EQ(v, 0.0);
}

TEST(Reconstruct, SingleChannelOutputForAnyWidth) {
  for (int m : {1, 2, 8}) {
    const auto model = generic_model(cfg(m, 2, 1));
    Tape<double> tape(false);
    EXPECT_EQ(model.reconstruct(tape, leaf(Tensor<double>(m, 9, 10)))->value.shape(), (Shape{1, 9, 10}));
  }
}

TEST(Reconstruct, MatchesOracle) {
  const auto model = generic_model(cfg(2, 2, 1));
  const auto x = random_tensor<double>({2, 8, 8}, 2);
  Tape<double> tape(false);
  EXPECT_LT(max_abs_diff(model.reconstruct(tape, leaf(x))->value, reference::reconstruct(model, x)), 1e-5);
}

TEST(Forward, ZeroReconstructionReturnsIlrEveryStep) {
  auto model = generic_model(cfg(2, 2, 3));
  model.param("rec.conv2.weight")->value.fill(0.0);
  model.param("rec.conv2.bias")->value.fill(0.0);
  const auto dem = random_tensor<double>({1, 8, 8}, 1);
  const auto out = model.predict(dem, random_tensor<double>({3, 16, 16}, 2));
  ASSERT_EQ(out.sr_steps.size(), 3u);
  for (const auto& sr : out.sr_steps) EXPECT_EQ(max_abs_diff(sr, dem), 0.0);
}

TEST(Forward, DefaultStepCount) {
  AfnModel<float> model(cfg(2, 2, 4));
  kaiming_init(model, 1);
  const auto out = model.predict(Tensor<float>(1, 8, 8), Tensor<float>(3, 16, 16));
  EXPECT_EQ(out.sr_steps.size(), 4u);
  EXPECT_EQ(out.residual_steps.size(), 4u);
}

TEST(Forward, TwoStepsMatchHandUnrolledOracle) {
  const auto model = generic_model(cfg(3, 4, 2));
  const auto dem = random_tensor<double>({1, 10, 10}, 1);
  const auto aerial = random_tensor<double>({3, 20, 20}, 2);
  using namespace reference;
  const double gamma = model.param("afm.gamma")->value[0];
  const Map f_dem = feature_extract_dem(model, dem);
  const Map f_rgb = feature_extract_rgb(model, aerial);
  Map feedback = f_dem;
  std::vector<Map> expected;
  for (int t = 0; t < 2; ++t) {
    const Map f_ru = residual_stack(model, f_dem, feedback);
    const auto [a, b] = attention(model, f_ru, f_rgb);
    const Map fused = fuse(f_ru, f_rgb, a, b, gamma);
    Map sr = reconstruct(model, fused);
    for (std::size_t i = 0; i < sr.size(); ++i) sr[i] += dem[i];
    expected.push_back(sr);
    feedback = fused;
  }
  const auto out = model.predict(dem, aerial);
  ASSERT_EQ(out.sr_steps.size(), 2u);
  for (int t = 0; t < 2; ++t) EXPECT_LT(max_abs_diff(out.sr_steps[t], expected[t]), 1e-5) << "step " << t;
}

TEST(Forward, SrIsResidualPlusIlr) {
  const auto f = verify::measure_fusion();
  EXPECT_TRUE(f.sr_is_residual_plus_ilr);
  EXPECT_LT(f.sr_minus_ilr_error, 1e-15);
}

TEST(Forward, AerialMustBeTwiceDem) {
  const auto model = generic_model(cfg(2, 2, 1));
  EXPECT_THROW(model.predict(Tensor<double>(1, 8, 8), Tensor<double>(3, 15, 16)), ShapeError);
}

// ---------------------------------------------------------------------------
// Variants

TEST(Variants, ParseNamesAndRejectUnknown) {
  EXPECT_EQ(parse_variant("afn"), Variant::afn);
  EXPECT_EQ(parse_variant("no-afm"), Variant::no_afm);
  EXPECT_EQ(parse_variant("afn0"), Variant::afn_static);
  EXPECT_EQ(parse_variant("afn64"), Variant::afn64);
  EXPECT_EQ(parse_variant("afnd"), Variant::afnd);
  try {
    parse_variant("afn2");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("no-afm"), std::string::npos);
  }
}

TEST(Variants, NoAfmHasNoAttentionOrGamma) {
  const AfnModel<double> model(cfg(2, 2, 1, Variant::no_afm));
  EXPECT_FALSE(model.params().contains("afm.gamma"));
  EXPECT_FALSE(model.params().contains("afm.attn.conv1.weight"));
  EXPECT_TRUE(model.params().contains("afm.fuse.weight"));
  const auto out = generic_model(cfg(2, 2, 2, Variant::no_afm)).predict(Tensor<double>(1, 8, 8), Tensor<double>(3, 16, 16), true);
  EXPECT_EQ(out.sr_steps.size(), 2u);
  EXPECT_TRUE(out.attention_masks->empty());
}

TEST(Variants, StaticAttentionReusesMasks) {
  const auto model = generic_model(cfg(2, 2, 3, Variant::afn_static));
  const auto out = model.predict(random_tensor<double>({1, 8, 8}, 1), random_tensor<double>({3, 16, 16}, 2), true);
  ASSERT_EQ(out.attention_masks->size(), 3u);
  for (const auto& [a, b] : *out.attention_masks) {
    EXPECT_EQ(max_abs_diff(a, out.attention_masks->front().first), 0.0);
    EXPECT_EQ(max_abs_diff(b, out.attention_masks->front().second), 0.0);
  }
  const auto dynamic = generic_model(cfg(2, 2, 3)).predict(random_tensor<double>({1, 8, 8}, 1),
                                                           random_tensor<double>({3, 16, 16}, 2), true);
  EXPECT_GT(max_abs_diff((*dynamic.attention_masks)[0].first, (*dynamic.attention_masks)[1].first), 0.0);
}

TEST(Variants, Afn64UsesNarrowAttention) {
  const AfnModel<double> model(cfg(64, 2, 1, Variant::afn64));
  EXPECT_EQ(model.param("afm.attn.conv1.weight")->value.channels(), 64);
  EXPECT_EQ(model.param("afm.attn.conv3.weight")->value.channels(), 64);
  EXPECT_EQ(model.param("afm.attn.conv4.weight")->value.channels(), 128);
  EXPECT_LT(param_count(cfg(64, 16, 4, Variant::afn64)), param_count(cfg(64, 16, 4)));
}

TEST(Variants, UniformPriorIgnoresAerialContent) {
  const auto model = generic_model(cfg(2, 2, 2, Variant::afnd));
  const auto dem = random_tensor<double>({1, 8, 8}, 1);
  const auto a = model.predict(dem, random_tensor<double>({3, 16, 16}, 2));
  const auto b = model.predict(dem, random_tensor<double>({3, 16, 16}, 3));
  EXPECT_EQ(max_abs_diff(a.final_prediction(), b.final_prediction()), 0.0);
}

// ---------------------------------------------------------------------------
// Parameters

TEST(ParamCount, IndependentOfT) {
  EXPECT_EQ(param_count(cfg(64, 16, 1)), param_count(cfg(64, 16, 4)));
  EXPECT_EQ(param_count(cfg(8, 4, 1)), param_count(cfg(8, 4, 7)));
}

TEST(ParamCount, ConvLayerArithmetic) {
  const int m = 5;
  for (const auto& l : layer_table(cfg(m, 2, 1))) {
    if (l.name == "fe.dem.conv2.weight") {
      EXPECT_EQ(l.shape.size(), 4u * m * m * 9);
    }
    if (l.name == "fe.dem.conv2.bias") {
      EXPECT_EQ(l.shape.size(), static_cast<std::size_t>(m));
    }
  }
}

TEST(ParamCount, FullConfigInExpectedBand) {
  const std::size_t n = param_count(ModelConfig{});
  EXPECT_GE(n, 3'000'000u);
  EXPECT_LE(n, 12'000'000u);
  EXPECT_EQ(AfnModel<float>(ModelConfig{}).params().scalar_count(), n);
}

TEST(ParamCount, ConfigValidation) {
  EXPECT_THROW(cfg(4, 3, 1).validate(), ConfigError);
  EXPECT_THROW(cfg(0, 4, 1).validate(), ConfigError);
  EXPECT_THROW(cfg(4, 4, 0).validate(), ConfigError);
  ModelConfig c = cfg(4, 4, 1);
  c.attention_widths = std::array<int, 4>{8, 8, 8, 7};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ParamStore, CopiesAreDeep) {
  AfnModel<double> a(cfg(2, 2, 1));
  kaiming_init(a, 1);
  AfnModel<double> b = a;
  b.param("rec.conv2.bias")->value.fill(9.0);
  EXPECT_EQ(a.param("rec.conv2.bias")->value[0], 0.0);
}

TEST(RgbBranch, FrozenBranchGetsNoGradient) {
  auto model = generic_model(cfg(2, 2, 1));
  model.set_rgb_trainable(false);
  Tape<double> tape(true);
  auto tr = model.forward(tape, leaf(random_tensor<double>({1, 8, 8}, 1)), random_tensor<double>({3, 16, 16}, 2));
  tr.sr.back()->grad_buffer().fill(1.0);
  tape.backward();
  EXPECT_TRUE(model.param("fe.rgb.conv1.weight")->grad.empty());
  EXPECT_FALSE(model.param("fe.rgb.adapt.weight")->grad.empty());
}
