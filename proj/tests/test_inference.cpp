#include <cmath>

#include <gtest/gtest.h>

#include "afn/inference.hpp"
#include "afn/verify.hpp"
#include "test_util.hpp"

using namespace afn;

namespace {

struct Region {
  DemGrid hr, ilr;
  AerialPatch aerial;
};

Region region(int size, std::uint64_t seed = 3) {
  SynthConfig sc;
  sc.seed = seed;
  sc.size = size;
  Region r;
  r.hr = gen_dem(sc);
  r.ilr = make_lr_ilr(r.hr).dem_ilr;
  r.aerial = gen_aerial(r.hr, sc);
  return r;
}

AfnModel<float> model_with_bias(float bias) {
  AfnModel<float> m(verify::small_config());
  init_params(m, 2);
  m.param("rec.conv2.bias")->value.fill(bias);
  return m;
}

}  // namespace

TEST(TilePlan, SingleTileHasUnitWeights) {
  const TilePlan p = plan_tiles(200, 200);
  ASSERT_EQ(p.tile_count(), 1u);
  for (double w : p.row_weights[0]) EXPECT_EQ(w, 1.0);
  for (double w : p.col_weights[0]) EXPECT_EQ(w, 1.0);
}

TEST(TilePlan, DefaultStrideAndAnchors) {
  const TilePlan p = plan_tiles(350, 200);
  EXPECT_EQ(p.stride(), 150);
  EXPECT_EQ(p.row_origins, (std::vector<int>{0, 150}));
  EXPECT_EQ(p.col_origins, (std::vector<int>{0}));
  EXPECT_EQ(p.overlap_fraction, 0.25);
}

TEST(TilePlan, LastTileAnchoredToEdge) {
  const TilePlan p = plan_tiles(500, 430);
  EXPECT_EQ(p.row_origins.back(), 300);
  EXPECT_EQ(p.col_origins.back(), 230);
}

TEST(TilePlan, PartitionOfUnity) {
  for (auto [r, c, patch, ov] : std::vector<std::tuple<int, int, int, double>>{
           {500, 500, 200, 0.25}, {97, 61, 24, 0.4}, {64, 64, 16, 0.0}, {33, 80, 32, 0.49}}) {
    const auto sums = weight_sums(plan_tiles(r, c, patch, ov));
    for (double s : sums) ASSERT_NEAR(s, 1.0, 1e-12) << r << "x" << c;
  }
}

TEST(TilePlan, Errors) {
  EXPECT_THROW(plan_tiles(300, 300, 200, 0.5), InvalidArgument);
  EXPECT_THROW(plan_tiles(300, 300, 200, -0.1), InvalidArgument);
  EXPECT_THROW(plan_tiles(300, 300, 0, 0.25), InvalidArgument);
  EXPECT_THROW(plan_tiles(150, 300, 200, 0.25), SizeError);
}

TEST(Stitch, ZeroResidualReproducesInputExactly) {
  const Region g = region(64);
  AfnModel<float> m = model_with_bias(0.0f);
  m.param("rec.conv2.weight")->value.fill(0.0f);
  const DemGrid out = predict_region(m, g.ilr, g.aerial, plan_tiles(64, 64, 24, 0.25));
  EXPECT_EQ(out.heights, g.ilr.heights);
}

TEST(Stitch, SingleTileEqualsDirectPrediction) {
  const Region g = region(32);
  const AfnModel<float> m = model_with_bias(0.2f);
  const DemGrid stitched = predict_region(m, g.ilr, g.aerial, plan_tiles(32, 32, 32));
  const DemGrid direct = predict_tile(m, g.ilr, g.aerial, kDefaultNormScale);
  EXPECT_EQ(stitched.heights, direct.heights);
}

TEST(Stitch, MatchesBruteForceOracleAndTilesDisagreeInOverlap) {
  const Region g = region(48);
  const DemGrid strip = g.ilr.crop(0, 0, 24, 40);
  const AerialPatch rgb = g.aerial.crop(0, 0, 48, 80);
  const AfnModel<float> m = model_with_bias(0.3f);
  const TilePlan plan = plan_tiles(24, 40, 24, 0.25);
  ASSERT_EQ(plan.col_origins, (std::vector<int>{0, 16}));

  std::vector<std::vector<DemGrid>> tiles(1);
  for (int c0 : plan.col_origins) {
    tiles[0].push_back(predict_tile(m, strip.crop(0, c0, 24, 24), rgb.crop(0, 2 * c0, 48, 48), kDefaultNormScale));
  }
  double disagreement = 0.0;
  for (int r = 0; r < 24; ++r) {
    for (int c = 16; c < 24; ++c) disagreement = std::max(disagreement, std::abs(double(tiles[0][0].at(r, c)) - tiles[0][1].at(r, c - 16)));
  }
  EXPECT_GT(disagreement, 1e-3);

  const DemGrid got = predict_region(m, strip, rgb, plan);
  const DemGrid oracle = verify::brute_force_blend(strip, plan.row_origins, plan.col_origins, 24, tiles);
  for (std::size_t i = 0; i < got.heights.size(); ++i) ASSERT_NEAR(got.heights[i], oracle.heights[i], 1e-5);
}

TEST(Stitch, ArbitraryTilesOnTwoDimensionalGrid) {
  const Region g = region(64);
  const DemGrid base = g.ilr.crop(0, 0, 61, 57);
  const AerialPatch rgb = g.aerial.crop(0, 0, 122, 114);
  const TilePlan plan = plan_tiles(61, 57, 24, 0.4);
  ASSERT_GT(plan.tile_count(), 6u);

  // Each tile is the input plus a tile-specific tilted plane, so neighbouring
  // tiles disagree everywhere they overlap.
  auto tile_value = [](int r0, int c0, int r, int c) { return 0.01 * r0 - 0.02 * c0 + 0.1 * r - 0.05 * c; };
  std::vector<std::vector<DemGrid>> tiles(plan.row_origins.size());
  for (std::size_t i = 0; i < plan.row_origins.size(); ++i) {
    for (int c0 : plan.col_origins) {
      DemGrid t = base.crop(plan.row_origins[i], c0, 24, 24);
      for (int r = 0; r < 24; ++r) {
        for (int c = 0; c < 24; ++c) t.heights[r * 24 + c] += static_cast<float>(tile_value(plan.row_origins[i], c0, r, c));
      }
      tiles[i].push_back(t);
    }
  }
  std::size_t calls = 0;
  const DemGrid got = stitch_tiles(base, rgb, plan, [&](const DemGrid& d, const AerialPatch& a) {
    ++calls;
    EXPECT_EQ(a.rows, 48);
    for (std::size_t i = 0; i < plan.row_origins.size(); ++i) {
      for (std::size_t j = 0; j < plan.col_origins.size(); ++j) {
        if (d.heights == base.crop(plan.row_origins[i], plan.col_origins[j], 24, 24).heights) return tiles[i][j];
      }
    }
    ADD_FAILURE() << "unexpected tile";
    return d;
  });
  EXPECT_EQ(calls, plan.tile_count());
  const DemGrid oracle = verify::brute_force_blend(base, plan.row_origins, plan.col_origins, 24, tiles);
  for (std::size_t i = 0; i < got.heights.size(); ++i) ASSERT_NEAR(got.heights[i], oracle.heights[i], 3e-4);
}

TEST(Stitch, ShapeErrors) {
  const Region g = region(32);
  const AfnModel<float> m = model_with_bias(0.0f);
  EXPECT_THROW(predict_region(m, g.ilr, g.aerial.crop(0, 0, 62, 64), plan_tiles(32, 32, 16)), ShapeError);
  EXPECT_THROW(predict_region(m, g.ilr, g.aerial, plan_tiles(40, 32, 16)), ShapeError);
}

TEST(Stitch, UniformOffsetSurvivesBlending) {
  const Region g = region(64);
  const TilePlan plan = plan_tiles(64, 64, 24, 0.25);
  const DemGrid got = stitch_tiles(g.ilr, g.aerial, plan, [](const DemGrid& d, const AerialPatch&) {
    DemGrid t = d;
    for (float& v : t.heights) v += 2.0f;
    return t;
  });
  for (std::size_t i = 0; i < got.heights.size(); ++i) ASSERT_NEAR(got.heights[i] - g.ilr.heights[i], 2.0f, 1e-4);
}

TEST(Hillshade, WritesPng) {
  const auto dir = scratch_dir();
  const Region g = region(32);
  save_hillshade_png(g.hr, (dir / "shade.png").string());
  const auto img = png::read_rgb((dir / "shade.png").string());
  EXPECT_EQ(img.rows, 32);
  EXPECT_EQ(img.cols, 32);
}
