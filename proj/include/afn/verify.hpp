#pragma once

// Self-checks behind `afn verify`. Each measure_* function returns raw
// numbers; run_checks() applies the tolerances and reports pass/fail.

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afn/evaluation.hpp"
#include "afn/gradcheck.hpp"
#include "afn/inference.hpp"
#include "afn/reference.hpp"
#include "afn/training.hpp"

namespace afn::verify {

inline ModelConfig small_config(int T = 2) {
  ModelConfig c;
  c.m = 4;
  c.N = 4;
  c.T = T;
  return c;
}

template <typename T>
Tensor<T> random_tensor(Shape s, std::uint64_t seed, double stddev = 1.0) {
  detail::NormalStream rng(seed);
  Tensor<T> t(s);
  for (T& v : t.values()) v = static_cast<T>(stddev * rng.next());
  return t;
}

// Max |library - oracle| for each block on a 16x16 input.
struct BlockOracleErrors {
  double feature_extract_dem = 0.0;
  double feature_extract_rgb = 0.0;
  double residual_stack = 0.0;
  double attention = 0.0;
  double reconstruct = 0.0;
  double worst() const {
    return std::max({feature_extract_dem, feature_extract_rgb, residual_stack, attention, reconstruct});
  }
};

inline BlockOracleErrors measure_block_oracles(std::uint64_t seed = 11, int size = 16) {
  const AfnModel<double> model = gradcheck_model(small_config(), seed);
  Tape<double> tape(false);
  const auto dem = random_tensor<double>({1, size, size}, mix_seed(seed, 1));
  const auto aerial = random_tensor<double>({3, 2 * size, 2 * size}, mix_seed(seed, 2));
  const auto fb = random_tensor<double>({4, size, size}, mix_seed(seed, 3));
  const auto rgb = random_tensor<double>({4, size, size}, mix_seed(seed, 4));

  BlockOracleErrors e;
  const auto f_dem = model.feature_extract_dem(tape, leaf(dem));
  e.feature_extract_dem = max_abs_diff(f_dem->value, reference::feature_extract_dem(model, dem));
  e.feature_extract_rgb =
      max_abs_diff(model.feature_extract_rgb(tape, leaf(aerial))->value, reference::feature_extract_rgb(model, aerial));
  const auto f_ru = model.residual_stack(tape, f_dem, leaf(fb));
  e.residual_stack = max_abs_diff(f_ru->value, reference::residual_stack(model, f_dem->value, fb));
  const auto [a_dem, a_rgb] = model.attention(tape, f_ru, leaf(rgb));
  const auto [o_dem, o_rgb] = reference::attention(model, f_ru->value, rgb);
  e.attention = std::max(max_abs_diff(a_dem->value, o_dem), max_abs_diff(a_rgb->value, o_rgb));
  e.reconstruct = max_abs_diff(model.reconstruct(tape, f_ru)->value, reference::reconstruct(model, f_ru->value));
  return e;
}

struct FusionMeasurements {
  double fuse_error = 0.0;            // fuse_features vs element-wise oracle
  bool sr_is_residual_plus_ilr = false;  // SR^t == I_res^t + DEM_ILR bitwise, every step
  double sr_minus_ilr_error = 0.0;    // max |(SR^t - DEM_ILR) - I_res^t|
  double loss_over_delta = 0.0;       // T=4 loss / δ for a uniform offset δ
};

inline FusionMeasurements measure_fusion(std::uint64_t seed = 12) {
  FusionMeasurements out;
  Tape<double> tape(false);
  const Shape s{4, 9, 11};
  const auto f_ru = random_tensor<double>(s, mix_seed(seed, 1));
  const auto f_rgb = random_tensor<double>(s, mix_seed(seed, 2));
  auto a_dem = random_tensor<double>(s, mix_seed(seed, 3));
  auto a_rgb = random_tensor<double>(s, mix_seed(seed, 4));
  for (auto* a : {&a_dem, &a_rgb}) {
    for (double& v : a->values()) v = 1.0 / (1.0 + std::exp(-v));
  }
  const double gamma = 0.37;
  const auto got = fuse_features(tape, leaf(f_ru), leaf(f_rgb), leaf(a_dem), leaf(a_rgb),
                                 leaf(Tensor<double>(1, 1, 1, gamma)));
  out.fuse_error = max_abs_diff(got->value, reference::fuse(f_ru, f_rgb, a_dem, a_rgb, gamma));

  const AfnModel<double> model = gradcheck_model(small_config(3), seed);
  const auto dem = random_tensor<double>({1, 12, 12}, mix_seed(seed, 5));
  const auto aerial = random_tensor<double>({3, 24, 24}, mix_seed(seed, 6));
  const auto tr = model.forward(tape, leaf(dem), aerial);
  out.sr_is_residual_plus_ilr = true;
  for (std::size_t t = 0; t < tr.sr.size(); ++t) {
    for (std::size_t i = 0; i < dem.size(); ++i) {
      const double sr = tr.sr[t]->value[i], res = tr.residual[t]->value[i];
      out.sr_is_residual_plus_ilr = out.sr_is_residual_plus_ilr && sr == res + dem[i];
      out.sr_minus_ilr_error = std::max(out.sr_minus_ilr_error, std::abs((sr - dem[i]) - res));
    }
  }

  const double delta = 0.125;
  const auto hr = random_tensor<double>({1, 10, 10}, mix_seed(seed, 7));
  std::vector<Tensor<double>> steps(4, hr);
  for (auto& st : steps) {
    for (double& v : st.values()) v += delta;
  }
  out.loss_over_delta = multi_step_l1<double>(steps, hr).value / delta;
  return out;
}

// After init_params γ is zero and the RGB term adds nothing to F_fused.
struct GammaInitMeasurements {
  double gamma = 1.0;
  bool rgb_term_vanishes = false;
};

inline GammaInitMeasurements measure_gamma_init(std::uint64_t seed = 13) {
  AfnModel<float> model(small_config());
  init_params(model, seed);
  GammaInitMeasurements out;
  out.gamma = model.param("afm.gamma")->value[0];
  Tape<float> tape(false);
  const Shape s{4, 10, 10};
  const auto f_ru = random_tensor<float>(s, mix_seed(seed, 1));
  const auto a_dem = random_tensor<float>(s, mix_seed(seed, 2));
  const auto a_rgb = random_tensor<float>(s, mix_seed(seed, 3));
  out.rgb_term_vanishes = true;
  for (double scale : {1.0, 1e3, 1e6}) {
    const auto f_rgb = random_tensor<float>(s, mix_seed(seed, 4), scale);
    const auto fused = model.fuse(tape, leaf(f_ru), leaf(f_rgb), leaf(a_dem), leaf(a_rgb));
    for (std::size_t i = 0; i < f_ru.size(); ++i) {
      out.rgb_term_vanishes = out.rgb_term_vanishes && fused->value[i] == f_ru[i] * a_dem[i];
    }
  }
  return out;
}

struct StitchMeasurements {
  double partition_of_unity = 0.0;  // max |Σ weights - 1| over all tested plans
  bool zero_residual_exact = false;
  double two_tile_error_m = 0.0;
};

// Brute-force blend: unnormalized linear ramps built from the overlap of
// each pair of neighbouring tiles, divided by the per-pixel weight total.
inline DemGrid brute_force_blend(const DemGrid& base, const std::vector<int>& rows, const std::vector<int>& cols,
                                 int patch, const std::vector<std::vector<DemGrid>>& tiles) {
  auto ramp = [patch](const std::vector<int>& o, std::size_t k, int local) {
    double w = 1.0;
    if (k > 0) {
      const int ov = o[k - 1] + patch - o[k];
      if (ov > 0 && local < ov) w = std::min(w, (local + 0.5) / ov);
    }
    if (k + 1 < o.size()) {
      const int ov = o[k] + patch - o[k + 1];
      if (ov > 0 && local >= patch - ov) w = std::min(w, (patch - local - 0.5) / ov);
    }
    return w;
  };
  DemGrid out = base;
  for (int r = 0; r < base.rows; ++r) {
    for (int c = 0; c < base.cols; ++c) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
          const int lr = r - rows[i], lc = c - cols[j];
          if (lr < 0 || lc < 0 || lr >= patch || lc >= patch) continue;
          const double w = ramp(rows, i, lr) * ramp(cols, j, lc);
          num += w * tiles[i][j].at(lr, lc);
          den += w;
        }
      }
      out.heights[static_cast<std::size_t>(r) * base.cols + c] = static_cast<float>(num / den);
    }
  }
  return out;
}

inline StitchMeasurements measure_stitching(std::uint64_t seed = 14) {
  StitchMeasurements out;
  for (auto [rows, cols, patch, ov] : std::vector<std::tuple<int, int, int, double>>{
           {500, 500, 200, 0.25}, {350, 200, 200, 0.25}, {200, 200, 200, 0.25}, {97, 61, 24, 0.4}, {64, 64, 16, 0.0}}) {
    const auto sums = weight_sums(plan_tiles(rows, cols, patch, ov));
    for (double s : sums) out.partition_of_unity = std::max(out.partition_of_unity, std::abs(s - 1.0));
  }

  SynthConfig sc;
  sc.seed = seed;
  sc.size = 56;
  const DemGrid hr = gen_dem(sc);
  const DemGrid ilr = make_lr_ilr(hr).dem_ilr;
  const AerialPatch aerial = gen_aerial(hr, sc);

  AfnModel<float> zero(small_config());
  init_params(zero, seed);
  zero.param("rec.conv2.weight")->value.fill(0.0f);
  zero.param("rec.conv2.bias")->value.fill(0.0f);
  const DemGrid z = predict_region(zero, ilr, aerial, plan_tiles(ilr.rows, ilr.cols, 24, 0.25));
  out.zero_residual_exact = z.heights == ilr.heights;

  // Two tiles side by side: a 24x40 strip, patch 24.
  AfnModel<float> model(small_config());
  init_params(model, seed);
  model.param("rec.conv2.bias")->value.fill(0.3f);
  const DemGrid strip = ilr.crop(0, 0, 24, 40);
  const AerialPatch strip_rgb = aerial.crop(0, 0, 48, 80);
  const TilePlan plan = plan_tiles(24, 40, 24, 0.25);
  const DemGrid got = predict_region(model, strip, strip_rgb, plan);
  std::vector<std::vector<DemGrid>> tiles(plan.row_origins.size());
  for (std::size_t i = 0; i < plan.row_origins.size(); ++i) {
    for (int c0 : plan.col_origins) {
      const int r0 = plan.row_origins[i];
      tiles[i].push_back(predict_tile(model, strip.crop(r0, c0, 24, 24), strip_rgb.crop(2 * r0, 2 * c0, 48, 48),
                                      kDefaultNormScale));
    }
  }
  const DemGrid oracle = brute_force_blend(strip, plan.row_origins, plan.col_origins, 24, tiles);
  for (std::size_t i = 0; i < got.heights.size(); ++i) {
    out.two_tile_error_m = std::max(out.two_tile_error_m, std::abs(static_cast<double>(got.heights[i]) - oracle.heights[i]));
  }
  return out;
}

struct ParamCountMeasurements {
  std::size_t full = 0;  // m = 64, N = 16
  bool invariant_in_T = false;
};

inline ParamCountMeasurements measure_param_count() {
  ModelConfig c;
  ParamCountMeasurements out{param_count(c), true};
  for (int T = 1; T <= 8; ++T) {
    c.T = T;
    out.invariant_in_T = out.invariant_in_T && param_count(c) == out.full;
  }
  return out;
}

struct PeakRow {
  std::string region;
  double afn_peak, afno_peak, expected;
};

// Peaks derived from the published (RMSE, PSNR) pairs.
inline constexpr double kExpectedPeaks[] = {1487.0, 1387.0, 1364.0, 2107.0};

inline std::vector<PeakRow> measure_implied_peaks() {
  std::vector<PeakRow> rows;
  std::size_t i = 0;
  for (const auto& s : kPublishedScores) {
    rows.push_back({s.region, implied_peak(s.afn_rmse, s.afn_psnr), implied_peak(s.afno_rmse, s.afno_psnr),
                    kExpectedPeaks[i++]});
  }
  return rows;
}

// Worst relative error of implied_peak(rmse, psnr_from_rmse(rmse, peak)) = peak.
inline double measure_metric_roundtrip() {
  double worst = 0.0;
  for (double peak : {1.0, 250.0, 1487.0, 2107.0, 8848.0}) {
    for (double e : {1e-3, 0.566, 0.943, 12.5, 400.0}) {
      worst = std::max(worst, std::abs(implied_peak(e, psnr_from_rmse(e, peak)) - peak) / peak);
    }
  }
  return worst;
}

struct ScheduleProbe {
  int epoch;
  double expected;
  double actual;
};

inline std::vector<ScheduleProbe> measure_schedule() {
  const TrainConfig tc;
  std::vector<ScheduleProbe> out;
  for (auto [epoch, lr] : std::vector<std::pair<int, double>>{{0, 1e-4}, {44, 1e-4}, {45, 5e-5}, {59, 5e-5},
                                                              {60, 2.5e-5}, {70, 1.25e-5}, {74, 1.25e-5}}) {
    out.push_back({epoch, lr, lr_at_epoch(tc, epoch)});
  }
  return out;
}

// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

inline std::vector<CheckResult> run_checks() {
  std::vector<CheckResult> out;
  auto run = [&out](const std::string& name, const std::function<CheckResult()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("threw: ") + e.what();
    }
    r.name = name;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.push_back(std::move(r));
  };

  run("gradient_check", [] {
    const auto rep = gradient_check(small_config(), 5);
    std::string worst;
    double w = -1.0;
    for (const auto& g : rep.groups) {
      if (g.max_rel_error > w) w = g.max_rel_error, worst = g.name;
    }
    return CheckResult{"", rep.max_rel_error < 1e-3 && rep.gamma_gradient != 0.0,
                       "max rel error " + sci(rep.max_rel_error) + " (" + worst + ")"};
  });
  run("block_oracles", [] {
    const auto e = measure_block_oracles();
    return CheckResult{"", e.worst() < 1e-5, "max abs error " + sci(e.worst())};
  });
  run("fusion_oracle", [] {
    const auto f = measure_fusion();
    const bool ok = f.fuse_error < 1e-7 && f.sr_is_residual_plus_ilr && std::abs(f.loss_over_delta - 4.0) < 1e-12;
    return CheckResult{"", ok, "fuse error " + sci(f.fuse_error) + ", loss/delta " + std::to_string(f.loss_over_delta)};
  });
  run("gamma_init", [] {
    const auto g = measure_gamma_init();
    return CheckResult{"", g.gamma == 0.0 && g.rgb_term_vanishes, "gamma " + std::to_string(g.gamma)};
  });
  run("stitching", [] {
    const auto s = measure_stitching();
    const bool ok = s.partition_of_unity < 1e-6 && s.zero_residual_exact && s.two_tile_error_m < 1e-5;
    return CheckResult{"", ok,
                       "unity dev " + sci(s.partition_of_unity) + ", two-tile error " + sci(s.two_tile_error_m) + " m" +
                           (s.zero_residual_exact ? "" : ", zero-residual NOT exact")};
  });
  run("param_count", [] {
    const auto p = measure_param_count();
    const bool ok = p.full >= 3'000'000 && p.full <= 12'000'000 && p.invariant_in_T;
    return CheckResult{"", ok, std::to_string(p.full) + " parameters"};
  });
  run("implied_peaks", [] {
    bool ok = measure_metric_roundtrip() < 1e-9;
    std::string detail;
    for (const auto& r : measure_implied_peaks()) {
      ok = ok && std::abs(r.afn_peak - r.expected) / r.expected < 0.01 &&
           std::abs(r.afno_peak - r.expected) / r.expected < 0.01 &&
           std::abs(r.afn_peak - r.afno_peak) / r.afn_peak < 0.01;
      detail += r.region + " " + format_number(r.afn_peak) + "/" + format_number(r.afno_peak) + "; ";
    }
    return CheckResult{"", ok, detail};
  });
  run("lr_schedule", [] {
    bool ok = true;
    for (const auto& p : measure_schedule()) ok = ok && std::abs(p.actual - p.expected) <= 1e-15;
    return CheckResult{"", ok, "epochs 0/44/45/59/60/70/74"};
  });
  return out;
}

inline nlohmann::json to_json(const std::vector<CheckResult>& results) {
  auto arr = nlohmann::json::array();
  for (const auto& r : results) {
    arr.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}, {"seconds", r.seconds}});
  }
  return arr;
}

}  // namespace afn::verify
