#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "afn/checkpoint.hpp"
#include "afn/evaluation.hpp"
#include "afn/inference.hpp"
#include "afn/raster_io.hpp"

namespace afn {

// A method is either the bicubic baseline (empty checkpoint) or a trained
// checkpoint run through overlapped prediction.
struct MethodSpec {
  std::string name;
  std::filesystem::path checkpoint;

  bool is_baseline() const { return checkpoint.empty(); }
};

// "bicubic" or "name=path/to/checkpoint.afnc" (a bare path uses its stem as name).
inline MethodSpec parse_method(const std::string& s) {
  if (s == "bicubic") return {"bicubic", {}};
  const auto eq = s.find('=');
  if (eq != std::string::npos) return {s.substr(0, eq), s.substr(eq + 1)};
  return {std::filesystem::path(s).stem().string(), s};
}

struct CompareOptions {
  int patch_size = kDefaultPatchSize;
  double overlap = kDefaultOverlap;
  double norm_scale = kDefaultNormScale;
  std::optional<double> peak_m;  // overrides the per-region elevation range
  bool include_baseline = true;
};

struct CompareResult {
  EvalReport report;
  std::vector<std::pair<std::string, std::string>> missing;  // (region, method)
};

inline CompareResult compare_methods(const DatasetManifest& manifest, std::vector<MethodSpec> methods,
                                     const CompareOptions& opt = {}) {
  const auto regions = manifest.split(Split::test);
  if (regions.empty()) throw InvalidArgument("no test regions in manifest");
  const bool has_baseline =
      std::any_of(methods.begin(), methods.end(), [](const MethodSpec& m) { return m.is_baseline(); });
  if (opt.include_baseline && !has_baseline) methods.insert(methods.begin(), MethodSpec{"bicubic", {}});

  std::vector<std::optional<AfnModel<float>>> models;
  for (const auto& m : methods) {
    if (m.is_baseline()) {
      models.emplace_back();
      continue;
    }
    try {
      models.emplace_back(load_model<float>(m.checkpoint));
    } catch (const Error&) {
      models.emplace_back();  // every row for this method is reported missing
    }
  }

  CompareResult result;
  for (const ManifestEntry* e : regions) {
    const PatchTriple t = load_triple(manifest, *e);
    const double peak = opt.peak_m.value_or(elevation_range(t.hr));
    for (std::size_t k = 0; k < methods.size(); ++k) {
      const auto& m = methods[k];
      EvalRow row;
      row.region = e->id;
      row.method = m.name;
      row.peak_m = peak;
      DemGrid pred;
      if (m.is_baseline()) {
        pred = t.dem_ilr;
      } else if (!models[k]) {
        result.missing.emplace_back(e->id, m.name);
        continue;
      } else {
        const int patch = std::min({opt.patch_size, t.dem_ilr.rows, t.dem_ilr.cols});
        const auto start = std::chrono::steady_clock::now();
        pred = predict_region(*models[k], t.dem_ilr, t.aerial, plan_tiles(t.dem_ilr.rows, t.dem_ilr.cols, patch, opt.overlap),
                              opt.norm_scale);
        row.inference_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        row.params = param_count(models[k]->config());
      }
      row.rmse_m = rmse(pred, t.hr);
      row.psnr_db = psnr_from_rmse(row.rmse_m, peak);
      result.report.rows.push_back(std::move(row));
    }
  }
  result.report.validate();
  return result;
}

}  // namespace afn
