#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afn/raster_io.hpp"

namespace afn {

// Root mean squared height difference in meters. A pixel is skipped when
// either raster marks it nodata.
inline double rmse(const DemGrid& pred, const DemGrid& gt) {
  if (pred.rows != gt.rows || pred.cols != gt.cols) throw ShapeError("rmse: raster shapes differ");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.heights.size(); ++i) {
    if (gt.is_nodata(gt.heights[i]) || pred.is_nodata(pred.heights[i])) continue;
    const double d = static_cast<double>(pred.heights[i]) - static_cast<double>(gt.heights[i]);
    sum += d * d;
    ++n;
  }
  if (n == 0) throw EmptyMetricError("every pixel is nodata");
  return std::sqrt(sum / static_cast<double>(n));
}

inline double psnr_from_rmse(double rmse_m, double peak_m) {
  if (!(peak_m > 0.0)) throw InvalidArgument("PSNR peak must be positive");
  if (rmse_m == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak_m / rmse_m);
}

// Identical rasters give +inf.
inline double psnr(const DemGrid& pred, const DemGrid& gt, double peak_m) {
  if (!(peak_m > 0.0)) throw InvalidArgument("PSNR peak must be positive");
  return psnr_from_rmse(rmse(pred, gt), peak_m);
}

// Peak amplitude implied by a reported (RMSE, PSNR) pair.
inline double implied_peak(double rmse_m, double psnr_db) {
  if (!(rmse_m > 0.0)) throw InvalidArgument("implied_peak needs rmse > 0");
  return rmse_m * std::pow(10.0, psnr_db / 20.0);
}

// Elevation range of the valid pixels.
inline double elevation_range(const DemGrid& g) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (float v : g.heights) {
    if (g.is_nodata(v)) continue;
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  if (!(hi >= lo)) throw EmptyMetricError("every pixel is nodata");
  return hi - lo;
}

struct EvalRow {
  std::string region;
  std::string method;
  double rmse_m = 0.0;
  double psnr_db = 0.0;
  double peak_m = 0.0;
  std::optional<std::size_t> params;
  std::optional<double> inference_seconds;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  void validate() const {
    for (const auto& r : rows) {
      const double expect = psnr_from_rmse(r.rmse_m, r.peak_m);
      if (std::isinf(expect) ? !std::isinf(r.psnr_db) : std::abs(expect - r.psnr_db) > 1e-9) {
        throw NumericError("row " + r.region + "/" + r.method + " violates psnr = 20 log10(peak/rmse)");
      }
    }
  }
};

inline nlohmann::json to_json(const EvalRow& r) {
  nlohmann::json j{{"region", r.region}, {"method", r.method}, {"rmse_m", r.rmse_m}, {"peak_m", r.peak_m}};
  j["psnr_db"] = std::isfinite(r.psnr_db) ? nlohmann::json(r.psnr_db) : nlohmann::json(nullptr);
  j["params"] = r.params ? nlohmann::json(*r.params) : nlohmann::json(nullptr);
  j["inference_seconds"] = r.inference_seconds ? nlohmann::json(*r.inference_seconds) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const EvalReport& report) {
  auto arr = nlohmann::json::array();
  for (const auto& r : report.rows) arr.push_back(to_json(r));
  return arr;
}

inline std::string format_number(double v) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string format_table(const EvalReport& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %-20s %12s %12s %12s\n", "region", "method", "rmse_m", "psnr_db", "peak_m");
  out += line;
  out += std::string(76, '-') + "\n";
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof(line), "%-16s %-20s %12s %12s %12s\n", r.region.c_str(), r.method.c_str(),
                  format_number(r.rmse_m).c_str(), format_number(r.psnr_db).c_str(), format_number(r.peak_m).c_str());
    out += line;
  }
  return out;
}

// Per-region (AFN, AFN with overlapped prediction) RMSE/PSNR scores as
// published for the four mountain test regions.
struct PublishedScores {
  const char* region;
  double afn_rmse, afn_psnr;
  double afno_rmse, afno_psnr;
};

inline constexpr PublishedScores kPublishedScores[] = {
    {"Bassiero", 0.943, 63.958, 0.926, 64.113},
    {"Forcanada", 1.058, 62.351, 1.030, 62.574},
    {"Durrenstein", 0.877, 63.841, 0.854, 64.061},
    {"Monte Magro", 0.580, 71.211, 0.566, 71.417},
};

}  // namespace afn
