#pragma once

// Overlapped tiled prediction over regions larger than one network patch.
//
// Tiles sit on a Cartesian grid of row/column origins (stride =
// patch * (1 - overlap), last origin flush with the border). Each tile's
// window is a separable linear ramp across the overlap it shares with its
// neighbours, renormalized so the weights of all tiles covering a pixel sum
// to one.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "afn/model.hpp"
#include "afn/png_io.hpp"
#include "afn/raster_io.hpp"
#include "afn/synthetic_terrain.hpp"

namespace afn {

inline constexpr int kDefaultPatchSize = 200;
inline constexpr double kDefaultOverlap = 0.25;

struct TilePlan {
  int region_rows = 0;
  int region_cols = 0;
  int patch_size = kDefaultPatchSize;
  double overlap_fraction = kDefaultOverlap;
  std::vector<int> row_origins;
  std::vector<int> col_origins;
  // Normalized 1-D windows, one per origin, each patch_size long. The blend
  // weight of tile (i, j) at local (r, c) is row_weights[i][r] * col_weights[j][c].
  std::vector<std::vector<double>> row_weights;
  std::vector<std::vector<double>> col_weights;

  std::size_t tile_count() const { return row_origins.size() * col_origins.size(); }
  int stride() const {
    return std::max(1, static_cast<int>(std::lround(patch_size * (1.0 - overlap_fraction))));
  }
  double weight(std::size_t i, std::size_t j, int r, int c) const { return row_weights[i][r] * col_weights[j][c]; }
};

namespace detail {

inline std::vector<std::vector<double>> axis_windows(const std::vector<int>& origins, int extent, int patch) {
  const std::size_t n = origins.size();
  std::vector<std::vector<double>> raw(n, std::vector<double>(patch, 1.0));
  for (std::size_t k = 0; k < n; ++k) {
    const int left = k > 0 ? origins[k - 1] + patch - origins[k] : 0;
    const int right = k + 1 < n ? origins[k] + patch - origins[k + 1] : 0;
    for (int i = 0; i < patch; ++i) {
      double w = 1.0;
      if (left > 0 && i < left) w = std::min(w, (i + 0.5) / left);
      if (right > 0 && i >= patch - right) w = std::min(w, (patch - i - 0.5) / right);
      raw[k][i] = w;
    }
  }
  std::vector<double> total(extent, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (int i = 0; i < patch; ++i) total[origins[k] + i] += raw[k][i];
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (int i = 0; i < patch; ++i) raw[k][i] /= total[origins[k] + i];
  }
  return raw;
}

}  // namespace detail

inline TilePlan plan_tiles(int rows, int cols, int patch_size = kDefaultPatchSize,
                           double overlap_fraction = kDefaultOverlap) {
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 0.5)) {
    throw InvalidArgument("overlap fraction must lie in [0, 0.5)");
  }
  if (patch_size < 1) throw InvalidArgument("patch size must be positive");
  if (rows < patch_size || cols < patch_size) {
    throw SizeError("region " + std::to_string(rows) + "x" + std::to_string(cols) + " is smaller than one " +
                    std::to_string(patch_size) + "px patch");
  }
  TilePlan plan;
  plan.region_rows = rows;
  plan.region_cols = cols;
  plan.patch_size = patch_size;
  plan.overlap_fraction = overlap_fraction;
  plan.row_origins = tile_origins(rows, patch_size, plan.stride());
  plan.col_origins = tile_origins(cols, patch_size, plan.stride());
  plan.row_weights = detail::axis_windows(plan.row_origins, rows, patch_size);
  plan.col_weights = detail::axis_windows(plan.col_origins, cols, patch_size);
  return plan;
}

// Per-pixel sum of blend weights over all covering tiles.
inline std::vector<double> weight_sums(const TilePlan& plan) {
  std::vector<double> sum(static_cast<std::size_t>(plan.region_rows) * plan.region_cols, 0.0);
  for (std::size_t i = 0; i < plan.row_origins.size(); ++i) {
    for (std::size_t j = 0; j < plan.col_origins.size(); ++j) {
      for (int r = 0; r < plan.patch_size; ++r) {
        for (int c = 0; c < plan.patch_size; ++c) {
          sum[static_cast<std::size_t>(plan.row_origins[i] + r) * plan.region_cols + plan.col_origins[j] + c] +=
              plan.weight(i, j, r, c);
        }
      }
    }
  }
  return sum;
}

// Predicts every tile with `predict` (tile DEM_ILR, tile aerial) -> tile
// heights and blends. The blend is accumulated as a weighted sum of
// departures from DEM_ILR and added back at the end; with unit weight sums
// this is the weighted average, and tiles that reproduce DEM_ILR stitch to it
// bit-exactly.
using TilePredictor = std::function<DemGrid(const DemGrid&, const AerialPatch&)>;

inline DemGrid stitch_tiles(const DemGrid& dem_ilr, const AerialPatch& aerial, const TilePlan& plan,
                            const TilePredictor& predict) {
  if (aerial.rows != 2 * dem_ilr.rows || aerial.cols != 2 * dem_ilr.cols) {
    throw ShapeError("aerial region must be exactly twice the DEM region");
  }
  if (plan.region_rows != dem_ilr.rows || plan.region_cols != dem_ilr.cols) {
    throw ShapeError("tile plan does not match the region dims");
  }
  const int p = plan.patch_size;
  std::vector<double> acc(dem_ilr.heights.size(), 0.0);
  for (std::size_t i = 0; i < plan.row_origins.size(); ++i) {
    for (std::size_t j = 0; j < plan.col_origins.size(); ++j) {
      const int r0 = plan.row_origins[i], c0 = plan.col_origins[j];
      const DemGrid tile = predict(dem_ilr.crop(r0, c0, p, p), aerial.crop(2 * r0, 2 * c0, 2 * p, 2 * p));
      if (tile.rows != p || tile.cols != p) throw ShapeError("tile prediction has wrong dims");
      for (int r = 0; r < p; ++r) {
        for (int c = 0; c < p; ++c) {
          const std::size_t k = static_cast<std::size_t>(r0 + r) * dem_ilr.cols + c0 + c;
          acc[k] += plan.weight(i, j, r, c) * (static_cast<double>(tile.at(r, c)) - dem_ilr.heights[k]);
        }
      }
    }
  }
  DemGrid out = DemGrid::filled(dem_ilr.rows, dem_ilr.cols, dem_ilr.cell_size);
  for (std::size_t k = 0; k < acc.size(); ++k) out.heights[k] = static_cast<float>(dem_ilr.heights[k] + acc[k]);
  return out;
}

// Forward pass on one tile, normalized by the tile's own DEM_ILR mean. The
// last step's residual is scaled back to meters and added to the tile's
// DEM_ILR (SR^T = I_res^T + DEM_ILR evaluated in meters).
template <typename T>
DemGrid predict_tile(const AfnModel<T>& model, const DemGrid& dem_ilr, const AerialPatch& aerial, double norm_scale) {
  const double offset = mean_height(dem_ilr);
  const Tensor<T> dem = normalize_heights<T>(dem_ilr, offset, norm_scale);
  const AfnOutput<T> out = model.predict(dem, normalize_aerial<T>(aerial));
  const Tensor<T>& res = out.residual_steps.back();
  DemGrid sr = dem_ilr;
  sr.nodata_value.reset();
  for (std::size_t i = 0; i < sr.heights.size(); ++i) {
    sr.heights[i] = static_cast<float>(static_cast<double>(dem_ilr.heights[i]) + static_cast<double>(res[i]) * norm_scale);
  }
  return sr;
}

template <typename T>
DemGrid predict_region(const AfnModel<T>& model, const DemGrid& dem_ilr, const AerialPatch& aerial,
                       const TilePlan& plan, double norm_scale = kDefaultNormScale) {
  return stitch_tiles(dem_ilr, aerial, plan, [&](const DemGrid& d, const AerialPatch& a) {
    return predict_tile(model, d, a, norm_scale);
  });
}

// 8-bit grey hillshade of a DEM for visual inspection.
inline void save_hillshade_png(const DemGrid& dem, const std::string& path, double azimuth = 315.0,
                               double altitude = 45.0) {
  const auto shade = hillshade(dem, azimuth, altitude);
  std::vector<std::uint8_t> gray(shade.size());
  for (std::size_t i = 0; i < shade.size(); ++i) {
    gray[i] = static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * shade[i]), 0L, 255L));
  }
  png::write_gray(path, dem.rows, dem.cols, gray);
}

}  // namespace afn
