#pragma once

// Deterministic desk-scale terrain: multi-octave value noise heightfields and
// hillshaded pseudo-aerial renders.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afn/raster_io.hpp"

namespace afn {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt + 0x632be59bd9b4e019ULL));
}

// Deterministic Fisher-Yates driven by splitmix64; independent of the
// standard library's distribution implementations.
template <typename V>
void seeded_shuffle(std::vector<V>& items, std::uint64_t seed) {
  std::uint64_t state = seed;
  for (std::size_t i = items.size(); i > 1; --i) {
    state = splitmix64(state);
    std::swap(items[i - 1], items[state % i]);
  }
}

struct SynthConfig {
  std::uint64_t seed = 1;
  int size = 128;
  int octaves = 6;
  double base_amplitude = 300.0;  // meters, amplitude of the lowest octave
  double persistence = 0.5;
  double sun_azimuth = 315.0;     // degrees clockwise from north
  double sun_altitude = 45.0;     // degrees above the horizon
  double cell_size = 2.0;         // meters per HR pixel
  double base_frequency = 1.0;    // lattice cells across the grid at octave 0
  double base_elevation = 1500.0;

  void validate() const {
    if (size < 16) throw InvalidArgument("synth size must be >= 16");
    if (octaves < 1) throw InvalidArgument("octaves must be >= 1");
    if (!(persistence > 0.0 && persistence < 1.0)) throw InvalidArgument("persistence must lie in (0,1)");
    if (!(sun_altitude > 0.0 && sun_altitude <= 90.0)) throw InvalidArgument("sun altitude must lie in (0,90]");
    if (!(cell_size > 0.0) || !(base_frequency > 0.0)) throw InvalidArgument("cell_size and base_frequency > 0");
  }
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"seed", c.seed},
       {"size", c.size},
       {"octaves", c.octaves},
       {"base_amplitude", c.base_amplitude},
       {"persistence", c.persistence},
       {"sun_azimuth", c.sun_azimuth},
       {"sun_altitude", c.sun_altitude},
       {"cell_size", c.cell_size},
       {"base_frequency", c.base_frequency},
       {"base_elevation", c.base_elevation}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  c.seed = j.value("seed", c.seed);
  c.size = j.value("size", c.size);
  c.octaves = j.value("octaves", c.octaves);
  c.base_amplitude = j.value("base_amplitude", c.base_amplitude);
  c.persistence = j.value("persistence", c.persistence);
  c.sun_azimuth = j.value("sun_azimuth", c.sun_azimuth);
  c.sun_altitude = j.value("sun_altitude", c.sun_altitude);
  c.cell_size = j.value("cell_size", c.cell_size);
  c.base_frequency = j.value("base_frequency", c.base_frequency);
  c.base_elevation = j.value("base_elevation", c.base_elevation);
}

namespace detail {

// Lattice value in [-1, 1].
inline double lattice(std::uint64_t seed, int octave, std::int64_t ix, std::int64_t iy) {
  std::uint64_t h = mix_seed(seed, static_cast<std::uint64_t>(octave));
  h = splitmix64(h ^ static_cast<std::uint64_t>(ix) * 0x9e3779b97f4a7c15ULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(iy) * 0xc2b2ae3d27d4eb4fULL);
  return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

inline double value_noise(std::uint64_t seed, int octave, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double tx = x - fx, ty = y - fy;
  double acc = 0.0;
  for (int j = -1; j <= 2; ++j) {
    const double wy = catmull_rom(ty - j);
    double row = 0.0;
    for (int i = -1; i <= 2; ++i) row += catmull_rom(tx - i) * lattice(seed, octave, ix + i, iy + j);
    acc += wy * row;
  }
  return acc;
}

}  // namespace detail

inline DemGrid gen_dem(const SynthConfig& cfg) {
  cfg.validate();
  DemGrid g = DemGrid::filled(cfg.size, cfg.size, cfg.cell_size);
  if (cfg.base_amplitude == 0.0) return g;
  for (int r = 0; r < cfg.size; ++r) {
    for (int c = 0; c < cfg.size; ++c) {
      double h = cfg.base_elevation;
      double amp = cfg.base_amplitude;
      double freq = cfg.base_frequency;
      for (int o = 0; o < cfg.octaves; ++o) {
        h += amp * detail::value_noise(cfg.seed, o, c * freq / cfg.size, r * freq / cfg.size);
        amp *= cfg.persistence;
        freq *= 2.0;
      }
      g.at(r, c) = static_cast<float>(h);
    }
  }
  return g;
}

// Lambertian shade in [0,1]. Rows run north to south, columns west to east.
inline std::vector<double> hillshade(const DemGrid& dem, double azimuth_deg, double altitude_deg) {
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double alt = altitude_deg * std::numbers::pi / 180.0;
  const std::array<double, 3> sun{std::sin(az) * std::cos(alt), std::cos(az) * std::cos(alt), std::sin(alt)};
  std::vector<double> shade(dem.heights.size());
  auto h = [&](int r, int c) {
    return static_cast<double>(dem.at(std::clamp(r, 0, dem.rows - 1), std::clamp(c, 0, dem.cols - 1)));
  };
  for (int r = 0; r < dem.rows; ++r) {
    for (int c = 0; c < dem.cols; ++c) {
      const double dzdx = (h(r, c + 1) - h(r, c - 1)) / (2.0 * dem.cell_size);
      const double dzdy = (h(r - 1, c) - h(r + 1, c)) / (2.0 * dem.cell_size);  // northward
      const double norm = std::sqrt(dzdx * dzdx + dzdy * dzdy + 1.0);
      const double lit = (-dzdx * sun[0] - dzdy * sun[1] + sun[2]) / norm;
      shade[static_cast<std::size_t>(r) * dem.cols + c] = std::max(0.0, lit);
    }
  }
  return shade;
}

// Piecewise-linear hypsometric tint: lowland green, brown slopes, grey rock, snow.
inline std::array<double, 3> terrain_color(double t) {
  struct Stop {
    double at;
    std::array<double, 3> rgb;
  };
  static constexpr std::array<Stop, 4> stops{{{0.0, {70, 110, 60}},
                                              {0.5, {140, 120, 80}},
                                              {0.8, {170, 160, 150}},
                                              {1.0, {245, 245, 245}}}};
  t = std::clamp(t, 0.0, 1.0);
  for (std::size_t i = 1; i < stops.size(); ++i) {
    if (t <= stops[i].at) {
      const double u = (t - stops[i - 1].at) / (stops[i].at - stops[i - 1].at);
      std::array<double, 3> out;
      for (int k = 0; k < 3; ++k) out[k] = stops[i - 1].rgb[k] + u * (stops[i].rgb[k] - stops[i - 1].rgb[k]);
      return out;
    }
  }
  return stops.back().rgb;
}

inline AerialPatch gen_aerial(const DemGrid& dem, const SynthConfig& cfg) {
  const auto shade = hillshade(dem, cfg.sun_azimuth, cfg.sun_altitude);
  const auto [lo_it, hi_it] = std::minmax_element(dem.heights.begin(), dem.heights.end());
  const double lo = *lo_it, range = static_cast<double>(*hi_it) - lo;

  constexpr double kAmbient = 0.25;
  std::array<DemGrid, 3> channels;
  for (auto& ch : channels) ch = DemGrid::filled(dem.rows, dem.cols, dem.cell_size);
  for (std::size_t i = 0; i < dem.heights.size(); ++i) {
    const double t = range > 0.0 ? (dem.heights[i] - lo) / range : 0.5;
    const auto tint = terrain_color(t);
    const double light = kAmbient + (1.0 - kAmbient) * shade[i];
    for (int k = 0; k < 3; ++k) channels[k].heights[i] = static_cast<float>(tint[k] * light);
  }

  AerialPatch out = AerialPatch::filled(2 * dem.rows, 2 * dem.cols, {0, 0, 0});
  for (int k = 0; k < 3; ++k) {
    const DemGrid up = bicubic_resize(channels[k], out.rows, out.cols);
    for (int r = 0; r < out.rows; ++r) {
      for (int c = 0; c < out.cols; ++c) {
        out.at(r, c, k) = static_cast<std::uint8_t>(std::clamp(std::lround(up.at(r, c)), 0L, 255L));
      }
    }
  }
  return out;
}

// Per-patch config: same shape parameters, independent seed.
inline SynthConfig patch_config(const SynthConfig& cfg, int index) {
  SynthConfig c = cfg;
  c.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(index) + 1);
  return c;
}

struct SplitCounts {
  int train, val, test;
};

// 60/20/20 with every split non-empty for n >= 3.
inline SplitCounts split_counts(int n) {
  const int val = std::max(1, static_cast<int>(std::lround(0.2 * n)));
  const int test = std::max(1, static_cast<int>(std::lround(0.2 * n)));
  return {n - val - test, val, test};
}

inline DatasetManifest gen_dataset(int n, const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  if (n < 3) throw InvalidArgument("dataset needs n >= 3 patches");
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.seed = cfg.seed;
  manifest.root = out_dir;
  manifest.generator = cfg;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  seeded_shuffle(order, mix_seed(cfg.seed, 0x5eed));
  const auto counts = split_counts(n);
  std::vector<Split> split_of(n);
  for (int i = 0; i < n; ++i) {
    split_of[order[i]] = i < counts.train ? Split::train : (i < counts.train + counts.val ? Split::val : Split::test);
  }

  for (int i = 0; i < n; ++i) {
    const SynthConfig pc = patch_config(cfg, i);
    const DemGrid hr = gen_dem(pc);
    const AerialPatch aerial = gen_aerial(hr, pc);
    const LrIlrPair lr = make_lr_ilr(hr);

    char id[32];
    std::snprintf(id, sizeof(id), "p%05d", i);
    ManifestEntry e{id, split_of[i], std::string(id) + "_hr.demf32", std::string(id) + "_ilr.demf32",
                    std::string(id) + "_lr.demf32", std::string(id) + "_rgb.png"};
    save_dem(hr, out_dir / e.hr);
    save_dem(lr.dem_ilr, out_dir / e.dem_ilr);
    save_dem(lr.lr, out_dir / e.lr);
    save_aerial(aerial, out_dir / e.aerial);
    manifest.entries.push_back(std::move(e));
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace afn
