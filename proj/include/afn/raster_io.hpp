#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afn/error.hpp"
#include "afn/png_io.hpp"
#include "afn/tensor.hpp"

namespace afn {

// Elevation raster in meters. Heights are float32, matching the on-disk format.
struct DemGrid {
  int rows = 0;
  int cols = 0;
  double cell_size = 1.0;
  std::optional<double> nodata_value;
  std::vector<float> heights;

  static DemGrid filled(int rows, int cols, double cell_size, float value = 0.0f) {
    DemGrid g;
    g.rows = rows;
    g.cols = cols;
    g.cell_size = cell_size;
    g.heights.assign(static_cast<std::size_t>(rows) * cols, value);
    return g;
  }

  float& at(int r, int c) { return heights[static_cast<std::size_t>(r) * cols + c]; }
  float at(int r, int c) const { return heights[static_cast<std::size_t>(r) * cols + c]; }

  bool is_nodata(float v) const {
    return nodata_value.has_value() && static_cast<double>(v) == *nodata_value;
  }
  bool has_nodata() const {
    return std::any_of(heights.begin(), heights.end(), [this](float v) { return is_nodata(v); });
  }

  void validate() const {
    if (rows < 1 || cols < 1) throw InvalidArgument("DemGrid dims must be positive");
    if (heights.size() != static_cast<std::size_t>(rows) * cols) {
      throw CorruptionError("DemGrid payload does not match rows x cols");
    }
    if (!(cell_size > 0.0)) throw InvalidArgument("DemGrid cell_size must be positive");
    for (float v : heights) {
      if (!is_nodata(v) && !std::isfinite(v)) throw NumericError("DemGrid contains non-finite height");
    }
  }

  DemGrid crop(int r0, int c0, int nr, int nc) const {
    if (r0 < 0 || c0 < 0 || r0 + nr > rows || c0 + nc > cols) throw ShapeError("crop out of range");
    DemGrid out = filled(nr, nc, cell_size);
    out.nodata_value = nodata_value;
    for (int r = 0; r < nr; ++r) {
      std::copy_n(&heights[static_cast<std::size_t>(r0 + r) * cols + c0], nc, &out.heights[static_cast<std::size_t>(r) * nc]);
    }
    return out;
  }

  bool operator==(const DemGrid&) const = default;
};

// 8-bit RGB raster geo-registered to a DEM at twice its resolution.
struct AerialPatch {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB

  static AerialPatch filled(int rows, int cols, std::array<std::uint8_t, 3> rgb) {
    AerialPatch a;
    a.rows = rows;
    a.cols = cols;
    a.pixels.resize(static_cast<std::size_t>(rows) * cols * 3);
    for (std::size_t i = 0; i < a.pixels.size(); ++i) a.pixels[i] = rgb[i % 3];
    return a;
  }

  std::uint8_t& at(int r, int c, int ch) { return pixels[(static_cast<std::size_t>(r) * cols + c) * 3 + ch]; }
  std::uint8_t at(int r, int c, int ch) const {
    return pixels[(static_cast<std::size_t>(r) * cols + c) * 3 + ch];
  }

  AerialPatch crop(int r0, int c0, int nr, int nc) const {
    if (r0 < 0 || c0 < 0 || r0 + nr > rows || c0 + nc > cols) throw ShapeError("aerial crop out of range");
    AerialPatch out;
    out.rows = nr;
    out.cols = nc;
    out.pixels.resize(static_cast<std::size_t>(nr) * nc * 3);
    for (int r = 0; r < nr; ++r) {
      std::copy_n(&pixels[(static_cast<std::size_t>(r0 + r) * cols + c0) * 3], nc * 3,
                  &out.pixels[static_cast<std::size_t>(r) * nc * 3]);
    }
    return out;
  }

  bool operator==(const AerialPatch&) const = default;
};

struct PatchTriple {
  DemGrid hr;
  DemGrid dem_ilr;
  AerialPatch aerial;
  double norm_offset = 0.0;
  double norm_scale = 1.0;
  int origin_row = 0;  // top-left of the patch inside its source region
  int origin_col = 0;

  void validate() const {
    hr.validate();
    dem_ilr.validate();
    if (hr.rows != dem_ilr.rows || hr.cols != dem_ilr.cols) throw ShapeError("hr and dem_ilr shapes differ");
    if (hr.cell_size != dem_ilr.cell_size) throw ShapeError("hr and dem_ilr cell sizes differ");
    if (aerial.rows != 2 * hr.rows || aerial.cols != 2 * hr.cols) {
      throw ShapeError("aerial must be exactly twice the DEM dims");
    }
    if (aerial.pixels.size() != static_cast<std::size_t>(aerial.rows) * aerial.cols * 3) {
      throw CorruptionError("aerial payload size");
    }
    if (!(norm_scale > 0.0)) throw InvalidArgument("norm_scale must be positive");
  }
};

// ---------------------------------------------------------------------------
// .demf32 and ASCII grid I/O

namespace detail {

template <typename V>
void put_le(std::string& buf, V v) {
  auto bytes = std::bit_cast<std::array<char, sizeof(V)>>(v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  buf.append(bytes.data(), bytes.size());
}

template <typename V>
V get_le(const char* p) {
  std::array<char, sizeof(V)> bytes;
  std::memcpy(bytes.data(), p, sizeof(V));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<V>(bytes);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace detail

inline constexpr std::uint32_t kDemf32Version = 1;
inline constexpr std::size_t kDemf32HeaderBytes = 32;

inline std::string encode_demf32(const DemGrid& grid) {
  grid.validate();
  std::string buf;
  buf.reserve(kDemf32HeaderBytes + grid.heights.size() * 4);
  buf.append("DEMF", 4);
  detail::put_le<std::uint32_t>(buf, kDemf32Version);
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(grid.rows));
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(grid.cols));
  detail::put_le<double>(buf, grid.cell_size);
  detail::put_le<double>(buf, grid.nodata_value.value_or(std::numeric_limits<double>::quiet_NaN()));
  for (float h : grid.heights) detail::put_le<float>(buf, h);
  return buf;
}

inline DemGrid decode_demf32(const std::string& bytes) {
  if (bytes.size() < kDemf32HeaderBytes || bytes.compare(0, 4, "DEMF") != 0) {
    throw FormatError("missing DEMF header");
  }
  const char* p = bytes.data();
  if (detail::get_le<std::uint32_t>(p + 4) != kDemf32Version) throw FormatError("unsupported demf32 version");
  DemGrid g;
  g.rows = static_cast<int>(detail::get_le<std::uint32_t>(p + 8));
  g.cols = static_cast<int>(detail::get_le<std::uint32_t>(p + 12));
  g.cell_size = detail::get_le<double>(p + 16);
  const double nodata = detail::get_le<double>(p + 24);
  if (!std::isnan(nodata)) g.nodata_value = nodata;
  if (g.rows < 1 || g.cols < 1 || !(g.cell_size > 0.0)) throw FormatError("invalid demf32 header fields");
  const std::size_t expected = static_cast<std::size_t>(g.rows) * g.cols;
  if (bytes.size() - kDemf32HeaderBytes != expected * 4) {
    throw CorruptionError("header declares " + std::to_string(g.rows) + "x" + std::to_string(g.cols) +
                          " but payload holds " + std::to_string((bytes.size() - kDemf32HeaderBytes) / 4) +
                          " values");
  }
  g.heights.resize(expected);
  for (std::size_t i = 0; i < expected; ++i) g.heights[i] = detail::get_le<float>(p + kDemf32HeaderBytes + 4 * i);
  return g;
}

// ESRI ASCII grid: keyword header lines followed by nrows x ncols values.
inline DemGrid parse_ascii_grid(const std::string& text) {
  std::istringstream in(text);
  std::map<std::string, double> header;
  std::string key;
  while (in >> key) {
    const std::string k = detail::lower(key);
    if (!std::isalpha(static_cast<unsigned char>(k[0]))) {
      in.seekg(-static_cast<std::streamoff>(key.size()), std::ios::cur);
      break;
    }
    double v;
    if (!(in >> v)) throw FormatError("ASCII grid header value missing for " + key);
    header[k] = v;
  }
  if (!header.count("ncols") || !header.count("nrows") || !header.count("cellsize")) {
    throw FormatError("ASCII grid header requires ncols, nrows, cellsize");
  }
  DemGrid g;
  g.cols = static_cast<int>(header["ncols"]);
  g.rows = static_cast<int>(header["nrows"]);
  g.cell_size = header["cellsize"];
  if (header.count("nodata_value")) g.nodata_value = header["nodata_value"];
  if (g.rows < 1 || g.cols < 1 || !(g.cell_size > 0.0)) throw FormatError("invalid ASCII grid header");
  const std::size_t expected = static_cast<std::size_t>(g.rows) * g.cols;
  g.heights.reserve(expected);
  double v;
  while (in >> v) g.heights.push_back(static_cast<float>(v));
  if (!in.eof()) throw FormatError("non-numeric token in ASCII grid payload");
  if (g.heights.size() != expected) {
    throw CorruptionError("ASCII grid declares " + std::to_string(expected) + " values, found " +
                          std::to_string(g.heights.size()));
  }
  return g;
}

inline DemGrid load_dem(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  if (bytes.size() >= 4 && bytes.compare(0, 4, "DEMF") == 0) return decode_demf32(bytes);
  return parse_ascii_grid(bytes);
}

inline void save_dem(const DemGrid& grid, const std::filesystem::path& path) {
  detail::write_file(path, encode_demf32(grid));
}

inline AerialPatch load_aerial(const std::filesystem::path& path) {
  auto img = png::read_rgb(path.string());
  return AerialPatch{img.rows, img.cols, std::move(img.pixels)};
}

inline void save_aerial(const AerialPatch& a, const std::filesystem::path& path) {
  png::write_rgb(path.string(), png::Rgb8{a.rows, a.cols, a.pixels});
}

// ---------------------------------------------------------------------------
// Bicubic resampling (Catmull-Rom, a = -0.5), separable, edge-replicated.

inline double catmull_rom(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace detail {

struct AxisTaps {
  std::vector<int> first;                 // first source index per output sample
  std::vector<std::vector<double>> weights;  // normalized, applied to clamped indices first..first+n-1
};

// Pixel-center mapping; when shrinking, the kernel is stretched by 1/scale so
// it low-pass filters before decimation.
inline AxisTaps axis_taps(int in, int out) {
  AxisTaps taps;
  taps.first.resize(out);
  taps.weights.resize(out);
  const double scale = static_cast<double>(out) / in;
  const double stretch = scale < 1.0 ? 1.0 / scale : 1.0;
  const double support = 2.0 * stretch;
  for (int d = 0; d < out; ++d) {
    const double src = (d + 0.5) / scale - 0.5;
    const int lo = static_cast<int>(std::floor(src - support)) + 1;
    const int hi = static_cast<int>(std::ceil(src + support)) - 1;
    std::vector<double> w;
    double sum = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const double v = catmull_rom((j - src) / stretch);
      w.push_back(v);
      sum += v;
    }
    for (double& v : w) v /= sum;
    taps.first[d] = lo;
    taps.weights[d] = std::move(w);
  }
  return taps;
}

}  // namespace detail

// Resizes to exact output dims. Cell size is scaled by the column ratio.
inline DemGrid bicubic_resize(const DemGrid& grid, int out_rows, int out_cols) {
  if (out_rows < 1 || out_cols < 1) throw InvalidArgument("resample output dimension is zero");
  if (grid.rows < 1 || grid.cols < 1) throw InvalidArgument("resample input is empty");
  const auto rt = detail::axis_taps(grid.rows, out_rows);
  const auto ct = detail::axis_taps(grid.cols, out_cols);

  // Columns first into a double buffer, then rows.
  std::vector<double> tmp(static_cast<std::size_t>(grid.rows) * out_cols);
  for (int r = 0; r < grid.rows; ++r) {
    const float* src = &grid.heights[static_cast<std::size_t>(r) * grid.cols];
    for (int c = 0; c < out_cols; ++c) {
      double acc = 0.0;
      const auto& w = ct.weights[c];
      for (std::size_t k = 0; k < w.size(); ++k) {
        acc += w[k] * src[std::clamp(ct.first[c] + static_cast<int>(k), 0, grid.cols - 1)];
      }
      tmp[static_cast<std::size_t>(r) * out_cols + c] = acc;
    }
  }
  DemGrid out = DemGrid::filled(out_rows, out_cols, grid.cell_size * grid.cols / out_cols);
  for (int r = 0; r < out_rows; ++r) {
    const auto& w = rt.weights[r];
    for (int c = 0; c < out_cols; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) {
        const int sr = std::clamp(rt.first[r] + static_cast<int>(k), 0, grid.rows - 1);
        acc += w[k] * tmp[static_cast<std::size_t>(sr) * out_cols + c];
      }
      out.at(r, c) = static_cast<float>(acc);
    }
  }
  return out;
}

inline DemGrid bicubic_resample(const DemGrid& grid, double scale) {
  if (!(scale > 0.0)) throw InvalidArgument("resample scale must be positive");
  const int rows = static_cast<int>(std::lround(grid.rows * scale));
  const int cols = static_cast<int>(std::lround(grid.cols * scale));
  if (rows < 1 || cols < 1) throw InvalidArgument("scale " + std::to_string(scale) + " yields an empty grid");
  DemGrid out = bicubic_resize(grid, rows, cols);
  out.cell_size = grid.cell_size / scale;
  return out;
}

struct LrIlrPair {
  DemGrid lr;
  DemGrid dem_ilr;
};

inline constexpr double kLowResCellSize = 15.0;

// HR -> LR at lr_cell_size (default 15 m) -> DEM_ILR back on the HR grid.
inline LrIlrPair make_lr_ilr(const DemGrid& hr, double lr_cell_size = kLowResCellSize) {
  if (hr.rows < 8 || hr.cols < 8) throw SizeError("HR grid must be at least 8x8");
  LrIlrPair out;
  out.lr = bicubic_resample(hr, hr.cell_size / lr_cell_size);
  out.dem_ilr = bicubic_resize(out.lr, hr.rows, hr.cols);
  out.dem_ilr.cell_size = hr.cell_size;
  return out;
}

// ---------------------------------------------------------------------------
// Network-facing normalization

// Channel statistics of the ImageNet-pretrained RGB branch.
inline constexpr std::array<double, 3> kRgbMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kRgbStd{0.229, 0.224, 0.225};
inline constexpr double kDefaultNormScale = 100.0;

template <typename T>
struct NormalizedTriple {
  Tensor<T> dem_ilr;  // 1 x H x W
  Tensor<T> hr;       // 1 x H x W
  Tensor<T> aerial;   // 3 x 2H x 2W
  double norm_offset = 0.0;
  double norm_scale = 1.0;
  double cell_size = 1.0;
};

template <typename T>
Tensor<T> normalize_heights(const DemGrid& g, double offset, double scale) {
  Tensor<T> t(1, g.rows, g.cols);
  for (std::size_t i = 0; i < g.heights.size(); ++i) {
    t[i] = static_cast<T>((static_cast<double>(g.heights[i]) - offset) / scale);
  }
  return t;
}

template <typename T>
DemGrid denormalize_heights(const Tensor<T>& t, double offset, double scale, double cell_size) {
  DemGrid g = DemGrid::filled(t.rows(), t.cols(), cell_size);
  for (std::size_t i = 0; i < g.heights.size(); ++i) {
    g.heights[i] = static_cast<float>(static_cast<double>(t[i]) * scale + offset);
  }
  return g;
}

template <typename T>
Tensor<T> normalize_aerial(const AerialPatch& a) {
  Tensor<T> t(3, a.rows, a.cols);
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < a.rows; ++r) {
      for (int c = 0; c < a.cols; ++c) {
        t(ch, r, c) = static_cast<T>((a.at(r, c, ch) / 255.0 - kRgbMean[ch]) / kRgbStd[ch]);
      }
    }
  }
  return t;
}

template <typename T>
AerialPatch denormalize_aerial(const Tensor<T>& t) {
  AerialPatch a = AerialPatch::filled(t.rows(), t.cols(), {0, 0, 0});
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < t.rows(); ++r) {
      for (int c = 0; c < t.cols(); ++c) {
        const double v = (static_cast<double>(t(ch, r, c)) * kRgbStd[ch] + kRgbMean[ch]) * 255.0;
        a.at(r, c, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return a;
}

inline double mean_height(const DemGrid& g) {
  double s = 0.0;
  for (float v : g.heights) s += v;
  return s / static_cast<double>(g.heights.size());
}

template <typename T>
NormalizedTriple<T> normalize_triple(const PatchTriple& t, double norm_scale = kDefaultNormScale) {
  if (!(norm_scale > 0.0)) throw InvalidArgument("norm_scale must be positive");
  NormalizedTriple<T> n;
  n.norm_offset = mean_height(t.dem_ilr);
  n.norm_scale = norm_scale;
  n.cell_size = t.hr.cell_size;
  n.dem_ilr = normalize_heights<T>(t.dem_ilr, n.norm_offset, norm_scale);
  n.hr = normalize_heights<T>(t.hr, n.norm_offset, norm_scale);
  n.aerial = normalize_aerial<T>(t.aerial);
  return n;
}

template <typename T>
PatchTriple denormalize(const NormalizedTriple<T>& n) {
  PatchTriple t;
  t.hr = denormalize_heights(n.hr, n.norm_offset, n.norm_scale, n.cell_size);
  t.dem_ilr = denormalize_heights(n.dem_ilr, n.norm_offset, n.norm_scale, n.cell_size);
  t.aerial = denormalize_aerial(n.aerial);
  t.norm_offset = n.norm_offset;
  t.norm_scale = n.norm_scale;
  return t;
}

// ---------------------------------------------------------------------------
// Patch extraction

// Origins at 0, stride, 2*stride, ...; the last origin is moved flush to the
// far border so the union of windows covers [0, extent).
inline std::vector<int> tile_origins(int extent, int window, int stride) {
  if (stride <= 0) throw InvalidArgument("stride must be positive");
  if (window < 1 || extent < window) throw SizeError("region smaller than window");
  std::vector<int> origins;
  for (int a = 0;; a += stride) {
    if (a + window >= extent) {
      origins.push_back(extent - window);
      break;
    }
    origins.push_back(a);
  }
  origins.erase(std::unique(origins.begin(), origins.end()), origins.end());
  return origins;
}

// Patches containing nodata are skipped.
inline std::vector<PatchTriple> extract_patches(const DemGrid& region, const AerialPatch& aerial, int size,
                                                int stride, double lr_cell_size = kLowResCellSize) {
  if (stride <= 0) throw InvalidArgument("stride must be positive");
  if (aerial.rows != 2 * region.rows || aerial.cols != 2 * region.cols) {
    throw ShapeError("aerial region must be exactly twice the DEM region");
  }
  std::vector<PatchTriple> out;
  for (int r0 : tile_origins(region.rows, size, stride)) {
    for (int c0 : tile_origins(region.cols, size, stride)) {
      PatchTriple t;
      t.hr = region.crop(r0, c0, size, size);
      if (t.hr.has_nodata()) continue;
      t.hr.nodata_value.reset();
      t.dem_ilr = make_lr_ilr(t.hr, lr_cell_size).dem_ilr;
      t.aerial = aerial.crop(2 * r0, 2 * c0, 2 * size, 2 * size);
      t.origin_row = r0;
      t.origin_col = c0;
      out.push_back(std::move(t));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset manifest

enum class Split { train, val, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw FormatError("unknown split tag '" + s + "'");
}

struct ManifestEntry {
  std::string id;
  Split split = Split::train;
  std::string hr;       // paths relative to the manifest directory
  std::string dem_ilr;
  std::string lr;
  std::string aerial;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  nlohmann::json generator;  // free-form provenance (e.g. synth config)
  std::filesystem::path root;  // directory holding the manifest; not serialized

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [s](const ManifestEntry& e) { return e.split == s; }));
  }

  std::vector<const ManifestEntry*> split(Split s) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries) {
      if (e.split == s) out.push_back(&e);
    }
    return out;
  }

  void validate() const {
    std::set<std::string> ids;
    for (const auto& e : entries) {
      if (!ids.insert(e.id).second) throw FormatError("patch id '" + e.id + "' listed more than once");
    }
  }
};

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["seed"] = m.seed;
  j["counts"] = {{"train", m.count(Split::train)}, {"val", m.count(Split::val)}, {"test", m.count(Split::test)}};
  j["generator"] = m.generator;
  auto& arr = j["entries"] = nlohmann::json::array();
  for (const auto& e : m.entries) {
    arr.push_back({{"id", e.id},
                   {"split", to_string(e.split)},
                   {"hr", e.hr},
                   {"dem_ilr", e.dem_ilr},
                   {"lr", e.lr},
                   {"aerial", e.aerial}});
  }
  return j;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  m.validate();
  detail::write_file(path, to_json(m).dump(2) + "\n");
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.root = path.parent_path();
  m.seed = j.value("seed", std::uint64_t{0});
  m.generator = j.value("generator", nlohmann::json::object());
  for (const auto& e : j.at("entries")) {
    m.entries.push_back(ManifestEntry{e.at("id").get<std::string>(), parse_split(e.at("split").get<std::string>()),
                                      e.at("hr").get<std::string>(), e.at("dem_ilr").get<std::string>(),
                                      e.value("lr", std::string{}), e.at("aerial").get<std::string>()});
  }
  m.validate();
  return m;
}

inline PatchTriple load_triple(const DatasetManifest& m, const ManifestEntry& e) {
  PatchTriple t;
  t.hr = load_dem(m.root / e.hr);
  t.dem_ilr = load_dem(m.root / e.dem_ilr);
  t.aerial = load_aerial(m.root / e.aerial);
  t.validate();
  return t;
}

}  // namespace afn
