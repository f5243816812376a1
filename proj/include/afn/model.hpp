#pragma once

// Attentional Feedback Network.
//
//   dem_ilr ──► Conv(4m,3) ► Conv(m,3) ─────────────► F_DEM
//   aerial  ──► Conv(64,3) ► Conv(64,3) ► maxpool2 ► [Conv(m,1)] ─► F_RGB
//
//   for t = 1..T:
//     F_RU    = residual_stack(F_DEM, feedback)        feedback = F_DEM at t=1
//     masks   = sigmoid(attention FCN(F_RU ‖ F_RGB))   split into DEM / RGB halves
//     F_fused = F_RU ⊙ Attn_DEM + γ · F_RGB ⊙ Attn_RGB
//     SR^t    = reconstruct(F_fused) + dem_ilr
//     feedback = F_fused
//
// One parameter set is shared by all T steps.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "afn/autograd.hpp"
#include "afn/error.hpp"
#include "afn/synthetic_terrain.hpp"
#include "afn/tensor.hpp"

namespace afn {

enum class Variant { afn, no_afm, afn_static, afn64, afnd };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::afn: return "afn";
    case Variant::no_afm: return "no-afm";
    case Variant::afn_static: return "afn0";
    case Variant::afn64: return "afn64";
    case Variant::afnd: return "afnd";
  }
  return "?";
}

inline constexpr std::string_view kVariantNames = "afn, no-afm, afn0, afn64, afnd";

inline Variant parse_variant(const std::string& s) {
  if (s == "afn") return Variant::afn;
  if (s == "no-afm" || s == "no_afm") return Variant::no_afm;
  if (s == "afn0" || s == "afn_static") return Variant::afn_static;
  if (s == "afn64") return Variant::afn64;
  if (s == "afnd") return Variant::afnd;
  throw ConfigError("unknown variant '" + s + "' (valid: " + std::string(kVariantNames) + ")");
}

// Width of the pretrained RGB layers.
inline constexpr int kRgbChannels = 64;
// Normalized value fed to the RGB branch by the uniform-prior variant.
inline constexpr double kUniformPriorValue = 0.5;

struct ModelConfig {
  int m = 64;
  int T = 4;
  int N = 16;
  std::optional<std::array<int, 4>> attention_widths;  // default {4m, 4m, 8m, 2m}
  Variant variant = Variant::afn;
  bool finetune_rgb_branch = true;
  std::string rgb_checkpoint;  // optional pretrained RGB-branch weights

  std::array<int, 4> widths() const {
    if (variant == Variant::afn64) return {64, 64, 64, 2 * m};
    return attention_widths.value_or(std::array<int, 4>{4 * m, 4 * m, 8 * m, 2 * m});
  }

  void validate() const {
    if (m < 1) throw ConfigError("m must be >= 1");
    if (T < 1) throw ConfigError("T must be >= 1");
    if (N < 2 || N % 2 != 0) throw ConfigError("N must be a positive even number, got " + std::to_string(N));
    const auto w = widths();
    if (w[3] != 2 * m) throw ConfigError("last attention width must equal 2m");
    for (int x : w) {
      if (x < 1) throw ConfigError("attention widths must be positive");
    }
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"m", c.m},
       {"T", c.T},
       {"N", c.N},
       {"variant", to_string(c.variant)},
       {"finetune_rgb_branch", c.finetune_rgb_branch},
       {"rgb_checkpoint", c.rgb_checkpoint}};
  if (c.attention_widths) j["attention_widths"] = *c.attention_widths;
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.m = j.value("m", c.m);
  c.T = j.value("T", c.T);
  c.N = j.value("N", c.N);
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  c.finetune_rgb_branch = j.value("finetune_rgb_branch", c.finetune_rgb_branch);
  c.rgb_checkpoint = j.value("rgb_checkpoint", c.rgb_checkpoint);
  if (j.contains("attention_widths") && !j.at("attention_widths").is_null()) {
    c.attention_widths = j.at("attention_widths").get<std::array<int, 4>>();
  }
}

// Source units feeding residual unit `unit` (1-based). 0 denotes the
// compressed stack input. Unit j skips into every later unit of opposite
// parity; the direct predecessor is always one of those, so it appears once.
inline std::vector<int> unit_sources(int unit) {
  if (unit == 1) return {0};
  std::vector<int> src;
  for (int j = 1; j < unit; ++j) {
    if ((unit - j) % 2 == 1) src.push_back(j);
  }
  return src;
}

struct LayerSpec {
  std::string name;
  Shape shape;
  enum class Kind { weight, bias, slope, gamma } kind;
};

// Full parameter table for a config; names are stable checkpoint keys.
inline std::vector<LayerSpec> layer_table(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<LayerSpec> t;
  const int m = cfg.m;
  auto conv = [&](const std::string& name, int out, int in, int k) {
    t.push_back({name + ".weight", Shape{out, in, k * k}, LayerSpec::Kind::weight});
    t.push_back({name + ".bias", Shape{out, 1, 1}, LayerSpec::Kind::bias});
  };
  auto act = [&](const std::string& name, int channels) {
    t.push_back({name + ".slope", Shape{channels, 1, 1}, LayerSpec::Kind::slope});
  };

  conv("fe.dem.conv1", 4 * m, 1, 3);
  act("fe.dem.act1", 4 * m);
  conv("fe.dem.conv2", m, 4 * m, 3);
  act("fe.dem.act2", m);

  conv("fe.rgb.conv1", kRgbChannels, 3, 3);
  conv("fe.rgb.conv2", kRgbChannels, kRgbChannels, 3);
  if (m != kRgbChannels) {
    conv("fe.rgb.adapt", m, kRgbChannels, 1);
    act("fe.rgb.adapt_act", m);
  }

  conv("afm.compress", m, 2 * m, 1);
  act("afm.compress_act", m);
  for (int i = 1; i <= cfg.N; ++i) {
    const std::string u = "afm.unit" + std::to_string(i);
    conv(u + ".fuse", m, static_cast<int>(unit_sources(i).size()) * m, 1);
    act(u + ".fuse_act", m);
    conv(u + ".conv", m, m, 3);
    act(u + ".conv_act", m);
  }
  conv("afm.merge", m, (cfg.N / 2) * m, 1);
  act("afm.merge_act", m);

  if (cfg.variant == Variant::no_afm) {
    conv("afm.fuse", m, 2 * m, 1);
    act("afm.fuse_act", m);
  } else {
    const auto w = cfg.widths();
    int in = 2 * m;
    for (int l = 0; l < 4; ++l) {
      conv("afm.attn.conv" + std::to_string(l + 1), w[l], in, 3);
      if (l < 3) act("afm.attn.act" + std::to_string(l + 1), w[l]);
      in = w[l];
    }
    t.push_back({"afm.gamma", Shape{1, 1, 1}, LayerSpec::Kind::gamma});
  }

  conv("rec.conv1", m, m, 3);
  act("rec.act1", m);
  conv("rec.conv2", 1, m, 3);
  return t;
}

inline bool is_rgb_branch(std::string_view name) { return name.starts_with("fe.rgb.conv"); }

// Scalar parameter count; T does not enter because all steps share weights.
inline std::size_t param_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& l : layer_table(cfg)) n += l.shape.size();
  return n;
}

// Owns parameter leaves. Copies are deep, so a copied model never aliases
// the original's weights.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;
  ParamStore(const ParamStore& other) : index_(other.index_) {
    for (const auto& [name, v] : other.items_) {
      auto copy = leaf(v->value, v->requires_grad);
      copy->grad = v->grad;
      items_.emplace_back(name, std::move(copy));
    }
  }
  ParamStore& operator=(const ParamStore& other) {
    if (this != &other) *this = ParamStore(other);
    return *this;
  }

  Var<T> add(const std::string& name, Shape shape) {
    if (index_.count(name)) throw ConfigError("duplicate parameter " + name);
    auto v = leaf(Tensor<T>(shape), true);
    index_[name] = items_.size();
    items_.emplace_back(name, v);
    return v;
  }

  const Var<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("no parameter named " + name);
    return items_[it->second].second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Var<T>>>& items() const { return items_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : items_) n += v->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, v] : items_) v->zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> items_;
  std::map<std::string, std::size_t> index_;
};

// Everything produced by one forward pass, kept as tape variables so the
// caller can seed gradients on any output.
template <typename T>
struct ForwardTrace {
  Var<T> f_dem;
  Var<T> f_rgb;
  std::vector<Var<T>> sr;
  std::vector<Var<T>> residual;
  std::vector<Var<T>> fused;
  std::vector<std::pair<Var<T>, Var<T>>> masks;  // (Attn_DEM, Attn_RGB); empty for no-afm
};

template <typename T>
struct AfnOutput {
  std::vector<Tensor<T>> sr_steps;
  std::vector<Tensor<T>> residual_steps;
  std::optional<std::vector<std::pair<Tensor<T>, Tensor<T>>>> attention_masks;

  const Tensor<T>& final_prediction() const { return sr_steps.back(); }
};

// F_fused = F_RU ⊙ Attn_DEM + γ · (F_RGB ⊙ Attn_RGB)
template <typename T>
Var<T> fuse_features(Tape<T>& tape, const Var<T>& f_ru, const Var<T>& f_rgb, const Var<T>& attn_dem,
                     const Var<T>& attn_rgb, const Var<T>& gamma) {
  require_same_shape(f_ru->value.shape(), f_rgb->value.shape(), "fuse_features");
  return ops::add(tape, ops::mul(tape, f_ru, attn_dem), ops::scale(tape, ops::mul(tape, f_rgb, attn_rgb), gamma));
}

template <typename T>
class AfnModel {
 public:
  explicit AfnModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    for (const auto& l : layer_table(cfg_)) {
      auto v = params_.add(l.name, l.shape);
      if (l.kind == LayerSpec::Kind::slope) v->value.fill(T(0.25));
    }
    set_rgb_trainable(cfg_.finetune_rgb_branch);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const Var<T>& param(const std::string& name) const { return params_.get(name); }

  void set_rgb_trainable(bool on) {
    cfg_.finetune_rgb_branch = on;
    for (auto& [name, v] : params_.items()) {
      if (is_rgb_branch(name)) v->requires_grad = on;
    }
  }

  Var<T> conv(Tape<T>& tape, const std::string& layer, const Var<T>& x) const {
    return ops::conv2d(tape, x, param(layer + ".weight"), param(layer + ".bias"));
  }
  Var<T> conv_prelu(Tape<T>& tape, const std::string& layer, const std::string& act, const Var<T>& x) const {
    return ops::prelu(tape, conv(tape, layer, x), param(act + ".slope"));
  }

  // 1 x H x W -> m x H x W
  Var<T> feature_extract_dem(Tape<T>& tape, const Var<T>& dem_ilr) const {
    const auto& s = dem_ilr->value.shape();
    if (s.channels != 1) throw ShapeError("DEM input must have one channel");
    if (s.rows < 8 || s.cols < 8) throw ShapeError("DEM input must be at least 8x8");
    if (!dem_ilr->value.all_finite()) throw NumericError("non-finite DEM input");
    auto h = conv_prelu(tape, "fe.dem.conv1", "fe.dem.act1", dem_ilr);
    return conv_prelu(tape, "fe.dem.conv2", "fe.dem.act2", h);
  }

  // Input the RGB branch actually sees; the uniform-prior variant discards the image.
  Tensor<T> prepare_aerial(const Tensor<T>& aerial) const {
    if (cfg_.variant != Variant::afnd) return aerial;
    return Tensor<T>(aerial.shape(), T(kUniformPriorValue));
  }

  // 3 x 2H x 2W -> 64 x H x W (the pretrained layers plus their first pooling stage)
  Var<T> rgb_backbone(Tape<T>& tape, const Var<T>& aerial) const {
    if (aerial->value.channels() != 3) throw ShapeError("aerial input must have 3 channels");
    auto h = ops::relu(tape, conv(tape, "fe.rgb.conv1", aerial));
    h = ops::relu(tape, conv(tape, "fe.rgb.conv2", h));
    return ops::maxpool2(tape, h);
  }

  Var<T> rgb_adapt(Tape<T>& tape, const Var<T>& pooled) const {
    if (cfg_.m == kRgbChannels) return pooled;
    return conv_prelu(tape, "fe.rgb.adapt", "fe.rgb.adapt_act", pooled);
  }

  Var<T> feature_extract_rgb(Tape<T>& tape, const Var<T>& aerial) const {
    return rgb_adapt(tape, rgb_backbone(tape, aerial));
  }

  Var<T> residual_stack(Tape<T>& tape, const Var<T>& f_dem, const Var<T>& feedback) const {
    require_same_shape(f_dem->value.shape(), feedback->value.shape(), "residual_stack");
    std::vector<Var<T>> outputs{conv_prelu(tape, "afm.compress", "afm.compress_act",
                                           ops::concat<T>(tape, {f_dem, feedback}))};
    for (int i = 1; i <= cfg_.N; ++i) {
      std::vector<Var<T>> in;
      for (int j : unit_sources(i)) in.push_back(outputs[j]);
      const std::string u = "afm.unit" + std::to_string(i);
      auto x = in.size() == 1 ? in.front() : ops::concat(tape, in);
      x = conv_prelu(tape, u + ".fuse", u + ".fuse_act", x);
      outputs.push_back(conv_prelu(tape, u + ".conv", u + ".conv_act", x));
    }
    std::vector<Var<T>> even;
    for (int i = 2; i <= cfg_.N; i += 2) even.push_back(outputs[i]);
    auto merged = even.size() == 1 ? even.front() : ops::concat(tape, even);
    return conv_prelu(tape, "afm.merge", "afm.merge_act", merged);
  }

  std::pair<Var<T>, Var<T>> attention(Tape<T>& tape, const Var<T>& f_ru, const Var<T>& f_rgb) const {
    require_same_shape(f_ru->value.shape(), f_rgb->value.shape(), "attention");
    auto h = ops::concat<T>(tape, {f_ru, f_rgb});
    for (int l = 1; l <= 3; ++l) {
      h = conv_prelu(tape, "afm.attn.conv" + std::to_string(l), "afm.attn.act" + std::to_string(l), h);
    }
    auto masks = ops::sigmoid(tape, conv(tape, "afm.attn.conv4", h));
    return {ops::slice_channels(tape, masks, 0, cfg_.m), ops::slice_channels(tape, masks, cfg_.m, cfg_.m)};
  }

  Var<T> fuse(Tape<T>& tape, const Var<T>& f_ru, const Var<T>& f_rgb, const Var<T>& attn_dem,
              const Var<T>& attn_rgb) const {
    return fuse_features(tape, f_ru, f_rgb, attn_dem, attn_rgb, param("afm.gamma"));
  }

  // Ablation without the attention module.
  Var<T> concat_fuse(Tape<T>& tape, const Var<T>& f_ru, const Var<T>& f_rgb) const {
    return conv_prelu(tape, "afm.fuse", "afm.fuse_act", ops::concat<T>(tape, {f_ru, f_rgb}));
  }

  Var<T> reconstruct(Tape<T>& tape, const Var<T>& f_fused) const {
    if (f_fused->value.channels() != cfg_.m) throw ShapeError("reconstruct expects m channels");
    return conv(tape, "rec.conv2", conv_prelu(tape, "rec.conv1", "rec.act1", f_fused));
  }

  ForwardTrace<T> forward(Tape<T>& tape, const Var<T>& dem_ilr, const Tensor<T>& aerial) const {
    const auto& d = dem_ilr->value.shape();
    if (aerial.rows() != 2 * d.rows || aerial.cols() != 2 * d.cols) {
      throw ShapeError("aerial dims must be exactly double the DEM dims");
    }
    auto pooled = rgb_backbone(tape, leaf(prepare_aerial(aerial)));
    return forward_from_backbone(tape, dem_ilr, pooled);
  }

  // Same as forward() but starting from precomputed rgb_backbone() output,
  // which lets a frozen RGB branch be evaluated once per sample.
  ForwardTrace<T> forward_from_backbone(Tape<T>& tape, const Var<T>& dem_ilr, const Var<T>& pooled) const {
    ForwardTrace<T> tr;
    tr.f_dem = feature_extract_dem(tape, dem_ilr);
    tr.f_rgb = rgb_adapt(tape, pooled);
    require_same_shape(tr.f_dem->value.shape(), tr.f_rgb->value.shape(), "F_DEM vs F_RGB");

    std::optional<std::pair<Var<T>, Var<T>>> static_masks;
    if (cfg_.variant == Variant::afn_static) static_masks = attention(tape, tr.f_dem, tr.f_rgb);

    Var<T> feedback = tr.f_dem;
    for (int t = 0; t < cfg_.T; ++t) {
      auto f_ru = residual_stack(tape, tr.f_dem, feedback);
      Var<T> fused;
      if (cfg_.variant == Variant::no_afm) {
        fused = concat_fuse(tape, f_ru, tr.f_rgb);
      } else {
        auto masks = static_masks ? *static_masks : attention(tape, f_ru, tr.f_rgb);
        fused = fuse(tape, f_ru, tr.f_rgb, masks.first, masks.second);
        tr.masks.push_back(masks);
      }
      auto res = reconstruct(tape, fused);
      tr.residual.push_back(res);
      tr.sr.push_back(ops::add(tape, res, dem_ilr));
      tr.fused.push_back(fused);
      feedback = fused;
    }
    return tr;
  }

  AfnOutput<T> predict(const Tensor<T>& dem_ilr, const Tensor<T>& aerial, bool keep_masks = false) const {
    Tape<T> tape(false);
    auto tr = forward(tape, leaf(dem_ilr), aerial);
    return to_output(tr, keep_masks);
  }

  static AfnOutput<T> to_output(const ForwardTrace<T>& tr, bool keep_masks) {
    AfnOutput<T> out;
    for (const auto& v : tr.sr) out.sr_steps.push_back(v->value);
    for (const auto& v : tr.residual) out.residual_steps.push_back(v->value);
    if (keep_masks) {
      out.attention_masks.emplace();
      for (const auto& [a, b] : tr.masks) out.attention_masks->emplace_back(a->value, b->value);
    }
    return out;
  }

 private:
  ModelConfig cfg_;
  ParamStore<T> params_;
};

// ---------------------------------------------------------------------------
// Initialization

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

// Box-Muller over splitmix64, so initial weights do not depend on the
// standard library's distribution implementation.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : state_(seed) {}
  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  double uniform() {
    state_ = splitmix64(state_);
    return static_cast<double>(state_ >> 11) * (1.0 / 9007199254740992.0);
  }
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace detail

// Kaiming (fan-in) normal weights, zero biases, PReLU slopes 0.25, γ = 0.
// Each tensor draws from its own stream keyed by (seed, name).
template <typename T>
void kaiming_init(AfnModel<T>& model, std::uint64_t seed, bool include_rgb = true) {
  for (const auto& l : layer_table(model.config())) {
    if (!include_rgb && is_rgb_branch(l.name)) continue;
    Tensor<T>& v = model.param(l.name)->value;
    switch (l.kind) {
      case LayerSpec::Kind::weight: {
        const double fan_in = static_cast<double>(l.shape.rows) * l.shape.cols;
        const double std = std::sqrt(2.0 / fan_in);
        detail::NormalStream rng(mix_seed(seed, detail::fnv1a(l.name)));
        for (T& x : v.values()) x = static_cast<T>(std * rng.next());
        break;
      }
      case LayerSpec::Kind::bias: v.fill(T(0)); break;
      case LayerSpec::Kind::slope: v.fill(T(0.25)); break;
      case LayerSpec::Kind::gamma: v.fill(T(0)); break;
    }
  }
}

}  // namespace afn
