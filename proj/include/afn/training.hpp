#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afn/checkpoint.hpp"
#include "afn/evaluation.hpp"
#include "afn/model.hpp"
#include "afn/raster_io.hpp"

namespace afn {

struct TrainConfig {
  double lr = 1e-4;
  double lr_decay = 0.5;
  std::vector<int> lr_milestones{45, 60, 70};
  int batch_size = 4;
  int epochs = 75;
  std::uint64_t seed = 0;
  double norm_scale = kDefaultNormScale;
  bool finetune_rgb = true;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0,1]");
    for (std::size_t i = 1; i < lr_milestones.size(); ++i) {
      if (lr_milestones[i] <= lr_milestones[i - 1]) throw ConfigError("lr milestones must be strictly increasing");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(norm_scale > 0.0)) throw ConfigError("norm_scale must be positive");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"lr_decay", c.lr_decay},
       {"lr_milestones", c.lr_milestones},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"seed", c.seed},
       {"norm_scale", c.norm_scale},
       {"finetune_rgb", c.finetune_rgb}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.lr_milestones = j.value("lr_milestones", c.lr_milestones);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.norm_scale = j.value("norm_scale", c.norm_scale);
  c.finetune_rgb = j.value("finetune_rgb", c.finetune_rgb);
}

// lr * decay^(number of milestones <= epoch)
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw InvalidArgument("epoch must be >= 0");
  const auto passed = std::count_if(cfg.lr_milestones.begin(), cfg.lr_milestones.end(),
                                    [epoch](int m) { return m <= epoch; });
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(passed));
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
struct LossAndGrad {
  double value = 0.0;
  std::vector<Tensor<T>> grads;  // dL/dSR^t
};

// Σ_t mean|HR - SR^t|. With smoothing > 0 each |x| becomes sqrt(x² + s²)
// (used only by the finite-difference harness); otherwise the gradient is the
// sign subgradient with sign(0) = 0.
template <typename T>
LossAndGrad<T> multi_step_l1(std::span<const Tensor<T>> sr, const Tensor<T>& hr, double smoothing = 0.0) {
  if (sr.empty()) throw InvalidArgument("loss needs at least one prediction step");
  LossAndGrad<T> out;
  const double inv_n = 1.0 / static_cast<double>(hr.size());
  for (const auto& s : sr) {
    require_same_shape(s.shape(), hr.shape(), "multi_step_l1");
    Tensor<T> g(s.shape());
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double d = static_cast<double>(s[i]) - static_cast<double>(hr[i]);
      if (smoothing > 0.0) {
        const double r = std::sqrt(d * d + smoothing * smoothing);
        acc += r;
        g[i] = static_cast<T>(d / r * inv_n);
      } else {
        acc += std::abs(d);
        g[i] = static_cast<T>((d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_n);
      }
    }
    out.value += acc * inv_n;
    out.grads.push_back(std::move(g));
  }
  return out;
}

template <typename T>
double multi_step_l1_loss(std::span<const Tensor<T>> sr, const Tensor<T>& hr) {
  return multi_step_l1(sr, hr).value;
}

// ---------------------------------------------------------------------------
// Initialization

// Kaiming init everywhere; the RGB branch is then overwritten from the
// pretrained checkpoint when one is configured.
template <typename T>
void init_params(AfnModel<T>& model, std::uint64_t seed) {
  kaiming_init(model, seed);
  const auto& path = model.config().rgb_checkpoint;
  if (path.empty()) return;
  if (!std::filesystem::exists(path)) throw ResourceError("pretrained RGB checkpoint not found: " + path);
  const Checkpoint ck = load_checkpoint(path);
  const std::size_t loaded = restore_params(model, ck, "", &is_rgb_branch);
  if (loaded != 4) throw ResourceError("pretrained RGB checkpoint " + path + " lacks fe.rgb.conv{1,2} weights");
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void step(ParamStore<T>& params, double lr) {
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));
    for (auto& [name, p] : params.items()) {
      if (!p->requires_grad || p->grad.empty()) continue;
      auto& [m, v] = slots(name, p->value.shape());
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = p->grad[i];
        m[i] = static_cast<T>(beta1 * m[i] + (1.0 - beta1) * g);
        v[i] = static_cast<T>(beta2 * v[i] + (1.0 - beta2) * g * g);
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p->value[i] = static_cast<T>(p->value[i] - lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }

  std::int64_t steps() const { return steps_; }

  void save(Checkpoint& ck) const {
    for (const auto& [name, mv] : moments_) {
      ck.tensors["adam.m/" + name] = mv.first.template cast<float>();
      ck.tensors["adam.v/" + name] = mv.second.template cast<float>();
    }
    ck.meta["adam_steps"] = steps_;
  }

  void load(const Checkpoint& ck) {
    moments_.clear();
    steps_ = ck.meta.value("adam_steps", std::int64_t{0});
    for (const auto& [key, t] : ck.tensors) {
      if (!key.starts_with("adam.m/")) continue;
      const std::string name = key.substr(7);
      auto v = ck.tensors.find("adam.v/" + name);
      if (v == ck.tensors.end()) throw CorruptionError("checkpoint lacks second moment for " + name);
      moments_[name] = {t.template cast<T>(), v->second.template cast<T>()};
    }
  }

 private:
  std::pair<Tensor<T>, Tensor<T>>& slots(const std::string& name, const Shape& shape) {
    auto it = moments_.find(name);
    if (it == moments_.end()) it = moments_.emplace(name, std::make_pair(Tensor<T>(shape), Tensor<T>(shape))).first;
    return it->second;
  }

  std::int64_t steps_ = 0;
  std::map<std::string, std::pair<Tensor<T>, Tensor<T>>> moments_;
};

// ---------------------------------------------------------------------------
// Samples and the training step

template <typename T>
struct Sample {
  std::string id;
  NormalizedTriple<T> data;
  DemGrid hr_m;              // ground truth in meters
  DemGrid dem_ilr_m;
  Tensor<T> rgb_features;    // cached rgb_backbone output when the branch is frozen
};

template <typename T>
Sample<T> make_sample(const std::string& id, const PatchTriple& triple, double norm_scale) {
  triple.validate();
  Sample<T> s;
  s.id = id;
  s.data = normalize_triple<T>(triple, norm_scale);
  s.hr_m = triple.hr;
  s.dem_ilr_m = triple.dem_ilr;
  return s;
}

template <typename T>
void cache_rgb_features(const AfnModel<T>& model, Sample<T>& s) {
  Tape<T> tape(false);
  s.rgb_features = model.rgb_backbone(tape, leaf(model.prepare_aerial(s.data.aerial)))->value;
}

template <typename T>
ForwardTrace<T> forward_sample(const AfnModel<T>& model, Tape<T>& tape, const Sample<T>& s) {
  auto dem = leaf(s.data.dem_ilr);
  if (!s.rgb_features.empty() && !model.config().finetune_rgb_branch) {
    return model.forward_from_backbone(tape, dem, leaf(s.rgb_features));
  }
  return model.forward(tape, dem, s.data.aerial);
}

// Runs forward + backward for one sample and accumulates parameter gradients
// scaled by `weight`. Returns the unweighted loss.
template <typename T>
double accumulate_gradients(const AfnModel<T>& model, const Sample<T>& s, double weight, double smoothing = 0.0) {
  Tape<T> tape(true);
  auto tr = forward_sample(model, tape, s);
  std::vector<Tensor<T>> sr;
  for (const auto& v : tr.sr) sr.push_back(v->value);
  auto loss = multi_step_l1<T>(sr, s.data.hr, smoothing);
  for (std::size_t t = 0; t < tr.sr.size(); ++t) {
    if (!tr.sr[t]->requires_grad) continue;
    auto& g = tr.sr[t]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<T>(weight * loss.grads[t][i]);
  }
  tape.backward();
  return loss.value;
}

// SR^T in meters: DEM_ILR plus the rescaled last-step residual.
template <typename T>
DemGrid predict_sample(const AfnModel<T>& model, const Sample<T>& s) {
  Tape<T> tape(false);
  auto tr = forward_sample(model, tape, s);
  const Tensor<T>& res = tr.residual.back()->value;
  DemGrid out = s.dem_ilr_m;
  for (std::size_t i = 0; i < out.heights.size(); ++i) {
    out.heights[i] = static_cast<float>(static_cast<double>(out.heights[i]) + static_cast<double>(res[i]) * s.data.norm_scale);
  }
  return out;
}

struct ValidationMetrics {
  double rmse_m = 0.0;   // pooled over every validation pixel
  double psnr_db = 0.0;  // mean of per-patch PSNR, peak = patch elevation range
};

template <typename T>
ValidationMetrics validate_samples(const AfnModel<T>& model, std::span<const Sample<T>> samples) {
  if (samples.empty()) throw InvalidArgument("validation set is empty");
  double sq = 0.0, psnr_sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    const DemGrid pred = predict_sample(model, s);
    const double e = rmse(pred, s.hr_m);
    sq += e * e * static_cast<double>(s.hr_m.heights.size());
    n += s.hr_m.heights.size();
    const double range = elevation_range(s.hr_m);
    psnr_sum += psnr_from_rmse(e, range > 0.0 ? range : 1.0);
  }
  return {std::sqrt(sq / static_cast<double>(n)), psnr_sum / static_cast<double>(samples.size())};
}

// Model, optimizer and bookkeeping; exactly one parameter set regardless of T.
template <typename T>
struct TrainState {
  AfnModel<T> model;
  Adam<T> optimizer;
  int epoch = -1;  // last completed epoch
  double best_val_rmse = std::numeric_limits<double>::infinity();

  explicit TrainState(ModelConfig cfg) : model(std::move(cfg)) {}

  // One optimizer step on a mini-batch; the loss is averaged over the batch.
  double step(std::span<const Sample<T>* const> batch, double lr) {
    if (batch.empty()) throw InvalidArgument("empty batch");
    model.params().zero_grad();
    double loss = 0.0;
    const double w = 1.0 / static_cast<double>(batch.size());
    for (const Sample<T>* s : batch) loss += w * accumulate_gradients(model, *s, w);
    if (!std::isfinite(loss)) throw NumericError("training loss is not finite");
    for (const auto& [name, p] : model.params().items()) {
      if (!p->grad.empty() && !p->grad.all_finite()) throw NumericError("non-finite gradient in " + name);
    }
    optimizer.step(model.params(), lr);
    return loss;
  }

  Checkpoint checkpoint(const TrainConfig& tc) const {
    Checkpoint ck = make_checkpoint(model, epoch);
    optimizer.save(ck);
    ck.meta["best_val_rmse"] = std::isfinite(best_val_rmse) ? nlohmann::json(best_val_rmse) : nlohmann::json(nullptr);
    ck.meta["train"] = tc;
    return ck;
  }

  static TrainState restore(const Checkpoint& ck) {
    TrainState s(ck.model_config.get<ModelConfig>());
    if (restore_params(s.model, ck) != s.model.params().items().size()) {
      throw CorruptionError("checkpoint is missing model parameters");
    }
    s.optimizer.load(ck);
    s.epoch = ck.epoch;
    const auto& best = ck.meta.value("best_val_rmse", nlohmann::json(nullptr));
    s.best_val_rmse = best.is_number() ? best.get<double>() : std::numeric_limits<double>::infinity();
    return s;
  }
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_rmse_m = 0.0;
  double val_psnr_db = 0.0;
  double gamma = std::numeric_limits<double>::quiet_NaN();
};

inline std::string metrics_csv_header() { return "epoch,lr,train_loss,val_rmse_m,val_psnr_db,gamma\n"; }

inline std::string metrics_csv_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", m.epoch, m.lr, m.train_loss, m.val_rmse_m,
                m.val_psnr_db, m.gamma);
  return buf;
}

template <typename T>
double gamma_value(const AfnModel<T>& model) {
  if (!model.params().contains("afm.gamma")) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(model.param("afm.gamma")->value[0]);
}

template <typename T>
std::vector<Sample<T>> load_split(const DatasetManifest& manifest, Split split, double norm_scale) {
  std::vector<Sample<T>> out;
  for (const ManifestEntry* e : manifest.split(split)) {
    out.push_back(make_sample<T>(e->id, load_triple(manifest, *e), norm_scale));
  }
  return out;
}

struct TrainOptions {
  std::filesystem::path out_dir;       // checkpoints + metrics.csv; empty = keep in memory only
  std::filesystem::path resume_from;   // checkpoint written by a previous run
  std::function<void(const EpochMetrics&)> on_epoch;
};

template <typename T>
struct TrainResult {
  TrainState<T> state;
  std::vector<EpochMetrics> log;
};

// Mini-batch training with a per-epoch seeded shuffle, validation RMSE in
// meters, last/best checkpoints and a CSV metrics log.
template <typename T>
TrainResult<T> train(std::vector<Sample<T>> train_set, std::vector<Sample<T>> val_set, ModelConfig model_cfg,
                     const TrainConfig& tc, const TrainOptions& opts = {}) {
  tc.validate();
  if (train_set.empty()) throw InvalidArgument("training split is empty");
  if (val_set.empty()) throw InvalidArgument("validation split is empty");
  model_cfg.finetune_rgb_branch = tc.finetune_rgb;
  model_cfg.validate();

  TrainResult<T> result{TrainState<T>(model_cfg), {}};
  TrainState<T>& st = result.state;
  if (!opts.resume_from.empty()) {
    st = TrainState<T>::restore(load_checkpoint(opts.resume_from));
    st.model.set_rgb_trainable(tc.finetune_rgb);
  } else {
    init_params(st.model, mix_seed(tc.seed, 0x1417));
  }

  if (!st.model.config().finetune_rgb_branch) {
    for (auto& s : train_set) cache_rgb_features(st.model, s);
    for (auto& s : val_set) cache_rgb_features(st.model, s);
  }

  std::ofstream csv;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    const auto path = opts.out_dir / "metrics.csv";
    const bool append = !opts.resume_from.empty() && std::filesystem::exists(path);
    csv.open(path, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw IoError("cannot write " + path.string());
    if (!append) csv << metrics_csv_header();
  }

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = st.epoch + 1; epoch < tc.epochs; ++epoch) {
    const double lr = lr_at_epoch(tc, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    seeded_shuffle(order, mix_seed(tc.seed, 0xe90c + static_cast<std::uint64_t>(epoch)));

    double loss_sum = 0.0;
    int batches = 0;
    std::vector<const Sample<T>*> batch;
    for (std::size_t i = 0; i < order.size(); i += tc.batch_size) {
      batch.clear();
      for (std::size_t k = i; k < std::min(order.size(), i + tc.batch_size); ++k) batch.push_back(&train_set[order[k]]);
      double loss;
      try {
        loss = st.step(batch, lr);
      } catch (const NumericError& e) {
        throw NumericError("diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches) +
                           ": " + e.what());
      }
      loss_sum += loss;
      ++batches;
    }

    const auto val = validate_samples<T>(st.model, val_set);
    st.epoch = epoch;
    EpochMetrics m{epoch, lr, loss_sum / batches, val.rmse_m, val.psnr_db, gamma_value(st.model)};
    result.log.push_back(m);
    const bool improved = val.rmse_m < st.best_val_rmse;
    if (improved) st.best_val_rmse = val.rmse_m;

    if (!opts.out_dir.empty()) {
      csv << metrics_csv_row(m) << std::flush;
      const Checkpoint ck = st.checkpoint(tc);
      save_checkpoint(ck, opts.out_dir / "last.afnc");
      if (improved) save_checkpoint(ck, opts.out_dir / "best.afnc");
    }
    if (opts.on_epoch) opts.on_epoch(m);
  }
  return result;
}

template <typename T>
TrainResult<T> train(const DatasetManifest& manifest, const ModelConfig& model_cfg, const TrainConfig& tc,
                     const TrainOptions& opts = {}) {
  return train<T>(load_split<T>(manifest, Split::train, tc.norm_scale),
                  load_split<T>(manifest, Split::val, tc.norm_scale), model_cfg, tc, opts);
}

}  // namespace afn
