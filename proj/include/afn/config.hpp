#pragma once

// Run configuration shared by every CLI command: one JSON document with
// nested sections. Command-line flags are applied on top of the file, then
// resolve() derives the per-module seeds and default paths.

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "afn/inference.hpp"
#include "afn/model.hpp"
#include "afn/synthetic_terrain.hpp"
#include "afn/training.hpp"

namespace afn {

struct DataConfig {
  std::filesystem::path root;      // default: $AFN_DATA_DIR, else ./data
  std::filesystem::path manifest;  // default: <root>/manifest.json
  int n = 50;
  SynthConfig synth;
};

struct InferConfig {
  int patch_size = kDefaultPatchSize;
  double overlap = kDefaultOverlap;
  std::filesystem::path checkpoint;
  std::filesystem::path hillshade;  // optional PNG render of the output
};

struct EvalConfig {
  std::vector<std::string> methods;  // "bicubic", "name=checkpoint" or a checkpoint path
  std::optional<double> peak_m;
  bool include_baseline = true;
  std::filesystem::path report;  // JSON report; the text table goes next to it
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path out_dir;  // training output, default runs/<variant>
  InferConfig infer;
  EvalConfig eval;

  // Fills derived values. Sub-seeds are keyed by module name so changing one
  // module's consumption of randomness never shifts another's.
  void resolve() {
    if (data.root.empty()) {
      const char* env = std::getenv("AFN_DATA_DIR");
      data.root = env != nullptr && *env != '\0' ? std::filesystem::path(env) : std::filesystem::path("data");
    }
    if (data.manifest.empty()) data.manifest = data.root / "manifest.json";
    data.synth.seed = mix_seed(seed, detail::fnv1a("synthetic_terrain"));
    train.seed = mix_seed(seed, detail::fnv1a("training"));
    if (out_dir.empty()) out_dir = std::filesystem::path("runs") / to_string(model.variant);
    validate();
  }

  void validate() const {
    if (data.n < 3) throw ConfigError("data.n must be >= 3");
    data.synth.validate();
    model.validate();
    train.validate();
    if (infer.patch_size < 8) throw ConfigError("infer.patch_size must be >= 8");
    if (!(infer.overlap >= 0.0 && infer.overlap < 0.5)) throw ConfigError("infer.overlap must lie in [0, 0.5)");
    if (eval.peak_m && !(*eval.peak_m > 0.0)) throw ConfigError("eval.peak_m must be positive");
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["data"] = {{"root", c.data.root.string()},
               {"manifest", c.data.manifest.string()},
               {"n", c.data.n},
               {"synth", c.data.synth}};
  j["model"] = c.model;
  j["train"] = c.train;
  j["train"]["out_dir"] = c.out_dir.string();
  j["infer"] = {{"patch_size", c.infer.patch_size},
                {"overlap", c.infer.overlap},
                {"checkpoint", c.infer.checkpoint.string()},
                {"hillshade", c.infer.hillshade.string()}};
  j["eval"] = {{"methods", c.eval.methods},
               {"peak_m", c.eval.peak_m ? nlohmann::json(*c.eval.peak_m) : nlohmann::json(nullptr)},
               {"include_baseline", c.eval.include_baseline},
               {"report", c.eval.report.string()}};
  return j;
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::string& section, std::set<std::string> known) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + section + (section.empty() ? "" : ".") + key + "'");
  }
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    detail::reject_unknown(j, "", {"seed", "data", "model", "train", "infer", "eval"});
    c.seed = j.value("seed", c.seed);
    if (j.contains("data")) {
      const auto& d = j["data"];
      detail::reject_unknown(d, "data", {"root", "manifest", "n", "synth"});
      c.data.root = d.value("root", std::string{});
      c.data.manifest = d.value("manifest", std::string{});
      c.data.n = d.value("n", c.data.n);
      if (d.contains("synth")) c.data.synth = d["synth"].get<SynthConfig>();
    }
    if (j.contains("model")) {
      detail::reject_unknown(j["model"], "model",
                             {"m", "T", "N", "attention_widths", "variant", "finetune_rgb_branch", "rgb_checkpoint"});
      c.model = j["model"].get<ModelConfig>();
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      detail::reject_unknown(t, "train", {"lr", "lr_decay", "lr_milestones", "batch_size", "epochs", "seed",
                                          "norm_scale", "finetune_rgb", "out_dir"});
      c.train = t.get<TrainConfig>();
      c.out_dir = t.value("out_dir", std::string{});
    }
    if (j.contains("infer")) {
      const auto& i = j["infer"];
      detail::reject_unknown(i, "infer", {"patch_size", "overlap", "checkpoint", "hillshade"});
      c.infer.patch_size = i.value("patch_size", c.infer.patch_size);
      c.infer.overlap = i.value("overlap", c.infer.overlap);
      c.infer.checkpoint = i.value("checkpoint", std::string{});
      c.infer.hillshade = i.value("hillshade", std::string{});
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      detail::reject_unknown(e, "eval", {"methods", "peak_m", "include_baseline", "report"});
      c.eval.methods = e.value("methods", c.eval.methods);
      if (e.contains("peak_m") && !e["peak_m"].is_null()) c.eval.peak_m = e["peak_m"].get<double>();
      c.eval.include_baseline = e.value("include_baseline", c.eval.include_baseline);
      c.eval.report = e.value("report", std::string{});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

// Writes the fully-resolved config into an output directory.
inline void echo_config(const RunConfig& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::write_file(dir / "resolved_config.json", to_json(c).dump(2) + "\n");
}

}  // namespace afn
