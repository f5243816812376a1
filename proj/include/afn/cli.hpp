#pragma once

// The `afn` command line: synth, train, infer, eval, verify.
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "afn/compare.hpp"
#include "afn/config.hpp"
#include "afn/inference.hpp"
#include "afn/synthetic_terrain.hpp"
#include "afn/training.hpp"
#include "afn/verify.hpp"

namespace afn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// Flags shared by the commands that read a RunConfig.
struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
};

inline RunConfig load_config(const CommonFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.seed) c.seed = *f.seed;
  return c;
}

struct SynthFlags {
  CommonFlags common;
  std::optional<int> n, size;
  std::string out;
};

inline int cmd_synth(const SynthFlags& f, Streams io) {
  RunConfig c = load_config(f.common);
  if (f.n) c.data.n = *f.n;
  if (f.size) c.data.synth.size = *f.size;
  if (!f.out.empty()) c.data.root = f.out;
  if (c.data.n < 3) throw InvalidArgument("--n must be >= 3, got " + std::to_string(c.data.n));
  c.resolve();
  const DatasetManifest m = gen_dataset(c.data.n, c.data.synth, c.data.root);
  echo_config(c, c.data.root);
  io.out << "wrote " << m.entries.size() << " triples to " << c.data.root.string() << " (train "
         << m.count(Split::train) << ", val " << m.count(Split::val) << ", test " << m.count(Split::test) << ")\n";
  return kExitOk;
}

struct TrainFlags {
  CommonFlags common;
  std::string variant, resume, manifest, out;
  std::optional<int> epochs, batch_size, m, N, T;
  std::optional<double> lr;
  std::optional<bool> finetune_rgb;
};

inline int cmd_train(const TrainFlags& f, Streams io) {
  RunConfig c = load_config(f.common);
  if (!f.variant.empty()) c.model.variant = parse_variant(f.variant);
  if (!f.manifest.empty()) c.data.manifest = f.manifest;
  if (!f.out.empty()) c.out_dir = f.out;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.batch_size) c.train.batch_size = *f.batch_size;
  if (f.lr) c.train.lr = *f.lr;
  if (f.m) c.model.m = *f.m;
  if (f.N) c.model.N = *f.N;
  if (f.T) c.model.T = *f.T;
  if (f.finetune_rgb) c.train.finetune_rgb = *f.finetune_rgb;
  c.resolve();

  const DatasetManifest manifest = load_manifest(c.data.manifest);
  echo_config(c, c.out_dir);
  TrainOptions opts;
  opts.out_dir = c.out_dir;
  opts.resume_from = f.resume;
  opts.on_epoch = [&io](const EpochMetrics& m) {
    io.out << "epoch " << m.epoch << "  lr " << m.lr << "  loss " << m.train_loss << "  val_rmse_m "
           << format_number(m.val_rmse_m) << "  gamma " << m.gamma << "\n"
           << std::flush;
  };
  const auto result = train<float>(manifest, c.model, c.train, opts);
  io.out << "best val RMSE " << format_number(result.state.best_val_rmse) << " m; checkpoints in "
         << c.out_dir.string() << "\n";
  return kExitOk;
}

struct InferFlags {
  CommonFlags common;
  std::string checkpoint, dem, aerial, out, hillshade;
  std::optional<double> overlap;
  std::optional<int> patch_size;
};

inline int cmd_infer(const InferFlags& f, Streams io) {
  RunConfig c = load_config(f.common);
  if (!f.checkpoint.empty()) c.infer.checkpoint = f.checkpoint;
  if (!f.hillshade.empty()) c.infer.hillshade = f.hillshade;
  if (f.overlap) c.infer.overlap = *f.overlap;
  if (f.patch_size) c.infer.patch_size = *f.patch_size;
  c.resolve();
  if (c.infer.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (f.dem.empty() || f.aerial.empty() || f.out.empty()) throw ConfigError("--dem, --aerial and --out are required");

  const AfnModel<float> model = load_model<float>(c.infer.checkpoint);
  const DemGrid dem = load_dem(f.dem);
  const AerialPatch aerial = load_aerial(f.aerial);
  const TilePlan plan = plan_tiles(dem.rows, dem.cols, c.infer.patch_size, c.infer.overlap);
  const DemGrid sr = predict_region(model, dem, aerial, plan, c.train.norm_scale);
  save_dem(sr, f.out);
  if (!c.infer.hillshade.empty()) save_hillshade_png(sr, c.infer.hillshade.string());
  io.out << "predicted " << sr.rows << "x" << sr.cols << " from " << plan.tile_count() << " tiles -> " << f.out << "\n";
  return kExitOk;
}

struct EvalFlags {
  CommonFlags common;
  std::string manifest, report;
  std::vector<std::string> methods;
  std::optional<double> peak;
  bool no_baseline = false;
};

inline int cmd_eval(const EvalFlags& f, Streams io) {
  RunConfig c = load_config(f.common);
  if (!f.manifest.empty()) c.data.manifest = f.manifest;
  if (!f.methods.empty()) c.eval.methods = f.methods;
  if (!f.report.empty()) c.eval.report = f.report;
  if (f.peak) c.eval.peak_m = *f.peak;
  if (f.no_baseline) c.eval.include_baseline = false;
  c.resolve();

  std::vector<MethodSpec> methods;
  for (const auto& s : c.eval.methods) methods.push_back(parse_method(s));
  if (methods.empty() && !c.eval.include_baseline) throw ConfigError("no methods to evaluate");

  CompareOptions opt;
  opt.patch_size = c.infer.patch_size;
  opt.overlap = c.infer.overlap;
  opt.norm_scale = c.train.norm_scale;
  opt.peak_m = c.eval.peak_m;
  opt.include_baseline = c.eval.include_baseline;
  const CompareResult res = compare_methods(load_manifest(c.data.manifest), methods, opt);

  const std::string table = format_table(res.report);
  io.out << table;
  for (const auto& [region, method] : res.missing) io.err << "missing: " << method << " on " << region << "\n";
  if (!c.eval.report.empty()) {
    nlohmann::json j{{"rows", to_json(res.report)}, {"missing", nlohmann::json::array()}};
    for (const auto& [region, method] : res.missing) j["missing"].push_back({{"region", region}, {"method", method}});
    const auto report = std::filesystem::path(c.eval.report);
    if (report.has_parent_path()) std::filesystem::create_directories(report.parent_path());
    detail::write_file(report, j.dump(2) + "\n");
    auto txt = report;
    txt.replace_extension(".txt");
    detail::write_file(txt, table);
  }
  return kExitOk;
}

inline int cmd_verify(bool json, Streams io) {
  const auto results = verify::run_checks();
  bool ok = true;
  for (const auto& r : results) ok = ok && r.passed;
  if (json) {
    io.out << verify::to_json(results).dump(2) << "\n";
  } else {
    for (const auto& r : results) {
      char line[96];
      std::snprintf(line, sizeof(line), "%-4s %-16s %7.2fs  ", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds);
      io.out << line << r.detail << "\n";
    }
  }
  for (const auto& r : results) {
    if (!r.passed) io.err << "check failed: " << r.name << "\n";
  }
  return ok ? kExitOk : kExitRuntime;
}

inline int exit_code_for(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e)) return kExitUsage;
  return kExitRuntime;
}

inline int run(int argc, const char* const* argv, Streams io = {std::cout, std::cerr}) {
  CLI::App app{"Attentional feedback network for DEM super-resolution"};
  app.require_subcommand(1);
  auto common = [](CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config, "JSON run config");
    sub->add_option("--seed", f.seed, "Master seed");
  };

  SynthFlags sf;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  common(synth, sf.common);
  synth->add_option("--n", sf.n, "Number of triples (>= 3)");
  synth->add_option("--size", sf.size, "HR patch size in pixels");
  synth->add_option("--out", sf.out, "Output directory");

  TrainFlags tf;
  auto* trainc = app.add_subcommand("train", "Train a model");
  common(trainc, tf.common);
  trainc->add_option("--variant", tf.variant, "afn, no-afm, afn0, afn64 or afnd");
  trainc->add_option("--resume", tf.resume, "Checkpoint to resume from");
  trainc->add_option("--manifest", tf.manifest, "Dataset manifest");
  trainc->add_option("--out", tf.out, "Output directory");
  trainc->add_option("--epochs", tf.epochs);
  trainc->add_option("--batch-size", tf.batch_size);
  trainc->add_option("--lr", tf.lr);
  trainc->add_option("--m", tf.m, "Base channels");
  trainc->add_option("--N", tf.N, "Residual units");
  trainc->add_option("--T", tf.T, "Feedback steps");
  trainc->add_option("--finetune-rgb", tf.finetune_rgb, "Train the pretrained RGB layers (true/false)");

  InferFlags inf;
  auto* infer = app.add_subcommand("infer", "Super-resolve a region");
  common(infer, inf.common);
  infer->add_option("--checkpoint", inf.checkpoint);
  infer->add_option("--dem", inf.dem, "Upsampled DEM_ILR raster (.demf32 or ESRI ASCII)");
  infer->add_option("--aerial", inf.aerial, "Aerial PNG at twice the DEM resolution");
  infer->add_option("--out", inf.out, "Output .demf32");
  infer->add_option("--overlap", inf.overlap, "Tile overlap fraction in [0, 0.5), default 0.25");
  infer->add_option("--patch-size", inf.patch_size);
  infer->add_option("--hillshade", inf.hillshade, "Optional PNG hillshade of the output");

  EvalFlags ef;
  auto* eval = app.add_subcommand("eval", "Compare methods on the test split");
  common(eval, ef.common);
  eval->add_option("--manifest", ef.manifest);
  eval->add_option("--methods", ef.methods, "bicubic | name=checkpoint | checkpoint")->delimiter(',');
  eval->add_option("--report", ef.report, "JSON report path (a .txt table is written next to it)");
  eval->add_option("--peak", ef.peak, "PSNR peak in meters (default: per-region elevation range)");
  eval->add_flag("--no-baseline", ef.no_baseline, "Omit the bicubic baseline");

  bool verify_json = false;
  auto* verifyc = app.add_subcommand("verify", "Run the built-in correctness checks");
  verifyc->add_flag("--json", verify_json, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    app.exit(e, io.out, io.err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, io.out, io.err);
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(sf, io);
    if (*trainc) return cmd_train(tf, io);
    if (*infer) return cmd_infer(inf, io);
    if (*eval) return cmd_eval(ef, io);
    if (*verifyc) return cmd_verify(verify_json, io);
  } catch (const Error& e) {
    io.err << "afn: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    io.err << "afn: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace afn::cli
