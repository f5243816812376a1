// Synthesizes a small dataset, trains a tiny AFN for a few epochs and
// compares it with bicubic interpolation on the test split.
//
//   ./afn_quickstart [workdir]

#include <cstdio>
#include <filesystem>

#include "afn/afn.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path work = argc > 1 ? argv[1] : "afn_quickstart";
  afn::SynthConfig synth;
  synth.size = 64;
  const auto manifest = afn::gen_dataset(10, synth, work / "data");

  afn::ModelConfig model;
  model.m = 8;
  model.N = 4;
  model.T = 2;
  afn::TrainConfig tc;
  tc.lr = 1e-3;
  tc.epochs = 20;
  tc.lr_milestones = {12, 16};
  tc.finetune_rgb = false;
  afn::TrainOptions opts;
  opts.out_dir = work / "run";
  opts.on_epoch = [](const afn::EpochMetrics& m) {
    std::printf("epoch %d  loss %.4f  val RMSE %.3f m\n", m.epoch, m.train_loss, m.val_rmse_m);
  };
  afn::train<float>(manifest, model, tc, opts);

  afn::CompareOptions cmp;
  cmp.patch_size = synth.size;
  const auto result = afn::compare_methods(manifest, {{"afn", opts.out_dir / "best.afnc"}}, cmp);
  std::fputs(afn::format_table(result.report).c_str(), stdout);
  return 0;
}
