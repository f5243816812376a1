#pragma once

// Finite-difference verification of the tape gradients through the full
// T-step network, in double precision, using the smoothed multi-step L1 loss.

#include <algorithm>
#include <optional>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "afn/model.hpp"
#include "afn/training.hpp"

namespace afn {

struct GradCheckGroup {
  std::string name;
  std::size_t checked = 0;
  std::size_t kinks = 0;  // entries whose finite difference straddled a ReLU or max-pool kink
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;
  double gamma_gradient = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;
};

struct GradCheckOptions {
  int patch = 16;
  int entries_per_tensor = 3;
  double step = 1e-5;
  double smoothing = 1e-8;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

// Builds a generic (non-degenerate) double-precision model and random sample.
// γ, biases and PReLU slopes are perturbed away from their init values so
// every parameter group has a nonzero gradient path.
inline AfnModel<double> gradcheck_model(ModelConfig cfg, std::uint64_t seed) {
  cfg.finetune_rgb_branch = true;
  cfg.rgb_checkpoint.clear();
  AfnModel<double> model(cfg);
  kaiming_init(model, seed);
  detail::NormalStream rng(mix_seed(seed, 0x9c));
  for (const auto& l : layer_table(cfg)) {
    auto& v = model.param(l.name)->value;
    switch (l.kind) {
      case LayerSpec::Kind::bias:
        for (double& x : v.values()) x = 0.05 * rng.next();
        break;
      case LayerSpec::Kind::slope:
        for (double& x : v.values()) x = 0.25 + 0.05 * rng.next();
        break;
      case LayerSpec::Kind::gamma: v[0] = 0.4 + 0.1 * rng.next(); break;
      case LayerSpec::Kind::weight: break;
    }
  }
  return model;
}

inline Sample<double> gradcheck_sample(int patch, std::uint64_t seed) {
  detail::NormalStream rng(mix_seed(seed, 0x5a));
  Sample<double> s;
  s.id = "gradcheck";
  s.data.dem_ilr = Tensor<double>(1, patch, patch);
  s.data.hr = Tensor<double>(1, patch, patch);
  s.data.aerial = Tensor<double>(3, 2 * patch, 2 * patch);
  for (double& x : s.data.dem_ilr.values()) x = 0.5 * rng.next();
  for (std::size_t i = 0; i < s.data.hr.size(); ++i) s.data.hr[i] = s.data.dem_ilr[i] + 0.3 * rng.next();
  for (double& x : s.data.aerial.values()) x = rng.next();
  s.data.norm_scale = 1.0;
  return s;
}

inline double smoothed_loss(const AfnModel<double>& model, const Sample<double>& s, double smoothing) {
  Tape<double> tape(false);
  auto tr = forward_sample(model, tape, s);
  std::vector<Tensor<double>> sr;
  for (const auto& v : tr.sr) sr.push_back(v->value);
  return multi_step_l1<double>(sr, s.data.hr, smoothing).value;
}

inline GradCheckReport gradient_check(const ModelConfig& cfg, std::uint64_t seed, const GradCheckOptions& opt = {}) {
  AfnModel<double> model = gradcheck_model(cfg, seed);
  const Sample<double> sample = gradcheck_sample(opt.patch, seed);

  model.params().zero_grad();
  accumulate_gradients(model, sample, 1.0, opt.smoothing);

  GradCheckReport report;
  std::uint64_t pick = mix_seed(seed, 0x91c);
  for (const auto& [name, p] : model.params().items()) {
    GradCheckGroup g{name};
    const std::size_t n = p->value.size();
    std::vector<std::size_t> idx;
    if (n <= static_cast<std::size_t>(opt.entries_per_tensor)) {
      for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
      while (idx.size() < static_cast<std::size_t>(opt.entries_per_tensor)) {
        pick = splitmix64(pick);
        const std::size_t i = pick % n;
        if (std::find(idx.begin(), idx.end(), i) == idx.end()) idx.push_back(i);
      }
    }
    for (std::size_t i : idx) {
      const double analytic = p->grad.empty() ? 0.0 : p->grad[i];
      const double saved = p->value[i];
      auto loss_at = [&](double v) {
        p->value[i] = v;
        const double l = smoothed_loss(model, sample, opt.smoothing);
        p->value[i] = saved;
        return l;
      };
      const double center = loss_at(saved);
      // Shrink the step until the one-sided slopes agree; if they never do the
      // entry sits on a kink and is not scored.
      std::optional<double> numeric;
      for (double h = opt.step; h >= opt.step * 1e-3 && !numeric; h *= 0.1) {
        const double up = loss_at(saved + h), down = loss_at(saved - h);
        const double fwd = (up - center) / h, bwd = (center - down) / h;
        if (std::abs(fwd - bwd) <= 1e-4 * std::max({std::abs(fwd), std::abs(bwd), 1e-3})) numeric = (up - down) / (2.0 * h);
      }
      ++g.checked;
      if (!numeric) {
        ++g.kinks;
        continue;
      }
      g.max_rel_error = std::max(g.max_rel_error, relative_error(analytic, *numeric));
      g.max_abs_analytic = std::max(g.max_abs_analytic, std::abs(analytic));
    }
    if (name == "afm.gamma") report.gamma_gradient = p->grad.empty() ? 0.0 : p->grad[0];
    report.max_rel_error = std::max(report.max_rel_error, g.max_rel_error);
    report.checked += g.checked;
    report.kinks += g.kinks;
    report.groups.push_back(std::move(g));
  }
  return report;
}

}  // namespace afn
