#pragma once

// Naive nested-loop implementations of the network blocks. They read the
// same named parameters as AfnModel but share none of its code paths (no
// im2col, no tape, residual skips from a literal table), so they serve as
// independent oracles in tests and in `afn verify`.

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "afn/model.hpp"

namespace afn::reference {

using Map = Tensor<double>;

template <typename T>
Map value(const AfnModel<T>& model, const std::string& name) {
  return model.param(name)->value.template cast<double>();
}

inline Map conv(const Map& x, const Map& w, const Map& b) {
  const int out = w.channels(), in = w.rows();
  const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(w.cols()))));
  const int pad = k / 2;
  Map y(out, x.rows(), x.cols());
  for (int o = 0; o < out; ++o) {
    for (int r = 0; r < x.rows(); ++r) {
      for (int c = 0; c < x.cols(); ++c) {
        double s = b[o];
        for (int i = 0; i < in; ++i) {
          for (int dr = 0; dr < k; ++dr) {
            for (int dc = 0; dc < k; ++dc) {
              const int rr = r + dr - pad, cc = c + dc - pad;
              if (rr < 0 || cc < 0 || rr >= x.rows() || cc >= x.cols()) continue;
              s += w(o, i, dr * k + dc) * x(i, rr, cc);
            }
          }
        }
        y(o, r, c) = s;
      }
    }
  }
  return y;
}

inline Map prelu(Map x, const Map& slope) {
  for (int c = 0; c < x.channels(); ++c) {
    for (int r = 0; r < x.rows(); ++r) {
      for (int q = 0; q < x.cols(); ++q) {
        if (x(c, r, q) < 0) x(c, r, q) *= slope[c];
      }
    }
  }
  return x;
}

inline Map relu(Map x) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::max(x[i], 0.0);
  return x;
}

inline Map sigmoid(Map x) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return x;
}

inline Map maxpool2(const Map& x) {
  Map y(x.channels(), x.rows() / 2, x.cols() / 2);
  for (int c = 0; c < y.channels(); ++c) {
    for (int r = 0; r < y.rows(); ++r) {
      for (int q = 0; q < y.cols(); ++q) {
        y(c, r, q) = std::max({x(c, 2 * r, 2 * q), x(c, 2 * r, 2 * q + 1), x(c, 2 * r + 1, 2 * q),
                               x(c, 2 * r + 1, 2 * q + 1)});
      }
    }
  }
  return y;
}

inline Map concat(const std::vector<const Map*>& parts) {
  int channels = 0;
  for (const Map* p : parts) channels += p->channels();
  Map y(channels, parts.front()->rows(), parts.front()->cols());
  int base = 0;
  for (const Map* p : parts) {
    for (int c = 0; c < p->channels(); ++c) {
      for (int r = 0; r < p->rows(); ++r) {
        for (int q = 0; q < p->cols(); ++q) y(base + c, r, q) = (*p)(c, r, q);
      }
    }
    base += p->channels();
  }
  return y;
}

template <typename T>
Map conv_layer(const AfnModel<T>& model, const std::string& layer, const Map& x) {
  return conv(x, value(model, layer + ".weight"), value(model, layer + ".bias"));
}

template <typename T>
Map conv_prelu(const AfnModel<T>& model, const std::string& layer, const std::string& act, const Map& x) {
  return prelu(conv_layer(model, layer, x), value(model, act + ".slope"));
}

template <typename T>
Map feature_extract_dem(const AfnModel<T>& model, const Map& dem) {
  return conv_prelu(model, "fe.dem.conv2", "fe.dem.act2", conv_prelu(model, "fe.dem.conv1", "fe.dem.act1", dem));
}

template <typename T>
Map feature_extract_rgb(const AfnModel<T>& model, const Map& aerial) {
  Map h = maxpool2(relu(conv_layer(model, "fe.rgb.conv2", relu(conv_layer(model, "fe.rgb.conv1", aerial)))));
  if (model.config().m == kRgbChannels) return h;
  return conv_prelu(model, "fe.rgb.adapt", "fe.rgb.adapt_act", h);
}

// Skip inputs per unit for N = 4 and N = 6, written out by hand. Index 0 is
// the compressed stack input.
inline const std::vector<std::vector<int>>& skip_table(int N) {
  static const std::vector<std::vector<int>> n2{{0}, {1}};
  static const std::vector<std::vector<int>> n4{{0}, {1}, {2}, {1, 3}};
  static const std::vector<std::vector<int>> n6{{0}, {1}, {2}, {1, 3}, {2, 4}, {1, 3, 5}};
  switch (N) {
    case 2: return n2;
    case 4: return n4;
    case 6: return n6;
    default: throw InvalidArgument("reference skip table covers N in {2, 4, 6}");
  }
}

template <typename T>
Map residual_stack(const AfnModel<T>& model, const Map& f_dem, const Map& feedback) {
  const int N = model.config().N;
  const auto& table = skip_table(N);
  std::vector<Map> out{conv_prelu(model, "afm.compress", "afm.compress_act", concat({&f_dem, &feedback}))};
  for (int i = 1; i <= N; ++i) {
    std::vector<const Map*> in;
    for (int j : table[i - 1]) in.push_back(&out[j]);
    const std::string u = "afm.unit" + std::to_string(i);
    Map h = conv_prelu(model, u + ".fuse", u + ".fuse_act", concat(in));
    out.push_back(conv_prelu(model, u + ".conv", u + ".conv_act", h));
  }
  std::vector<const Map*> even;
  for (int i = 2; i <= N; i += 2) even.push_back(&out[i]);
  return conv_prelu(model, "afm.merge", "afm.merge_act", concat(even));
}

template <typename T>
std::pair<Map, Map> attention(const AfnModel<T>& model, const Map& f_ru, const Map& f_rgb) {
  Map h = concat({&f_ru, &f_rgb});
  for (int l = 1; l <= 3; ++l) {
    h = conv_prelu(model, "afm.attn.conv" + std::to_string(l), "afm.attn.act" + std::to_string(l), h);
  }
  const Map a = sigmoid(conv_layer(model, "afm.attn.conv4", h));
  const int m = model.config().m;
  Map dem(m, a.rows(), a.cols()), rgb(m, a.rows(), a.cols());
  for (int c = 0; c < m; ++c) {
    for (int r = 0; r < a.rows(); ++r) {
      for (int q = 0; q < a.cols(); ++q) {
        dem(c, r, q) = a(c, r, q);
        rgb(c, r, q) = a(m + c, r, q);
      }
    }
  }
  return {dem, rgb};
}

inline Map fuse(const Map& f_ru, const Map& f_rgb, const Map& a_dem, const Map& a_rgb, double gamma) {
  Map y(f_ru.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f_ru[i] * a_dem[i] + gamma * (f_rgb[i] * a_rgb[i]);
  return y;
}

template <typename T>
Map reconstruct(const AfnModel<T>& model, const Map& f_fused) {
  return conv_layer(model, "rec.conv2", conv_prelu(model, "rec.conv1", "rec.act1", f_fused));
}

}  // namespace afn::reference
