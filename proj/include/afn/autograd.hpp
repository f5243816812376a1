#pragma once

// Minimal reverse-mode tape over Tensor values.
//
// Every op returns a Var. When the tape is recording and at least one input
// requires a gradient, the op registers a backward closure on the tape; the
// closure accumulates into its inputs' grad buffers. Parameters are leaf
// nodes shared across every use, so a recurrent graph that reuses a layer T
// times accumulates all T contributions into the same buffer.

#include <functional>
#include <cstdint>
#include <memory>
#include <vector>

#include "afn/conv.hpp"
#include "afn/tensor.hpp"

namespace afn {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  void zero_grad() { grad = Tensor<T>(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs,
                std::function<void(Node<T>&)> backward) {
    auto out = leaf(std::move(value));
    if (!recording_) return out;
    bool needs = false;
    for (const auto& in : inputs) needs = needs || (in && in->requires_grad);
    if (!needs) return out;
    out->requires_grad = true;
    out->backward = std::move(backward);
    nodes_.push_back(out);
    return out;
  }

  // Runs all recorded closures in reverse order. Seed output grads first.
  void backward() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& n = **it;
      if (!n.grad.empty() && n.backward) n.backward(n);
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  bool recording_;
  std::vector<Var<T>> nodes_;
};

namespace ops {

template <typename T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  Tensor<T> y;
  kernels::conv2d_forward(x->value, w->value, b ? &b->value : nullptr, y);
  // Captures keep inputs alive for as long as the tape holds this node.
  return tape.record(std::move(y), {x, w, b}, [x, w, b](Node<T>& self) {
    kernels::conv2d_backward(x->value, w->value, self.grad,
                             x->requires_grad ? &x->grad_buffer() : nullptr,
                             w->requires_grad ? &w->grad_buffer() : nullptr,
                             (b && b->requires_grad) ? &b->grad_buffer() : nullptr);
  });
}

// Per-channel learnable negative slope.
template <typename T>
Var<T> prelu(Tape<T>& tape, const Var<T>& x, const Var<T>& slope) {
  const Tensor<T>& xv = x->value;
  if (slope->value.size() != static_cast<std::size_t>(xv.channels())) {
    throw ShapeError("prelu slope count must equal channel count");
  }
  Tensor<T> y(xv.shape());
  for (int c = 0; c < xv.channels(); ++c) {
    const T a = slope->value[c];
    auto in = xv.channel(c);
    auto out = y.channel(c);
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : a * in[i];
  }
  return tape.record(std::move(y), {x, slope}, [x, slope](Node<T>& self) {
    const Tensor<T>& xv = x->value;
    for (int c = 0; c < xv.channels(); ++c) {
      const T a = slope->value[c];
      auto in = xv.channel(c);
      auto g = self.grad.channel(c);
      if (x->requires_grad) {
        auto gx = x->grad_buffer().channel(c);
        for (std::size_t i = 0; i < in.size(); ++i) gx[i] += in[i] > T(0) ? g[i] : a * g[i];
      }
      if (slope->requires_grad) {
        T s = 0;
        for (std::size_t i = 0; i < in.size(); ++i) {
          if (in[i] <= T(0)) s += in[i] * g[i];
        }
        slope->grad_buffer()[c] += s;
      }
    }
  });
}

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> y(x->value.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(x->value[i], T(0));
  return tape.record(std::move(y), {x}, [x](Node<T>& self) {
    auto& gx = x->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (x->value[i] > T(0)) gx[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(Tape<T>& tape, const Var<T>& x) {
  Tensor<T> y(x->value.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x->value[i]));
  return tape.record(std::move(y), {x}, [x](Node<T>& self) {
    auto& gx = x->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T s = self.value[i];
      gx[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Var<T> concat(Tape<T>& tape, const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const int rows = parts.front()->value.rows(), cols = parts.front()->value.cols();
  int channels = 0;
  for (const auto& p : parts) {
    if (p->value.rows() != rows || p->value.cols() != cols) {
      throw ShapeError("concat spatial mismatch: " + p->value.shape().str());
    }
    channels += p->value.channels();
  }
  Tensor<T> y(channels, rows, cols);
  T* dst = y.data();
  for (const auto& p : parts) dst = std::copy(p->value.data(), p->value.data() + p->value.size(), dst);

  return tape.record(std::move(y), parts, [parts](Node<T>& self) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t n = p->value.size();
      if (p->requires_grad) {
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

// Channels [first, first + count).
template <typename T>
Var<T> slice_channels(Tape<T>& tape, const Var<T>& x, int first, int count) {
  const Tensor<T>& xv = x->value;
  if (first < 0 || count < 1 || first + count > xv.channels()) throw ShapeError("channel slice out of range");
  Tensor<T> y(count, xv.rows(), xv.cols());
  const std::size_t offset = static_cast<std::size_t>(first) * xv.shape().plane();
  std::copy(xv.data() + offset, xv.data() + offset + y.size(), y.data());
  return tape.record(std::move(y), {x}, [x, offset](Node<T>& self) {
    auto& g = x->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
  });
}

template <typename T>
Var<T> mul(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "mul");
  Tensor<T> y(a->value.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->value[i] * b->value[i];
  return tape.record(std::move(y), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) {
      auto& g = a->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      auto& g = b->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a->value[i];
    }
  });
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a->value.shape(), b->value.shape(), "add");
  Tensor<T> y(a->value.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->value[i] + b->value[i];
  return tape.record(std::move(y), {a, b}, [a, b](Node<T>& self) {
    for (const auto& in : {a, b}) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

// x * s for a learnable scalar s (a 1x1x1 tensor).
template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& x, const Var<T>& s) {
  if (s->value.size() != 1) throw ShapeError("scale expects a scalar");
  const T k = s->value[0];
  Tensor<T> y(x->value.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = k * x->value[i];
  return tape.record(std::move(y), {x, s}, [x, s](Node<T>& self) {
    const T k = s->value[0];
    if (x->requires_grad) {
      auto& g = x->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * self.grad[i];
    }
    if (s->requires_grad) {
      T acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * x->value[i];
      s->grad_buffer()[0] += acc;
    }
  });
}

// 2x2 max-pool, stride 2. Odd trailing rows/cols are dropped.
template <typename T>
Var<T> maxpool2(Tape<T>& tape, const Var<T>& x) {
  const Tensor<T>& xv = x->value;
  const int rows = xv.rows() / 2, cols = xv.cols() / 2;
  if (rows < 1 || cols < 1) throw ShapeError("maxpool2 input too small");
  Tensor<T> y(xv.channels(), rows, cols);
  std::vector<std::uint32_t> argmax(y.size());
  std::size_t o = 0;
  for (int c = 0; c < xv.channels(); ++c) {
    for (int r = 0; r < rows; ++r) {
      for (int q = 0; q < cols; ++q, ++o) {
        std::size_t best = (static_cast<std::size_t>(c) * xv.rows() + 2 * r) * xv.cols() + 2 * q;
        for (int dr = 0; dr < 2; ++dr) {
          for (int dq = 0; dq < 2; ++dq) {
            const std::size_t i = (static_cast<std::size_t>(c) * xv.rows() + 2 * r + dr) * xv.cols() + 2 * q + dq;
            if (xv[i] > xv[best]) best = i;
          }
        }
        y[o] = xv[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return tape.record(std::move(y), {x}, [x, argmax = std::move(argmax)](Node<T>& self) {
    auto& g = x->grad_buffer();
    for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
  });
}

}  // namespace ops
}  // namespace afn
