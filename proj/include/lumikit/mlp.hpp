// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lumikit/math.hpp"
#include "lumikit/rng.hpp"

namespace lumikit {

template <typename T>
struct Dense {
  int in = 0, out = 0;
  std::vector<T> w;  // row-major [out][in]
  std::vector<T> b;

  void init(int in_, int out_, Rng* rng) {
    in = in_;
    out = out_;
    w.assign(static_cast<size_t>(in) * out, T(0));
    b.assign(out, T(0));
    if (rng) {
      T s = std::sqrt(T(6) / T(in + out));
      for (auto& v : w) v = rng->uniform(-s, s);
    }
  }

  void zero() {
    std::fill(w.begin(), w.end(), T(0));
    std::fill(b.begin(), b.end(), T(0));
  }

  void forward(const T* x, T* y) const {
    for (int o = 0; o < out; ++o) {
      T acc = b[o];
      const T* row = w.data() + static_cast<size_t>(o) * in;
      for (int i = 0; i < in; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }

  // Accumulates weight gradients and (optionally) the input adjoint.
  void backward(const T* x, const T* d_y, T* d_x, Dense<T>* grad) const {
    if (grad) {
      for (int o = 0; o < out; ++o) {
        T g = d_y[o];
        if (g == T(0)) continue;
        grad->b[o] += g;
        T* grow = grad->w.data() + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) grow[i] += g * x[i];
      }
    }
    if (d_x) {
      for (int o = 0; o < out; ++o) {
        T g = d_y[o];
        if (g == T(0)) continue;
        const T* row = w.data() + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) d_x[i] += g * row[i];
      }
    }
  }
};

// Deformation network: ReLU trunk on enc(t) (+) enc(mu), three linear heads
// emitting position, rotation and color deltas. Heads start at zero so an
// untrained network reproduces the canonical scene exactly.
template <typename T>
struct DeformationMlp {
  int depth = 4, width = 64;
  int enc_t = 6, enc_mu = 10;
  std::vector<Dense<T>> trunk;
  Dense<T> head_mu, head_rot, head_color;

  int input_dim() const { return 2 * enc_t + 3 * 2 * enc_mu; }

  void init(int depth_, int width_, int enc_t_, int enc_mu_, uint64_t seed) {
    depth = depth_;
    width = width_;
    enc_t = enc_t_;
    enc_mu = enc_mu_;
    Rng rng(seed, 0x6d6c70);  // independent stream for weight init
    trunk.resize(depth);
    for (int l = 0; l < depth; ++l) trunk[l].init(l == 0 ? input_dim() : width, width, &rng);
    head_mu.init(width, 3, nullptr);
    head_rot.init(width, 3, nullptr);
    head_color.init(width, 3, nullptr);
  }

  template <typename F>
  void for_each_layer(F&& f) {
    for (auto& l : trunk) f(l);
    f(head_mu);
    f(head_rot);
    f(head_color);
  }

  template <typename F>
  void for_each_layer(F&& f) const {
    for (const auto& l : trunk) f(l);
    f(head_mu);
    f(head_rot);
    f(head_color);
  }

  size_t parameter_count() const {
    size_t n = 0;
    for_each_layer([&](const Dense<T>& l) { n += l.w.size() + l.b.size(); });
    return n;
  }

  // Zero-valued copy of the layer structure, used as a gradient buffer.
  DeformationMlp grad_shape() const {
    DeformationMlp g = *this;
    g.for_each_layer([](Dense<T>& l) { l.zero(); });
    return g;
  }

  void add(const DeformationMlp& o) {
    for (size_t l = 0; l < trunk.size(); ++l) {
      for (size_t i = 0; i < trunk[l].w.size(); ++i) trunk[l].w[i] += o.trunk[l].w[i];
      for (size_t i = 0; i < trunk[l].b.size(); ++i) trunk[l].b[i] += o.trunk[l].b[i];
    }
    auto add_layer = [](Dense<T>& a, const Dense<T>& b) {
      for (size_t i = 0; i < a.w.size(); ++i) a.w[i] += b.w[i];
      for (size_t i = 0; i < a.b.size(); ++i) a.b[i] += b.b[i];
    };
    add_layer(head_mu, o.head_mu);
    add_layer(head_rot, o.head_rot);
    add_layer(head_color, o.head_color);
  }
};

// Activations saved by the batched forward pass for reuse in backward.
template <typename T>
struct MlpActivations {
  int count = 0;
  std::vector<T> input;             // count x input_dim
  std::vector<std::vector<T>> act;  // per trunk layer: count x width, post-ReLU
};

// Batched forward over all gaussians at one timestep. Outputs are packed as
// (d_mu, d_rot, d_color) triplets per gaussian.
template <typename T>
inline void mlp_forward_batch(const DeformationMlp<T>& mlp, T time,
                              const std::vector<Vec3<T>>& mu, std::vector<Vec3<T>>& delta_mu,
                              std::vector<Vec3<T>>& delta_rot, std::vector<Vec3<T>>& delta_color,
                              MlpActivations<T>* ctx) {
  int n = static_cast<int>(mu.size());
  int in_dim = mlp.input_dim();
  int w = mlp.width;
  delta_mu.resize(n);
  delta_rot.resize(n);
  delta_color.resize(n);
  if (ctx) {
    ctx->count = n;
    ctx->input.resize(static_cast<size_t>(n) * in_dim);
    ctx->act.assign(mlp.trunk.size(), std::vector<T>(static_cast<size_t>(n) * w));
  }

  std::vector<T> enc_time(2 * mlp.enc_t);
  positional_encode(&time, 1, mlp.enc_t, enc_time.data());

  std::vector<T> input(in_dim), a(w), b(w);
  for (int g = 0; g < n; ++g) {
    std::copy(enc_time.begin(), enc_time.end(), input.begin());
    positional_encode(&mu[g].x, 3, mlp.enc_mu, input.data() + 2 * mlp.enc_t);
    if (ctx) std::copy(input.begin(), input.end(), ctx->input.begin() + static_cast<size_t>(g) * in_dim);

    const T* x = input.data();
    for (size_t l = 0; l < mlp.trunk.size(); ++l) {
      T* y = (l % 2 == 0) ? a.data() : b.data();
      mlp.trunk[l].forward(x, y);
      for (int i = 0; i < w; ++i) y[i] = y[i] > T(0) ? y[i] : T(0);
      if (ctx) std::copy(y, y + w, ctx->act[l].begin() + static_cast<size_t>(g) * w);
      x = y;
    }
    T out[3];
    mlp.head_mu.forward(x, out);
    delta_mu[g] = {out[0], out[1], out[2]};
    mlp.head_rot.forward(x, out);
    delta_rot[g] = {out[0], out[1], out[2]};
    mlp.head_color.forward(x, out);
    delta_color[g] = {out[0], out[1], out[2]};
  }
}

// Reverse pass: delta adjoints -> weight gradients plus d(mu) through the
// positional encoding. Head gradients can be masked (stage-2 trains only the
// color head).
struct MlpGradMask {
  bool trunk = true;
  bool head_mu = true;
  bool head_rot = true;
  bool head_color = true;
  bool input_mu = true;  // propagate into the canonical positions
};

template <typename T>
inline void mlp_backward_batch(const DeformationMlp<T>& mlp, const MlpActivations<T>& ctx,
                               const std::vector<Vec3<T>>& d_delta_mu,
                               const std::vector<Vec3<T>>& d_delta_rot,
                               const std::vector<Vec3<T>>& d_delta_color,
                               const std::vector<Vec3<T>>& mu, const MlpGradMask& mask,
                               DeformationMlp<T>& grads, std::vector<Vec3<T>>* d_mu) {
  int n = ctx.count;
  int in_dim = mlp.input_dim();
  int w = mlp.width;
  int L = static_cast<int>(mlp.trunk.size());
  std::vector<T> d_hidden(w), d_prev(std::max(w, in_dim));
  T d_out[3];

  for (int g = 0; g < n; ++g) {
    const T* top = ctx.act[L - 1].data() + static_cast<size_t>(g) * w;
    std::fill(d_hidden.begin(), d_hidden.end(), T(0));

    d_out[0] = d_delta_mu[g].x;
    d_out[1] = d_delta_mu[g].y;
    d_out[2] = d_delta_mu[g].z;
    mlp.head_mu.backward(top, d_out, d_hidden.data(), mask.head_mu ? &grads.head_mu : nullptr);
    d_out[0] = d_delta_rot[g].x;
    d_out[1] = d_delta_rot[g].y;
    d_out[2] = d_delta_rot[g].z;
    mlp.head_rot.backward(top, d_out, d_hidden.data(), mask.head_rot ? &grads.head_rot : nullptr);
    d_out[0] = d_delta_color[g].x;
    d_out[1] = d_delta_color[g].y;
    d_out[2] = d_delta_color[g].z;
    mlp.head_color.backward(top, d_out, d_hidden.data(),
                            mask.head_color ? &grads.head_color : nullptr);

    for (int l = L - 1; l >= 0; --l) {
      const T* act = ctx.act[l].data() + static_cast<size_t>(g) * w;
      for (int i = 0; i < w; ++i)
        if (act[i] <= T(0)) d_hidden[i] = T(0);  // ReLU mask
      const T* below = l > 0 ? ctx.act[l - 1].data() + static_cast<size_t>(g) * w
                             : ctx.input.data() + static_cast<size_t>(g) * in_dim;
      int below_dim = l > 0 ? w : in_dim;
      std::fill(d_prev.begin(), d_prev.begin() + below_dim, T(0));
      bool need_dx = l > 0 || mask.input_mu;
      mlp.trunk[l].backward(below, d_hidden.data(), need_dx ? d_prev.data() : nullptr,
                            mask.trunk ? &grads.trunk[l] : nullptr);
      if (l > 0) {
        std::copy(d_prev.begin(), d_prev.begin() + below_dim, d_hidden.begin());
      } else if (mask.input_mu && d_mu) {
        T g_mu[3] = {0, 0, 0};
        positional_encode_backward(&mu[g].x, 3, mlp.enc_mu, d_prev.data() + 2 * mlp.enc_t, g_mu);
        (*d_mu)[g] += Vec3<T>{g_mu[0], g_mu[1], g_mu[2]};
      }
    }
  }
}

}  // namespace lumikit
