// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lumikit/gaussian.hpp"
#include "lumikit/mlp.hpp"
#include "lumikit/rng.hpp"

namespace lumikit {

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

inline constexpr double kGateLogFloor = 1e-8;

// Binary Concrete relaxation: P_tilde = sigmoid((log|P| + logU - log(1-U))/T).
// |P| is floored at 1e-8 inside the log.
template <typename T>
inline T concrete_sample(T logit, T temperature, T u) {
  T mag = std::max(std::abs(logit), T(kGateLogFloor));
  T z = (std::log(mag) + std::log(u) - std::log(T(1) - u)) / temperature;
  return sigmoid(z);
}

// d(P_tilde)/dP. Zero in the floored region |P| < 1e-8 where the forward is
// constant in P.
template <typename T>
inline T concrete_sample_grad(T logit, T temperature, T u) {
  if (std::abs(logit) < T(kGateLogFloor)) return T(0);
  T p = concrete_sample(logit, temperature, u);
  return p * (T(1) - p) / (temperature * logit);
}

// Deterministic gate used at inference: U fixed at 0.5, so the log-odds term
// vanishes and P_tilde = sigmoid(log|P| / T) exactly.
template <typename T>
inline T gate_inference(T logit, T temperature) {
  return concrete_sample(logit, temperature, T(0.5));
}

enum class GateMode { kStochastic, kInference, kDisabled };

template <typename T>
struct DeformSettings {
  T time = 0;
  T temperature = T(0.5);
  GateMode gate_mode = GateMode::kStochastic;
  bool zero_deltas = false;   // warmup: canonical geometry only
  bool zero_delta_color = false;  // ablation: no temporal color modulation
};

// Everything the backward pass needs about one deformation application.
template <typename T>
struct DeformContext {
  DeformSettings<T> settings;
  std::vector<Vec3<T>> delta_mu, delta_rot, delta_color;  // raw MLP outputs
  std::vector<T> gate;                                    // P_tilde
  std::vector<T> gate_u;                                  // U draws
  std::vector<Quat<T>> rot_prenorm;                       // before renormalization
  std::vector<Vec3<T>> color_unclamped;                   // c*(1-dc) before clamp
  MlpActivations<T> mlp_ctx;
};

// Applies the gated deformation and color modulation, producing the scene
// used by rasterization and tracing. Opacity and scales are never deformed.
template <typename T>
inline SplatScene<T> build_deformed_scene(const std::vector<Gaussian2D<T>>& gs,
                                          const DeformationMlp<T>& mlp,
                                          const DeformSettings<T>& settings, Rng* gate_rng,
                                          DeformContext<T>* ctx) {
  size_t n = gs.size();
  SplatScene<T> scene;
  scene.resize(n);

  std::vector<Vec3<T>> mu_canon(n);
  for (size_t i = 0; i < n; ++i) mu_canon[i] = gs[i].mu;

  std::vector<Vec3<T>> dmu, drot, dcol;
  mlp_forward_batch(mlp, settings.time, mu_canon, dmu, drot, dcol,
                    ctx ? &ctx->mlp_ctx : nullptr);
  if (settings.zero_deltas)
    for (size_t i = 0; i < n; ++i) dmu[i] = drot[i] = dcol[i] = Vec3<T>{};
  if (settings.zero_delta_color)
    for (size_t i = 0; i < n; ++i) dcol[i] = Vec3<T>{};

  if (ctx) {
    ctx->settings = settings;
    ctx->delta_mu = dmu;
    ctx->delta_rot = drot;
    ctx->delta_color = dcol;
    ctx->gate.resize(n);
    ctx->gate_u.assign(n, T(0.5));
    ctx->rot_prenorm.resize(n);
    ctx->color_unclamped.resize(n);
  }

  for (size_t i = 0; i < n; ++i) {
    T gate;
    T u = T(0.5);
    switch (settings.gate_mode) {
      case GateMode::kDisabled:
        gate = T(1);
        break;
      case GateMode::kStochastic:
        u = gate_rng ? T(gate_rng->next_open()) : T(0.5);
        gate = concrete_sample(gs[i].gate_logit, settings.temperature, u);
        break;
      case GateMode::kInference:
      default:
        gate = gate_inference(gs[i].gate_logit, settings.temperature);
        break;
    }

    Vec3<T> mu = gs[i].mu + dmu[i] * gate;
    Quat<T> prenorm{gs[i].rot.w, gs[i].rot.x + gate * drot[i].x, gs[i].rot.y + gate * drot[i].y,
                    gs[i].rot.z + gate * drot[i].z};
    Quat<T> rot = prenorm.normalized();
    Vec3<T> c_raw = gs[i].color * (Vec3<T>{1, 1, 1} - dcol[i]);
    Vec3<T> c = clamp01(c_raw);

    scene.mu[i] = mu;
    scene.rot[i] = rot;
    scene.frame[i] = quat_to_frame(rot);
    scene.su[i] = gs[i].su;
    scene.sv[i] = gs[i].sv;
    scene.opacity[i] = gs[i].opacity;
    scene.color[i] = c;
    scene.albedo[i] = gs[i].albedo;
    scene.rough[i] = gs[i].rough;
    scene.canon_color[i] = gs[i].color;

    if (ctx) {
      ctx->gate[i] = gate;
      ctx->gate_u[i] = u;
      ctx->rot_prenorm[i] = prenorm;
      ctx->color_unclamped[i] = c_raw;
    }
  }
  return scene;
}

// Which canonical parameter classes may receive gradients.
struct DeformGradMask {
  bool geometry = true;      // mu, rot, su, sv
  bool opacity = true;
  bool color = true;         // canonical color
  bool albedo = true;
  bool rough = true;
  bool gate = true;          // P logits
  MlpGradMask mlp{};
};

// Maps rendered-scene gradients back onto canonical gaussians, the gate
// logits and the MLP. Extra delta adjoints (the delta regularizers) are added
// before the MLP pass.
template <typename T>
inline void deform_backward(const std::vector<Gaussian2D<T>>& gs, const DeformationMlp<T>& mlp,
                            const DeformContext<T>& ctx, const SplatSceneGrads<T>& sg,
                            const std::vector<Vec3<T>>* extra_d_delta_mu,
                            const std::vector<Vec3<T>>* extra_d_delta_color,
                            const DeformGradMask& mask, std::vector<GaussianGrad<T>>& ggrads,
                            DeformationMlp<T>& mlp_grads) {
  size_t n = gs.size();
  std::vector<Vec3<T>> d_dmu(n), d_drot(n), d_dcol(n);
  std::vector<Vec3<T>> mu_canon(n);
  for (size_t i = 0; i < n; ++i) mu_canon[i] = gs[i].mu;

  bool deltas_active = !ctx.settings.zero_deltas;

  for (size_t i = 0; i < n; ++i) {
    T gate = ctx.gate[i];
    T d_gate = 0;

    // mu' = mu + gate * dmu
    if (mask.geometry) ggrads[i].mu += sg.mu[i];
    if (deltas_active) {
      d_dmu[i] += sg.mu[i] * gate;
      d_gate += dot(sg.mu[i], ctx.delta_mu[i]);
    }

    // rot' = normalize(rot (+) gate * drot on the vector part)
    Quat<T> d_pre = quat_normalize_backward(ctx.rot_prenorm[i], sg.rot[i]);
    if (mask.geometry) {
      ggrads[i].rot.w += d_pre.w;
      ggrads[i].rot.x += d_pre.x;
      ggrads[i].rot.y += d_pre.y;
      ggrads[i].rot.z += d_pre.z;
    }
    if (deltas_active) {
      Vec3<T> d_vec{d_pre.x, d_pre.y, d_pre.z};
      d_drot[i] += d_vec * gate;
      d_gate += dot(d_vec, ctx.delta_rot[i]);
    }

    // c' = clamp01(c * (1 - dc))
    Vec3<T> d_cprime = sg.color[i];
    const Vec3<T>& raw = ctx.color_unclamped[i];
    for (int ch = 0; ch < 3; ++ch)
      if (raw[ch] < T(0) || raw[ch] > T(1)) d_cprime[ch] = T(0);
    Vec3<T> one_minus{T(1) - ctx.delta_color[i].x, T(1) - ctx.delta_color[i].y,
                      T(1) - ctx.delta_color[i].z};
    if (mask.color) {
      ggrads[i].color += d_cprime * one_minus;
      ggrads[i].color += sg.canon_color[i];  // direct canonical-color path
    }
    if (deltas_active && !ctx.settings.zero_delta_color)
      d_dcol[i] -= d_cprime * gs[i].color;

    // Pass-through parameters (never deformed).
    if (mask.geometry) {
      ggrads[i].su += sg.su[i];
      ggrads[i].sv += sg.sv[i];
    }
    if (mask.opacity) ggrads[i].opacity += sg.opacity[i];
    if (mask.albedo) ggrads[i].albedo += sg.albedo[i];
    if (mask.rough) ggrads[i].rough += sg.rough[i];

    // Gate chain.
    if (mask.gate && ctx.settings.gate_mode != GateMode::kDisabled)
      ggrads[i].gate_logit +=
          d_gate * concrete_sample_grad(gs[i].gate_logit, ctx.settings.temperature, ctx.gate_u[i]);
  }

  if (extra_d_delta_mu)
    for (size_t i = 0; i < n; ++i) d_dmu[i] += (*extra_d_delta_mu)[i];
  if (extra_d_delta_color && !ctx.settings.zero_delta_color)
    for (size_t i = 0; i < n; ++i) d_dcol[i] += (*extra_d_delta_color)[i];

  if (deltas_active || extra_d_delta_mu || extra_d_delta_color) {
    std::vector<Vec3<T>> d_mu_enc(n, Vec3<T>{});
    mlp_backward_batch(mlp, ctx.mlp_ctx, d_dmu, d_drot, d_dcol, mu_canon, mask.mlp, mlp_grads,
                       &d_mu_enc);
    if (mask.geometry && mask.mlp.input_mu)
      for (size_t i = 0; i < n; ++i) ggrads[i].mu += d_mu_enc[i];
  }
}

}  // namespace lumikit
