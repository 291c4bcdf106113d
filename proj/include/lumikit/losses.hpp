// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lumikit/envmap.hpp"
#include "lumikit/rasterize.hpp"
#include "lumikit/ssim.hpp"

namespace lumikit {

inline constexpr double kSsimMix = 0.2;       // L_c = 0.8 L1 + 0.2 (1 - SSIM)
inline constexpr double kBceClamp = 1e-6;

template <typename T>
struct Stage1Weights {
  T lambda_normal = T(0.002);
  T lambda_dist = T(1000);
  T lambda_opacity = T(0.1);
  T lambda_sep = T(0.005);
  T lambda_delta_color = T(0.01);
  T lambda_delta_mu = T(0.001);
  int separation_start_iter = 1000;
  int deform_warmup_iter = 500;
};

template <typename T>
struct Stage2Weights {
  T lambda_env = T(1e-3);
  int pixel_samples = 128;  // N pixels per iteration
  int n_rays = 64;          // N_r rays per pixel
};

// -----------------------------------------------------------------------------
// RECONSTRUCTION (L1 + D-SSIM)
// -----------------------------------------------------------------------------

template <typename T>
inline T loss_l1(const ImageBuffer<T>& render, const ImageBuffer<T>& gt) {
  if (render.data.size() != gt.data.size())
    throw std::invalid_argument("loss_l1: image dimensions differ");
  T sum = 0;
  for (size_t i = 0; i < render.data.size(); ++i) sum += std::abs(render.data[i] - gt.data[i]);
  return sum / T(render.data.size());
}

template <typename T>
inline T loss_reconstruction(const ImageBuffer<T>& render, const ImageBuffer<T>& gt) {
  return (1 - T(kSsimMix)) * loss_l1(render, gt) + T(kSsimMix) * (1 - ssim(render, gt));
}

template <typename T>
inline void loss_reconstruction_backward(const ImageBuffer<T>& render, const ImageBuffer<T>& gt,
                                         T d_upstream, ImageBuffer<T>& d_render) {
  T l1_w = d_upstream * (1 - T(kSsimMix)) / T(render.data.size());
  for (size_t i = 0; i < render.data.size(); ++i) {
    T diff = render.data[i] - gt.data[i];
    d_render.data[i] += diff > 0 ? l1_w : (diff < 0 ? -l1_w : T(0));
  }
  ssim_backward(render, gt, -d_upstream * T(kSsimMix), d_render);
}

// -----------------------------------------------------------------------------
// NORMAL CONSISTENCY
// -----------------------------------------------------------------------------
// Aligns per-hit splat normals with the normal derived from the rendered
// depth map. Depth is normalized by accumulated opacity before unprojection;
// only pixels whose four neighbours are covered contribute.

template <typename T>
struct NormalLossCtx {
  std::vector<int32_t> pixels;  // contributing pixel indices
  int count = 0;
};

namespace detail {

template <typename T>
inline Vec3<T> unproject(const Camera<T>& cam, int x, int y, T depth_norm) {
  Vec3<T> v{(T(x) + T(0.5) - cam.cx) / cam.fx, (T(y) + T(0.5) - cam.cy) / cam.fy, T(1)};
  return v * depth_norm;
}

template <typename T>
inline T depth_over_opacity(const RenderResult<T>& fwd, int x, int y) {
  T o = fwd.opacity.at(x, y)[0];
  return fwd.depth.at(x, y)[0] / std::max(o, T(1e-6));
}

// Camera-space depth-derived normal at an interior pixel, flipped toward the
// camera (negative z).
template <typename T>
inline Vec3<T> depth_normal_cam(const Camera<T>& cam, const RenderResult<T>& fwd, int x, int y,
                                Vec3<T>* cross_raw) {
  Vec3<T> px1 = unproject(cam, x + 1, y, depth_over_opacity(fwd, x + 1, y));
  Vec3<T> px0 = unproject(cam, x - 1, y, depth_over_opacity(fwd, x - 1, y));
  Vec3<T> py1 = unproject(cam, x, y + 1, depth_over_opacity(fwd, x, y + 1));
  Vec3<T> py0 = unproject(cam, x, y - 1, depth_over_opacity(fwd, x, y - 1));
  Vec3<T> c = cross(px1 - px0, py1 - py0);
  if (cross_raw) *cross_raw = c;
  if (length(c) < T(1e-12)) return Vec3<T>{};
  Vec3<T> n = normalize(c);
  return n.z > 0 ? -n : n;
}

}  // namespace detail

template <typename T>
inline T loss_normal_consistency(const RenderResult<T>& fwd, const Camera<T>& cam,
                                 T coverage_threshold = T(0.5)) {
  int w = fwd.width(), h = fwd.height();
  auto covered = [&](int x, int y) { return fwd.opacity.at(x, y)[0] > coverage_threshold; };
  T total = 0;
  int count = 0;
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      if (!covered(x, y) || !covered(x - 1, y) || !covered(x + 1, y) || !covered(x, y - 1) ||
          !covered(x, y + 1))
        continue;
      Vec3<T> n_cam = detail::depth_normal_cam(cam, fwd, x, y, static_cast<Vec3<T>*>(nullptr));
      if (length(n_cam) == T(0)) continue;
      Vec3<T> n_world = cam.rot * n_cam;
      size_t idx = static_cast<size_t>(y) * w + x;
      T px_loss = 0;
      for (int i = 0; i < fwd.hit_count[idx]; ++i) {
        const HitRecord<T>& rec = fwd.hits[fwd.hit_offset[idx] + i];
        px_loss += rec.alpha * rec.trans_before * (1 - dot(rec.n, n_world));
      }
      total += px_loss;
      ++count;
    }
  return count > 0 ? total / T(count) : T(0);
}

// Backward of loss_normal_consistency into per-hit (w, n) adjoints plus the
// depth and opacity adjoint images.
template <typename T>
inline void loss_normal_consistency_backward(const RenderResult<T>& fwd, const Camera<T>& cam,
                                             T d_upstream, RenderAdjoint<T>& adj,
                                             T coverage_threshold = T(0.5)) {
  int w = fwd.width(), h = fwd.height();
  auto covered = [&](int x, int y) { return fwd.opacity.at(x, y)[0] > coverage_threshold; };
  // first pass: count contributing pixels (the loss normalizer)
  int count = 0;
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      if (!covered(x, y) || !covered(x - 1, y) || !covered(x + 1, y) || !covered(x, y - 1) ||
          !covered(x, y + 1))
        continue;
      Vec3<T> raw;
      detail::depth_normal_cam(cam, fwd, x, y, &raw);
      if (length(raw) >= T(1e-12)) ++count;
    }
  if (count == 0) return;
  T norm = d_upstream / T(count);

  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      if (!covered(x, y) || !covered(x - 1, y) || !covered(x + 1, y) || !covered(x, y - 1) ||
          !covered(x, y + 1))
        continue;
      Vec3<T> raw;
      Vec3<T> n_cam = detail::depth_normal_cam(cam, fwd, x, y, &raw);
      if (length(raw) < T(1e-12)) continue;
      Vec3<T> n_world = cam.rot * n_cam;

      size_t idx = static_cast<size_t>(y) * w + x;
      Vec3<T> d_n_world{};
      for (int i = 0; i < fwd.hit_count[idx]; ++i) {
        const HitRecord<T>& rec = fwd.hits[fwd.hit_offset[idx] + i];
        size_t flat = static_cast<size_t>(fwd.hit_offset[idx]) + i;
        T wgt = rec.alpha * rec.trans_before;
        adj.d_hit_w[flat] += norm * (1 - dot(rec.n, n_world));
        adj.d_hit_n[flat] += n_world * (-norm * wgt);
        d_n_world += rec.n * (-norm * wgt);
      }

      // n_world = R n_cam; n_cam = (+/-) normalize(cross)
      Vec3<T> d_n_cam = cam.rot.transposed() * d_n_world;
      Vec3<T> n_unflipped = normalize(raw);
      if (n_unflipped.z > 0) d_n_cam = -d_n_cam;
      Vec3<T> d_raw = normalize_backward(raw, d_n_cam);

      // raw = cross(a, b), a = px1 - px0, b = py1 - py0
      Vec3<T> px1 = detail::unproject(cam, x + 1, y, detail::depth_over_opacity(fwd, x + 1, y));
      Vec3<T> px0 = detail::unproject(cam, x - 1, y, detail::depth_over_opacity(fwd, x - 1, y));
      Vec3<T> py1 = detail::unproject(cam, x, y + 1, detail::depth_over_opacity(fwd, x, y + 1));
      Vec3<T> py0 = detail::unproject(cam, x, y - 1, detail::depth_over_opacity(fwd, x, y - 1));
      Vec3<T> a = px1 - px0, b = py1 - py0;
      Vec3<T> d_a = cross(b, d_raw);  // d(cross)/da adjoint
      Vec3<T> d_b = cross(d_raw, a);

      // p = v(x,y) * depth_norm; depth_norm = depth / max(opacity, 1e-6)
      auto backprop_point = [&](int px, int py, const Vec3<T>& d_p) {
        Vec3<T> v{(T(px) + T(0.5) - cam.cx) / cam.fx, (T(py) + T(0.5) - cam.cy) / cam.fy, T(1)};
        T d_depth_norm = dot(v, d_p);
        T o = fwd.opacity.at(px, py)[0];
        T om = std::max(o, T(1e-6));
        adj.d_depth.at(px, py)[0] += d_depth_norm / om;
        if (o > T(1e-6))
          adj.d_opacity.at(px, py)[0] -= d_depth_norm * fwd.depth.at(px, py)[0] / (om * om);
      };
      backprop_point(x + 1, y, d_a);
      backprop_point(x - 1, y, -d_a);
      backprop_point(x, y + 1, d_b);
      backprop_point(x, y - 1, -d_b);
    }
}

// -----------------------------------------------------------------------------
// DEPTH DISTORTION
// -----------------------------------------------------------------------------
// Mean over pixels of sum_{i,j} w_i w_j |z_i - z_j| over each pixel's hits.

template <typename T>
inline T loss_depth_distortion(const RenderResult<T>& fwd) {
  size_t npix = fwd.hit_offset.size();
  T total = 0;
  for (size_t idx = 0; idx < npix; ++idx) {
    int n = fwd.hit_count[idx];
    const HitRecord<T>* hits = fwd.hits.data() + fwd.hit_offset[idx];
    for (int i = 0; i < n; ++i) {
      T wi = hits[i].alpha * hits[i].trans_before;
      for (int j = i + 1; j < n; ++j) {
        T wj = hits[j].alpha * hits[j].trans_before;
        total += 2 * wi * wj * std::abs(hits[i].z - hits[j].z);
      }
    }
  }
  return total / T(npix);
}

template <typename T>
inline void loss_depth_distortion_backward(const RenderResult<T>& fwd, T d_upstream,
                                           RenderAdjoint<T>& adj) {
  size_t npix = fwd.hit_offset.size();
  T norm = d_upstream / T(npix);
  for (size_t idx = 0; idx < npix; ++idx) {
    int n = fwd.hit_count[idx];
    const HitRecord<T>* hits = fwd.hits.data() + fwd.hit_offset[idx];
    for (int i = 0; i < n; ++i) {
      T wi = hits[i].alpha * hits[i].trans_before;
      T d_wi = 0, d_zi = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        T wj = hits[j].alpha * hits[j].trans_before;
        T dz = hits[i].z - hits[j].z;
        d_wi += 2 * wj * std::abs(dz);
        d_zi += 2 * wi * wj * (dz > 0 ? T(1) : (dz < 0 ? T(-1) : T(0)));
      }
      size_t flat = static_cast<size_t>(fwd.hit_offset[idx]) + i;
      adj.d_hit_w[flat] += norm * d_wi;
      adj.d_hit_z[flat] += norm * d_zi;
    }
  }
}

// -----------------------------------------------------------------------------
// OPACITY MASK (BCE)
// -----------------------------------------------------------------------------

template <typename T>
inline T loss_opacity_mask(const ImageBuffer<T>& opacity, const std::vector<uint8_t>& mask) {
  if (opacity.data.size() != mask.size())
    throw std::invalid_argument("loss_opacity_mask: dimensions differ");
  T total = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    T o = std::clamp(opacity.data[i], T(kBceClamp), 1 - T(kBceClamp));
    total += mask[i] ? -std::log(o) : -std::log(1 - o);
  }
  return total / T(mask.size());
}

template <typename T>
inline void loss_opacity_mask_backward(const ImageBuffer<T>& opacity,
                                       const std::vector<uint8_t>& mask, T d_upstream,
                                       ImageBuffer<T>& d_opacity) {
  T norm = d_upstream / T(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) {
    T o = opacity.data[i];
    if (o <= T(kBceClamp) || o >= 1 - T(kBceClamp)) continue;  // clamped: flat
    d_opacity.data[i] += norm * (mask[i] ? -1 / o : 1 / (1 - o));
  }
}

// -----------------------------------------------------------------------------
// SEPARATION AND DELTA REGULARIZERS
// -----------------------------------------------------------------------------

template <typename T>
inline T loss_separation(const std::vector<Gaussian2D<T>>& gs) {
  if (gs.empty()) return T(0);
  T total = 0;
  for (const auto& g : gs) total += std::abs(g.gate_logit);
  return total / T(gs.size());
}

template <typename T>
inline void loss_separation_backward(const std::vector<Gaussian2D<T>>& gs, T d_upstream,
                                     std::vector<GaussianGrad<T>>& grads) {
  if (gs.empty()) return;
  T norm = d_upstream / T(gs.size());
  for (size_t i = 0; i < gs.size(); ++i) {
    T p = gs[i].gate_logit;
    grads[i].gate_logit += p > 0 ? norm : (p < 0 ? -norm : T(0));
  }
}

template <typename T>
inline T loss_delta_sq(const std::vector<Vec3<T>>& deltas) {
  if (deltas.empty()) return T(0);
  T total = 0;
  for (const auto& d : deltas) total += length_squared(d);
  return total / T(deltas.size());
}

template <typename T>
inline void loss_delta_sq_backward(const std::vector<Vec3<T>>& deltas, T d_upstream,
                                   std::vector<Vec3<T>>& d_deltas) {
  if (deltas.empty()) return;
  T norm = 2 * d_upstream / T(deltas.size());
  for (size_t i = 0; i < deltas.size(); ++i) d_deltas[i] += deltas[i] * norm;
}

// -----------------------------------------------------------------------------
// TOTALS
// -----------------------------------------------------------------------------

template <typename T>
struct Stage1Terms {
  T recon = 0, normal = 0, dist = 0, opacity = 0, sep = 0, delta_color = 0, delta_mu = 0;
};

template <typename T>
inline T total_stage1(const Stage1Terms<T>& t, const Stage1Weights<T>& w, int iter) {
  T total = t.recon + w.lambda_normal * t.normal + w.lambda_dist * t.dist +
            w.lambda_opacity * t.opacity + w.lambda_delta_color * t.delta_color +
            w.lambda_delta_mu * t.delta_mu;
  if (iter >= w.separation_start_iter) total += w.lambda_sep * t.sep;
  return total;
}

// Squared-norm penalty on the lower-hemisphere texels (texel-center direction
// with negative z).
template <typename T>
inline T loss_env_lower(const EnvironmentMap<T>& env) {
  T total = 0;
  for (int r = 0; r < env.height; ++r)
    for (int c = 0; c < env.width; ++c)
      if (env.texel_to_dir(r, c).z < 0) total += length_squared(env.at(r, c));
  return total;
}

template <typename T>
inline void loss_env_lower_backward(const EnvironmentMap<T>& env, T d_upstream,
                                    std::vector<Vec3<T>>& d_env) {
  for (int r = 0; r < env.height; ++r)
    for (int c = 0; c < env.width; ++c)
      if (env.texel_to_dir(r, c).z < 0)
        d_env[static_cast<size_t>(r) * env.width + c] += env.at(r, c) * (2 * d_upstream);
}

template <typename T>
struct Stage2Terms {
  T recon = 0;     // L_c on the splat render
  T pbr_l1 = 0;    // L1 on the shaded pixel subset
  T env_reg = 0;   // lower-hemisphere penalty
};

template <typename T>
inline T total_stage2(const Stage2Terms<T>& t, const Stage2Weights<T>& w) {
  return t.recon + t.pbr_l1 + w.lambda_env * t.env_reg;
}

}  // namespace lumikit
