// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "lumikit/bvh.hpp"
#include "lumikit/camera.hpp"
#include "lumikit/gaussian.hpp"
#include "lumikit/image.hpp"
#include "lumikit/intersect.hpp"
#include "lumikit/parallel.hpp"

namespace lumikit {

template <typename T>
struct RenderSettings {
  T alpha_min = T(1) / T(255);  // hits below this alpha are skipped
  T alpha_max = T(0.999);
  T early_exit_transmittance = T(1e-4);  // 0 disables early exit
  T cutoff_sigma = T(3);                 // <= 0 disables the radius cutoff
  bool use_bvh = true;                   // false: exact all-pairs (tests)

  static RenderSettings exact() {
    RenderSettings s;
    s.alpha_min = 0;
    s.early_exit_transmittance = 0;
    s.cutoff_sigma = 0;
    s.use_bvh = false;
    return s;
  }
};

// Indices of splats whose centers project inside the image frustum expanded
// by 3*max(su,sv), front-to-back by center depth, ties broken by index.
template <typename T>
inline std::vector<int32_t> cull_and_sort(const SplatScene<T>& scene, const Camera<T>& cam) {
  std::vector<int32_t> order;
  std::vector<T> depth(scene.size());
  order.reserve(scene.size());
  for (size_t i = 0; i < scene.size(); ++i) {
    Vec3<T> pc = cam.to_camera(scene.mu[i]);
    if (pc.z <= T(1e-8)) continue;
    T margin_world = 3 * std::max(scene.su[i], scene.sv[i]);
    T mx = margin_world * cam.fx / pc.z;
    T my = margin_world * cam.fy / pc.z;
    T px = cam.fx * pc.x / pc.z + cam.cx;
    T py = cam.fy * pc.y / pc.z + cam.cy;
    if (px < -mx || px > T(cam.width) + mx || py < -my || py > T(cam.height) + my) continue;
    depth[i] = pc.z;
    order.push_back(static_cast<int32_t>(i));
  }
  std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    return depth[a] < depth[b] || (depth[a] == depth[b] && a < b);
  });
  return order;
}

// One composited hit, retained for the backward pass.
template <typename T>
struct HitRecord {
  int32_t gauss;
  T u, v, weight;    // local coords and exp(-(u^2+v^2)/2)
  T alpha;           // opacity * weight, clamped to alpha_max
  T trans_before;    // transmittance entering this hit
  T tstar;           // ray parameter
  T z;               // camera-space depth of the hit point
  Vec3<T> p;         // world hit point
  Vec3<T> n;         // world normal, flipped toward the ray
  int8_t flip;       // +1/-1 applied to the splat normal
  int8_t clamped;    // alpha clamp active
};

// Full per-frame rasterization product: every blended attribute map plus the
// per-pixel ordered hit lists.
template <typename T>
struct RenderResult {
  ImageBuffer<T> color;       // 3
  ImageBuffer<T> albedo;      // 3
  ImageBuffer<T> rough;       // 1
  ImageBuffer<T> normal_raw;  // 3, pre-normalization
  ImageBuffer<T> normal;      // 3, unit where coverage exists
  ImageBuffer<T> depth;       // 1, blended camera z
  ImageBuffer<T> position;    // 3, blended world hit positions
  ImageBuffer<T> opacity;     // 1, accumulated alpha
  std::vector<HitRecord<T>> hits;
  std::vector<int32_t> hit_offset;  // per pixel
  std::vector<int32_t> hit_count;   // per pixel

  int width() const { return color.width; }
  int height() const { return color.height; }
};

namespace detail {

// Collects, orders and composites the hits of one camera ray. `rank` maps
// splat index to its position in the culled front-to-back order (-1 = culled).
template <typename T>
inline void composite_camera_ray(const SplatScene<T>& scene, const Camera<T>& cam,
                                 const Ray<T>& ray, const std::vector<int32_t>& rank,
                                 const std::vector<int32_t>& candidates,
                                 const RenderSettings<T>& settings,
                                 std::vector<HitRecord<T>>& out_hits) {
  T cutoff_r2 = settings.cutoff_sigma > 0 ? settings.cutoff_sigma * settings.cutoff_sigma : T(0);
  for (int32_t gi : candidates) {
    if (rank[gi] < 0) continue;
    auto hit = ray_splat_intersect(ray, scene.mu[gi], scene.frame[gi], scene.su[gi], scene.sv[gi]);
    if (!hit) continue;
    T r2 = hit->u * hit->u + hit->v * hit->v;
    if (cutoff_r2 > 0 && r2 > cutoff_r2) continue;
    T alpha_raw = scene.opacity[gi] * hit->gauss_weight;
    if (alpha_raw < settings.alpha_min) continue;
    HitRecord<T> rec;
    rec.gauss = gi;
    rec.u = hit->u;
    rec.v = hit->v;
    rec.weight = hit->gauss_weight;
    rec.clamped = alpha_raw > settings.alpha_max ? 1 : 0;
    rec.alpha = rec.clamped ? settings.alpha_max : alpha_raw;
    rec.tstar = hit->tstar;
    rec.p = hit->p;
    rec.z = cam.depth_of(hit->p);
    Vec3<T> n = scene.frame[gi].n;
    rec.flip = dot(n, ray.dir) > 0 ? -1 : 1;
    rec.n = n * T(rec.flip);
    rec.trans_before = 0;  // filled after ordering
    out_hits.push_back(rec);
  }
  std::sort(out_hits.begin(), out_hits.end(),
            [&](const HitRecord<T>& a, const HitRecord<T>& b) { return rank[a.gauss] < rank[b.gauss]; });
}

}  // namespace detail

// Rasterizes every attribute in one pass. Color blends `scene.color`; the
// remaining maps form the deferred-shading G-buffer.
template <typename T>
inline RenderResult<T> render_scene(const SplatScene<T>& scene, const Camera<T>& cam,
                                    const RenderSettings<T>& settings) {
  int w = cam.width, h = cam.height;
  RenderResult<T> out;
  out.color = ImageBuffer<T>(w, h, 3);
  out.albedo = ImageBuffer<T>(w, h, 3);
  out.rough = ImageBuffer<T>(w, h, 1);
  out.normal_raw = ImageBuffer<T>(w, h, 3);
  out.normal = ImageBuffer<T>(w, h, 3);
  out.depth = ImageBuffer<T>(w, h, 1);
  out.position = ImageBuffer<T>(w, h, 3);
  out.opacity = ImageBuffer<T>(w, h, 1);
  out.hit_offset.assign(static_cast<size_t>(w) * h, 0);
  out.hit_count.assign(static_cast<size_t>(w) * h, 0);

  std::vector<int32_t> order = cull_and_sort(scene, cam);
  std::vector<int32_t> rank(scene.size(), -1);
  for (size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int32_t>(r);

  SplatBvh<T> bvh;
  if (settings.use_bvh) bvh.build(scene, std::max(settings.cutoff_sigma, T(3)));

  std::vector<std::vector<HitRecord<T>>> per_pixel(static_cast<size_t>(w) * h);
  parallel_for(static_cast<int64_t>(w) * h, [&](int64_t idx) {
    int x = static_cast<int>(idx % w), y = static_cast<int>(idx / w);
    Ray<T> ray = pixel_ray(cam, x, y);
    thread_local std::vector<int32_t> candidates;
    candidates.clear();
    if (settings.use_bvh) {
      bvh.candidates(ray, T(1e30), candidates);
      std::sort(candidates.begin(), candidates.end());
    } else {
      candidates.resize(scene.size());
      std::iota(candidates.begin(), candidates.end(), 0);
    }
    auto& hits = per_pixel[idx];
    detail::composite_camera_ray(scene, cam, ray, rank, candidates, settings, hits);

    // Front-to-back compositing over the ordered hits.
    T trans = 1;
    Vec3<T> acc_color{}, acc_albedo{}, acc_normal{}, acc_pos{};
    T acc_rough = 0, acc_depth = 0, acc_opacity = 0;
    size_t kept = 0;
    for (auto& rec : hits) {
      rec.trans_before = trans;
      T wgt = rec.alpha * trans;
      int gi = rec.gauss;
      acc_color += scene.color[gi] * wgt;
      acc_albedo += scene.albedo[gi] * wgt;
      acc_rough += scene.rough[gi] * wgt;
      acc_normal += rec.n * wgt;
      acc_depth += rec.z * wgt;
      acc_pos += rec.p * wgt;
      acc_opacity += wgt;
      trans *= (1 - rec.alpha);
      ++kept;
      if (settings.early_exit_transmittance > 0 && trans < settings.early_exit_transmittance)
        break;
    }
    hits.resize(kept);

    out.color.set_rgb(x, y, acc_color);
    out.albedo.set_rgb(x, y, acc_albedo);
    out.rough.at(x, y)[0] = acc_rough;
    out.normal_raw.set_rgb(x, y, acc_normal);
    T nlen = length(acc_normal);
    out.normal.set_rgb(x, y, nlen > T(1e-12) ? acc_normal / nlen : Vec3<T>{});
    out.depth.at(x, y)[0] = acc_depth;
    out.position.set_rgb(x, y, acc_pos);
    out.opacity.at(x, y)[0] = acc_opacity;
  });

  int32_t offset = 0;
  for (size_t idx = 0; idx < per_pixel.size(); ++idx) {
    out.hit_offset[idx] = offset;
    out.hit_count[idx] = static_cast<int32_t>(per_pixel[idx].size());
    offset += out.hit_count[idx];
  }
  out.hits.resize(offset);
  parallel_for(static_cast<int64_t>(per_pixel.size()), [&](int64_t idx) {
    std::copy(per_pixel[idx].begin(), per_pixel[idx].end(), out.hits.begin() + out.hit_offset[idx]);
  });
  return out;
}

// Adjoints of the rendered maps plus optional per-hit adjoints coming from
// losses that consume the hit lists directly.
template <typename T>
struct RenderAdjoint {
  ImageBuffer<T> d_color, d_albedo, d_rough, d_normal, d_depth, d_position, d_opacity;
  std::vector<T> d_hit_w;        // adjoint of blending weight w_i (may be empty)
  std::vector<T> d_hit_z;        // adjoint of hit depth (may be empty)
  std::vector<Vec3<T>> d_hit_n;  // adjoint of flipped hit normal (may be empty)

  explicit RenderAdjoint(int w, int h)
      : d_color(w, h, 3),
        d_albedo(w, h, 3),
        d_rough(w, h, 1),
        d_normal(w, h, 3),
        d_depth(w, h, 1),
        d_position(w, h, 3),
        d_opacity(w, h, 1) {}
};

// Selects which parameter classes receive gradients (frozen classes skip
// their writes entirely).
struct GradMask {
  bool geometry = true;   // mu, rot, su, sv
  bool opacity = true;
  bool color = true;
  bool albedo = true;
  bool rough = true;
};

// Reverse pass through compositing and ray-splat intersection. Accumulates
// into `grads` (already sized); deterministic for any thread count via fixed
// chunk merging.
template <typename T>
inline void render_scene_backward(const SplatScene<T>& scene, const Camera<T>& cam,
                                  const RenderResult<T>& fwd, const RenderAdjoint<T>& adj,
                                  const GradMask& mask, SplatSceneGrads<T>& grads) {
  int w = cam.width, h = cam.height;
  Vec3<T> cam_fwd = cam.rot.col(2);

  int chunks = kParallelChunks;
  std::vector<SplatSceneGrads<T>> partial(chunks);
  for (auto& p : partial) p.resize_zero(scene.size());

  parallel_for_chunked(static_cast<int64_t>(w) * h, [&](int chunk, int64_t idx) {
    int count = fwd.hit_count[idx];
    if (count == 0) return;
    int x = static_cast<int>(idx % w), y = static_cast<int>(idx / w);
    Ray<T> ray = pixel_ray(cam, x, y);
    SplatSceneGrads<T>& g = partial[chunk];

    Vec3<T> d_color = adj.d_color.rgb(x, y);
    Vec3<T> d_albedo = adj.d_albedo.rgb(x, y);
    T d_rough = adj.d_rough.at(x, y)[0];
    Vec3<T> d_pos = adj.d_position.rgb(x, y);
    T d_depth = adj.d_depth.at(x, y)[0];
    T d_opacity = adj.d_opacity.at(x, y)[0];

    // Normalized-normal adjoint maps back onto the raw blended normal.
    Vec3<T> d_nraw = adj.d_normal.rgb(x, y);
    Vec3<T> raw = fwd.normal_raw.rgb(x, y);
    if (length(raw) > T(1e-12))
      d_nraw = normalize_backward(raw, d_nraw);
    else
      d_nraw = Vec3<T>{};

    const HitRecord<T>* hits = fwd.hits.data() + fwd.hit_offset[idx];
    T g_trans = 0;  // adjoint of the transmittance after the current hit
    for (int i = count - 1; i >= 0; --i) {
      const HitRecord<T>& rec = hits[i];
      size_t flat = static_cast<size_t>(fwd.hit_offset[idx]) + i;
      int gi = rec.gauss;
      T wgt = rec.alpha * rec.trans_before;

      // Adjoint of w_i via every blended attribute plus external terms.
      T v_i = dot(d_color, scene.color[gi]) + dot(d_albedo, scene.albedo[gi]) +
              d_rough * scene.rough[gi] + dot(d_nraw, rec.n) + d_depth * rec.z +
              dot(d_pos, rec.p) + d_opacity;
      if (!adj.d_hit_w.empty()) v_i += adj.d_hit_w[flat];

      // w_i = alpha_i * T_{i-1};  T_i = T_{i-1} (1 - alpha_i)
      T g_alpha = rec.trans_before * v_i - rec.trans_before * g_trans;
      T g_trans_prev = rec.alpha * v_i + (1 - rec.alpha) * g_trans;

      if (mask.color) g.color[gi] += d_color * wgt;
      if (mask.albedo) g.albedo[gi] += d_albedo * wgt;
      if (mask.rough) g.rough[gi] += d_rough * wgt;

      Vec3<T> d_hit_normal = d_nraw * wgt;
      if (!adj.d_hit_n.empty()) d_hit_normal += adj.d_hit_n[flat];
      T d_hit_depth = d_depth * wgt;
      if (!adj.d_hit_z.empty()) d_hit_depth += adj.d_hit_z[flat];
      Vec3<T> d_hit_p = d_pos * wgt + cam_fwd * d_hit_depth;  // z = fwd . (p - cam)

      // alpha = opacity * weight (zero slope where the clamp is active)
      T d_u = 0, d_v = 0;
      if (!rec.clamped) {
        if (mask.opacity) g.opacity[gi] += rec.weight * g_alpha;
        T d_weight = scene.opacity[gi] * g_alpha;
        d_u = -rec.u * rec.weight * d_weight;
        d_v = -rec.v * rec.weight * d_weight;
      }

      if (mask.geometry) {
        SplatIntersection<T> hit{rec.tstar, rec.u, rec.v, rec.weight, rec.p};
        SplatIntersectGrads<T> ig;
        ray_splat_intersect_backward(ray, scene.mu[gi], scene.frame[gi], scene.su[gi],
                                     scene.sv[gi], hit, d_u, d_v, T(0), d_hit_p, ig);
        g.mu[gi] += ig.d_mu;
        g.su[gi] += ig.d_su;
        g.sv[gi] += ig.d_sv;
        Vec3<T> d_frame_n = ig.d_n + d_hit_normal * T(rec.flip);
        Quat<T> dq = quat_to_frame_backward(scene.rot[gi], ig.d_tu, ig.d_tv, d_frame_n);
        g.rot[gi].w += dq.w;
        g.rot[gi].x += dq.x;
        g.rot[gi].y += dq.y;
        g.rot[gi].z += dq.z;
      }
      g_trans = g_trans_prev;
    }
  });

  for (auto& p : partial) grads.add(p);
}

// Spec-facing wrappers over the single-pass renderer.
template <typename T>
inline ImageBuffer<T> rasterize_color(const SplatScene<T>& scene, const Camera<T>& cam,
                                      const RenderSettings<T>& settings = {}) {
  return render_scene(scene, cam, settings).color;
}

template <typename T>
inline RenderResult<T> rasterize_gbuffer(const SplatScene<T>& scene, const Camera<T>& cam,
                                         const RenderSettings<T>& settings = {}) {
  return render_scene(scene, cam, settings);
}

}  // namespace lumikit
