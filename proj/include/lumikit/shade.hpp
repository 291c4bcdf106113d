// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "lumikit/brdf.hpp"
#include "lumikit/bvh.hpp"
#include "lumikit/envmap.hpp"
#include "lumikit/gaussian.hpp"
#include "lumikit/intersect.hpp"
#include "lumikit/parallel.hpp"
#include "lumikit/rasterize.hpp"
#include "lumikit/sampling.hpp"

namespace lumikit {

enum class IndirectMode { kOff, kStage1Colors, kPbrColors };

template <typename T>
struct ShadeOptions {
  int n_rays = 64;
  IndirectMode indirect = IndirectMode::kStage1Colors;
  bool enable_specular = true;
  T trace_eps = T(1e-3);      // self-intersection offset along the normal
  T opacity_threshold = T(0.5);
  int pbr_indirect_rays = 16;  // per-hit samples in kPbrColors mode
  T alpha_min = T(1) / T(255);
  T alpha_max = T(0.999);
  T early_exit_transmittance = T(1e-4);
  T cutoff_sigma = T(3);  // <= 0 disables (exact mode)
  bool use_bvh = true;

  static ShadeOptions exact() {
    ShadeOptions o;
    o.alpha_min = 0;
    o.early_exit_transmittance = 0;
    o.cutoff_sigma = 0;
    o.use_bvh = false;
    return o;
  }
};

template <typename T>
struct TraceHitRec {
  int32_t gauss;
  T u, v, weight, alpha;
  T trans_before;
  T tstar;
  int8_t clamped;
};

template <typename T>
struct TraceOutput {
  T vis = 1;          // accumulated transmittance
  Vec3<T> l_ind{};    // composited radiance along the ray
};

namespace detail {

template <typename T>
inline void collect_trace_hits(const SplatScene<T>& scene, const SplatBvh<T>* bvh,
                               const Ray<T>& ray, const ShadeOptions<T>& opts,
                               std::vector<TraceHitRec<T>>& hits, size_t base) {
  thread_local std::vector<int32_t> candidates;
  candidates.clear();
  if (bvh) {
    bvh->candidates(ray, T(1e30), candidates);
    std::sort(candidates.begin(), candidates.end());
  } else {
    candidates.resize(scene.size());
    std::iota(candidates.begin(), candidates.end(), 0);
  }
  T cutoff_r2 = opts.cutoff_sigma > 0 ? opts.cutoff_sigma * opts.cutoff_sigma : T(0);
  for (int32_t gi : candidates) {
    auto hit = ray_splat_intersect(ray, scene.mu[gi], scene.frame[gi], scene.su[gi], scene.sv[gi]);
    if (!hit) continue;
    T r2 = hit->u * hit->u + hit->v * hit->v;
    if (cutoff_r2 > 0 && r2 > cutoff_r2) continue;
    T alpha_raw = scene.opacity[gi] * hit->gauss_weight;
    if (alpha_raw < opts.alpha_min) continue;
    TraceHitRec<T> rec;
    rec.gauss = gi;
    rec.u = hit->u;
    rec.v = hit->v;
    rec.weight = hit->gauss_weight;
    rec.clamped = alpha_raw > opts.alpha_max ? 1 : 0;
    rec.alpha = rec.clamped ? opts.alpha_max : alpha_raw;
    rec.tstar = hit->tstar;
    rec.trans_before = 0;
    hits.push_back(rec);
  }
  std::sort(hits.begin() + base, hits.end(),
            [](const TraceHitRec<T>& a, const TraceHitRec<T>& b) {
              return a.tstar < b.tstar || (a.tstar == b.tstar && a.gauss < b.gauss);
            });
}

// Outgoing radiance of one splat hit under the environment alone, used for
// indirect light at inference. Single bounce: no occlusion, no recursion.
template <typename T>
inline Vec3<T> pbr_hit_color(const SplatScene<T>& scene, int32_t gi, const Vec3<T>& wo,
                             const EnvironmentMap<T>& env, const ShadeOptions<T>& opts,
                             uint64_t seed) {
  Vec3<T> n = scene.frame[gi].n;
  if (dot(n, wo) < 0) n = -n;
  Rng rng(seed, 0x70627200u ^ static_cast<uint64_t>(gi));
  auto samples = stratified_hemisphere(n, opts.pbr_indirect_rays, rng);
  Vec3<T> acc{};
  for (const auto& s : samples) {
    T cos_i = dot(s.dir, n);
    if (cos_i <= 0) continue;
    Vec3<T> f = brdf_eval(scene.albedo[gi], scene.rough[gi], n, s.dir, wo, opts.enable_specular);
    acc += f * env.lookup(s.dir) * cos_i;
  }
  return acc * (T(2 * M_PI) / T(samples.size()));
}

}  // namespace detail

// Traces one ray through the splats, returning accumulated transmittance
// (soft visibility) and alpha-composited radiance. During training the
// radiance uses canonical stage-1 colors; at inference it can use per-hit
// PBR colors instead.
template <typename T>
inline TraceOutput<T> trace_ray(const SplatScene<T>& scene, const SplatBvh<T>* bvh,
                                const Ray<T>& ray, const EnvironmentMap<T>* env,
                                const ShadeOptions<T>& opts, IndirectMode mode,
                                std::vector<TraceHitRec<T>>* hit_store) {
  thread_local std::vector<TraceHitRec<T>> local_hits;
  std::vector<TraceHitRec<T>>& hits = hit_store ? *hit_store : local_hits;
  size_t base = hits.size();
  if (!hit_store) {
    hits.clear();
    base = 0;
  }
  detail::collect_trace_hits(scene, bvh, ray, opts, hits, base);

  TraceOutput<T> out;
  T trans = 1;
  size_t kept = base;
  for (size_t i = base; i < hits.size(); ++i) {
    TraceHitRec<T>& rec = hits[i];
    rec.trans_before = trans;
    T w = rec.alpha * trans;
    if (mode == IndirectMode::kStage1Colors) {
      out.l_ind += scene.canon_color[rec.gauss] * w;
    } else if (mode == IndirectMode::kPbrColors && env) {
      out.l_ind +=
          detail::pbr_hit_color(scene, rec.gauss, -ray.dir, *env, opts, 0x1bd17ec7ull) * w;
    }
    trans *= 1 - rec.alpha;
    if (i != kept) hits[kept] = rec;
    ++kept;
    if (opts.early_exit_transmittance > 0 && trans < opts.early_exit_transmittance) break;
  }
  hits.resize(kept);
  out.vis = trans;
  return out;
}

// Spec-facing helpers.
template <typename T>
inline T trace_visibility(const Vec3<T>& x, const Vec3<T>& dir, const SplatScene<T>& scene,
                          const SplatBvh<T>* bvh, const ShadeOptions<T>& opts) {
  Ray<T> ray{x, dir};
  return trace_ray<T>(scene, bvh, ray, nullptr, opts, IndirectMode::kOff, nullptr).vis;
}

template <typename T>
inline Vec3<T> trace_indirect(const Vec3<T>& x, const Vec3<T>& dir, const SplatScene<T>& scene,
                              const SplatBvh<T>* bvh, const EnvironmentMap<T>* env,
                              const ShadeOptions<T>& opts, IndirectMode mode) {
  Ray<T> ray{x, dir};
  return trace_ray<T>(scene, bvh, ray, env, opts, mode, nullptr).l_ind;
}

// Saved state of one shaded pixel, enough to replay the estimator backward.
template <typename T>
struct ShadeSampleCtx {
  HemisphereSample<T> hs;
  int texel;
  T vis;
  Vec3<T> l_ind;
  T cos_i;
  int32_t hit_begin, hit_count;
};

template <typename T>
struct ShadePixelCtx {
  Vec3<T> x, n, albedo;
  T rough;
  Vec3<T> wo;
  std::vector<ShadeSampleCtx<T>> samples;
  std::vector<TraceHitRec<T>> hits;
};

// Monte Carlo estimate of the rendering equation at one shading point:
// (2 pi / N) sum f_r . (V L_env + L_ind) (w . n).
template <typename T>
inline Vec3<T> shade_point(const Vec3<T>& x, const Vec3<T>& n, const Vec3<T>& albedo, T rough,
                           const Vec3<T>& cam_pos, const EnvironmentMap<T>& env,
                           const SplatScene<T>& scene, const SplatBvh<T>* bvh,
                           const ShadeOptions<T>& opts, Rng& rng, ShadePixelCtx<T>* ctx) {
  Vec3<T> wo = normalize(cam_pos - x);
  Vec3<T> origin = x + n * opts.trace_eps;
  auto samples = stratified_hemisphere(n, opts.n_rays, rng);
  if (ctx) {
    ctx->x = x;
    ctx->n = n;
    ctx->albedo = albedo;
    ctx->rough = rough;
    ctx->wo = wo;
    ctx->samples.clear();
    ctx->hits.clear();
  }

  Vec3<T> acc{};
  for (const auto& s : samples) {
    T cos_i = dot(s.dir, n);
    ShadeSampleCtx<T> sc;
    sc.hs = s;
    sc.cos_i = cos_i;
    sc.hit_begin = ctx ? static_cast<int32_t>(ctx->hits.size()) : 0;
    sc.hit_count = 0;
    if (cos_i > 0) {
      Ray<T> ray{origin, s.dir};
      TraceOutput<T> tr = trace_ray<T>(scene, bvh, ray, &env, opts, opts.indirect,
                                       ctx ? &ctx->hits : nullptr);
      sc.texel = env.texel_index(s.dir);
      sc.vis = tr.vis;
      sc.l_ind = tr.l_ind;
      Vec3<T> f = brdf_eval(albedo, rough, n, s.dir, wo, opts.enable_specular);
      Vec3<T> radiance = env.texels[sc.texel] * tr.vis + tr.l_ind;
      acc += f * radiance * cos_i;
    } else {
      sc.texel = 0;
      sc.vis = 1;
      sc.l_ind = Vec3<T>{};
    }
    if (ctx) {
      sc.hit_count = static_cast<int32_t>(ctx->hits.size()) - sc.hit_begin;
      ctx->samples.push_back(sc);
    }
  }
  return acc * (T(2 * M_PI) / T(samples.size()));
}

template <typename T>
struct ShadePixelGrads {
  Vec3<T> d_x{}, d_n{}, d_albedo{};
  T d_rough = 0;
};

// Adjoint of shade_point. Environment gradients accumulate per texel into
// d_env; splat opacity/color gradients go into sgrads (geometry is left
// untouched unless mask.geometry is set). Only kStage1Colors /kOff indirect
// modes are differentiable.
template <typename T>
inline void shade_point_backward(const Vec3<T>& cam_pos, const EnvironmentMap<T>& env,
                                 const SplatScene<T>& scene, const ShadeOptions<T>& opts,
                                 const ShadePixelCtx<T>& ctx, const Vec3<T>& d_c,
                                 const GradMask& mask, ShadePixelGrads<T>& pg,
                                 SplatSceneGrads<T>& sgrads, std::vector<Vec3<T>>& d_env) {
  T scale = T(2 * M_PI) / T(ctx.samples.size());
  Vec3<T> d_out = d_c * scale;
  Vec3<T> d_wo_total{};

  for (const auto& sc : ctx.samples) {
    if (sc.cos_i <= 0) continue;
    const Vec3<T>& w = sc.hs.dir;
    Vec3<T> l_env = env.texels[sc.texel];
    Vec3<T> radiance = l_env * sc.vis + sc.l_ind;
    Vec3<T> f = brdf_eval(ctx.albedo, ctx.rough, ctx.n, w, ctx.wo, opts.enable_specular);

    // contribution = f * radiance * cos_i (per channel)
    Vec3<T> d_f = d_out * radiance * sc.cos_i;
    Vec3<T> d_radiance = d_out * f * sc.cos_i;
    T d_cos = dot(d_out, f * radiance);

    // radiance = L_env * V + L_ind
    T d_vis = dot(d_radiance, l_env);
    d_env[sc.texel] += d_radiance * sc.vis;
    Vec3<T> d_lind = d_radiance;

    // BRDF chain
    BrdfGrads<T> bg;
    brdf_eval_backward(ctx.albedo, ctx.rough, ctx.n, w, ctx.wo, opts.enable_specular, d_f, bg);
    pg.d_albedo += bg.d_albedo;
    pg.d_rough += bg.d_rough;
    pg.d_n += bg.d_n;
    d_wo_total += bg.d_wo;
    Vec3<T> d_w = bg.d_wi;

    // cos_i = dot(w, n)
    d_w += ctx.n * d_cos;
    pg.d_n += w * d_cos;

    // trace backward over this sample's hits
    Vec3<T> origin = ctx.x + ctx.n * opts.trace_eps;
    Ray<T> ray{origin, w};
    Vec3<T> d_origin_total{};
    if (sc.hit_count > 0) {
      T g_trans = d_vis;  // vis is the final transmittance
      for (int i = sc.hit_count - 1; i >= 0; --i) {
        const TraceHitRec<T>& rec = ctx.hits[sc.hit_begin + i];
        int gi = rec.gauss;
        T v_i = 0;
        if (opts.indirect == IndirectMode::kStage1Colors)
          v_i = dot(d_lind, scene.canon_color[gi]);
        T g_alpha = rec.trans_before * v_i - rec.trans_before * g_trans;
        T g_trans_prev = rec.alpha * v_i + (1 - rec.alpha) * g_trans;
        if (opts.indirect == IndirectMode::kStage1Colors && mask.color)
          sgrads.canon_color[gi] += d_lind * (rec.alpha * rec.trans_before);

        // A clamped alpha has zero slope in every upstream quantity, so the
        // whole intersection chain is skipped for such hits.
        if (!rec.clamped) {
          if (mask.opacity) sgrads.opacity[gi] += rec.weight * g_alpha;
          T d_weight = scene.opacity[gi] * g_alpha;
          T d_u = -rec.u * rec.weight * d_weight;
          T d_v = -rec.v * rec.weight * d_weight;
          Vec3<T> p = ray.origin + ray.dir * rec.tstar;
          SplatIntersection<T> hit{rec.tstar, rec.u, rec.v, rec.weight, p};
          SplatIntersectGrads<T> ig;
          ray_splat_intersect_backward(ray, scene.mu[gi], scene.frame[gi], scene.su[gi],
                                       scene.sv[gi], hit, d_u, d_v, T(0), Vec3<T>{}, ig);
          if (mask.geometry) {
            sgrads.mu[gi] += ig.d_mu;
            sgrads.su[gi] += ig.d_su;
            sgrads.sv[gi] += ig.d_sv;
            Quat<T> dq = quat_to_frame_backward(scene.rot[gi], ig.d_tu, ig.d_tv, ig.d_n);
            sgrads.rot[gi].w += dq.w;
            sgrads.rot[gi].x += dq.x;
            sgrads.rot[gi].y += dq.y;
            sgrads.rot[gi].z += dq.z;
          }
          d_origin_total += ig.d_origin;
          d_w += ig.d_dir;
        }
        g_trans = g_trans_prev;
      }
    }

    // origin = x + n * eps
    pg.d_x += d_origin_total;
    pg.d_n += d_origin_total * opts.trace_eps;

    // w = b1 lx + b2 ly + n lz
    pg.d_n += hemisphere_dir_backward(ctx.n, sc.hs, d_w);
  }

  // wo = normalize(cam - x)
  Vec3<T> d_diff = normalize_backward(cam_pos - ctx.x, d_wo_total);
  pg.d_x -= d_diff;
}

// Shades every covered G-buffer pixel; background stays black. Per-pixel RNG
// streams make the result independent of scheduling.
template <typename T>
inline ImageBuffer<T> shade_image(const SplatScene<T>& scene, const RenderResult<T>& gbuf,
                                  const EnvironmentMap<T>& env, const Camera<T>& cam,
                                  const ShadeOptions<T>& opts, uint64_t seed) {
  ImageBuffer<T> out(gbuf.width(), gbuf.height(), 3);
  SplatBvh<T> bvh;
  if (opts.use_bvh) bvh.build(scene, std::max(opts.cutoff_sigma, T(3)));
  const SplatBvh<T>* bvh_ptr = opts.use_bvh ? &bvh : nullptr;
  int w = gbuf.width();
  parallel_for(static_cast<int64_t>(w) * gbuf.height(), [&](int64_t idx) {
    int x = static_cast<int>(idx % w), y = static_cast<int>(idx / w);
    if (gbuf.opacity.at(x, y)[0] <= opts.opacity_threshold) return;
    Vec3<T> n = gbuf.normal.rgb(x, y);
    if (length(n) < T(0.5)) return;
    Rng rng(seed, static_cast<uint64_t>(idx));
    Vec3<T> c = shade_point<T>(gbuf.position.rgb(x, y), n, gbuf.albedo.rgb(x, y),
                               gbuf.rough.at(x, y)[0], cam.pos, env, scene, bvh_ptr, opts, rng,
                               nullptr);
    out.set_rgb(x, y, c);
  });
  return out;
}

}  // namespace lumikit
