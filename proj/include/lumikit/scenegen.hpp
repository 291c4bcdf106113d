// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic micro-dataset generator: analytic primitives, procedural
// environment maps and a brute-force path-traced reference renderer that is
// deliberately independent of the splat pipeline (separate intersection and
// BRDF code paths); its output is the ground truth for the tests.

#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lumikit/camera.hpp"
#include "lumikit/dataset.hpp"
#include "lumikit/envmap.hpp"
#include "lumikit/image.hpp"
#include "lumikit/parallel.hpp"
#include "lumikit/rng.hpp"

namespace lumikit {

enum class TrackKind { kStatic, kLinear, kOscillate };

template <typename T>
struct MotionTrack {
  TrackKind kind = TrackKind::kStatic;
  Vec3<T> delta{};  // full-range displacement (linear) or amplitude (oscillate)
  T freq = 1;
  T phase = 0;

  bool is_dynamic() const { return kind != TrackKind::kStatic; }

  Vec3<T> offset(T t) const {
    switch (kind) {
      case TrackKind::kLinear:
        return delta * t;
      case TrackKind::kOscillate:
        return delta * std::sin(T(2 * M_PI) * freq * t + phase);
      case TrackKind::kStatic:
      default:
        return {};
    }
  }
};

enum class PrimKind { kPlane, kBox, kSphere };

// Analytic scene element. A plane is a finite axis-aligned rectangle with +z
// normal; a box is an axis-aligned cuboid; a sphere uses half_extents.x as
// its radius.
template <typename T>
struct Primitive {
  PrimKind kind = PrimKind::kPlane;
  Vec3<T> center{};
  Vec3<T> half_extents{T(1), T(1), T(1)};
  Vec3<T> albedo{T(0.7), T(0.7), T(0.7)};
  T rough = T(0.8);
  MotionTrack<T> track;
};

template <typename T>
struct OrbitSpec {
  T radius = T(3.0);
  T height = T(1.8);
  T fov_deg = T(45);
  T azimuth_start_deg = T(-60);
  T azimuth_end_deg = T(60);
  Vec3<T> look_at{};
};

template <typename T>
struct SceneSpec {
  std::string name = "scene";
  int width = 64, height = 64;
  int frame_count = 20;
  uint64_t seed = 0;
  T static_time = 0;
  OrbitSpec<T> orbit;
  std::string env_preset = "uniform";  // or env_file
  std::string env_file;
  T env_rotation_deg = 0;
  T env_value = T(0.5);  // uniform preset level
  std::vector<Primitive<T>> primitives;
  int init_points = 1500;
};

// -----------------------------------------------------------------------------
// SPEC JSON
// -----------------------------------------------------------------------------

template <typename T>
inline SceneSpec<T> scene_spec_from_json(const nlohmann::json& j) {
  SceneSpec<T> spec;
  auto require = [&](const nlohmann::json& node, const char* field) -> const nlohmann::json& {
    if (!node.contains(field))
      throw std::invalid_argument(std::string("scene spec: missing field '") + field + "'");
    return node.at(field);
  };
  auto vec3 = [](const nlohmann::json& a) {
    return Vec3<T>{T(a.at(0).get<double>()), T(a.at(1).get<double>()), T(a.at(2).get<double>())};
  };

  spec.name = j.value("name", "scene");
  spec.width = j.value("width", 64);
  spec.height = j.value("height", 64);
  spec.frame_count = j.value("frames", 20);
  if (spec.frame_count < 1)
    throw std::invalid_argument("scene spec: field 'frames' must be >= 1");
  spec.seed = j.value("seed", 0);
  spec.static_time = T(j.value("static_time", 0.0));
  spec.init_points = j.value("init_points", 1500);

  if (j.contains("camera")) {
    const auto& c = j.at("camera");
    spec.orbit.radius = T(c.value("orbit_radius", 3.0));
    spec.orbit.height = T(c.value("height", 1.8));
    spec.orbit.fov_deg = T(c.value("fov_deg", 45.0));
    spec.orbit.azimuth_start_deg = T(c.value("azimuth_start_deg", -60.0));
    spec.orbit.azimuth_end_deg = T(c.value("azimuth_end_deg", 60.0));
    if (c.contains("look_at")) spec.orbit.look_at = vec3(c.at("look_at"));
  }

  if (j.contains("env")) {
    const auto& e = j.at("env");
    spec.env_preset = e.value("preset", "");
    spec.env_file = e.value("file", "");
    if (spec.env_preset.empty() && spec.env_file.empty())
      throw std::invalid_argument("scene spec: field 'env' needs 'preset' or 'file'");
    spec.env_rotation_deg = T(e.value("rotation_deg", 0.0));
    spec.env_value = T(e.value("value", 0.5));
  }

  for (const auto& p : require(j, "primitives")) {
    Primitive<T> prim;
    std::string kind = require(p, "type").template get<std::string>();
    if (kind == "plane")
      prim.kind = PrimKind::kPlane;
    else if (kind == "box")
      prim.kind = PrimKind::kBox;
    else if (kind == "sphere")
      prim.kind = PrimKind::kSphere;
    else
      throw std::invalid_argument("scene spec: unknown primitive type '" + kind + "'");
    prim.center = vec3(require(p, "center"));
    if (p.contains("half_extents")) {
      const auto& he = p.at("half_extents");
      if (he.size() == 2)
        prim.half_extents = {T(he.at(0).template get<double>()), T(he.at(1).template get<double>()), T(0)};
      else
        prim.half_extents = vec3(he);
    }
    if (p.contains("radius")) prim.half_extents = Vec3<T>{T(p.at("radius").template get<double>()), 0, 0};
    prim.albedo = vec3(require(p, "albedo"));
    prim.rough = T(p.value("roughness", 0.8));
    if (p.contains("track")) {
      const auto& tr = p.at("track");
      std::string tk = tr.value("kind", "static");
      if (tk == "static")
        prim.track.kind = TrackKind::kStatic;
      else if (tk == "linear")
        prim.track.kind = TrackKind::kLinear;
      else if (tk == "oscillate")
        prim.track.kind = TrackKind::kOscillate;
      else
        throw std::invalid_argument("scene spec: unknown track kind '" + tk + "'");
      if (prim.track.kind != TrackKind::kStatic) prim.track.delta = vec3(require(tr, "delta"));
      prim.track.freq = T(tr.value("freq", 1.0));
      prim.track.phase = T(tr.value("phase", 0.0));
    }
    spec.primitives.push_back(prim);
  }
  if (spec.primitives.empty())
    throw std::invalid_argument("scene spec: field 'primitives' must be non-empty");
  return spec;
}

template <typename T>
inline SceneSpec<T> load_scene_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene spec " + path);
  nlohmann::json j;
  in >> j;
  return scene_spec_from_json<T>(j);
}

// -----------------------------------------------------------------------------
// ENVIRONMENT PRESETS
// -----------------------------------------------------------------------------

// All presets are 32x16 HDR maps with a documented dominant-light texel.
template <typename T>
inline EnvironmentMap<T> envmap_preset(const std::string& name, T value = T(0.5)) {
  EnvironmentMap<T> env(32, 16);
  if (name == "uniform") {
    for (auto& t : env.texels) t = {value, value, value};
  } else if (name == "single-texel") {
    // hot texel at (row 4, col 8): oblique light from azimuth ~96 degrees
    env.at(4, 8) = {200, 200, 200};
  } else if (name == "overcast") {
    for (int r = 0; r < env.height; ++r)
      for (int c = 0; c < env.width; ++c) {
        T up = std::max(env.texel_to_dir(r, c).z, T(0));
        env.at(r, c) = Vec3<T>{T(0.35), T(0.38), T(0.42)} + Vec3<T>{T(0.5), T(0.52), T(0.58)} * up;
      }
  } else if (name == "sunset-like") {
    // warm lobe low over the horizon at (row 6, col 2) plus a cool ambient
    Vec3<T> sun_dir = env.texel_to_dir(6, 2);
    for (int r = 0; r < env.height; ++r)
      for (int c = 0; c < env.width; ++c) {
        Vec3<T> d = env.texel_to_dir(r, c);
        T lobe = std::exp(T(10) * (dot(d, sun_dir) - 1));
        env.at(r, c) =
            Vec3<T>{T(8.0), T(4.5), T(2.0)} * lobe + Vec3<T>{T(0.12), T(0.14), T(0.2)};
      }
  } else {
    throw std::invalid_argument("unknown environment preset '" + name + "'");
  }
  return env;
}

// The argmax texel each preset is built around.
inline void envmap_preset_dominant(const std::string& name, int& row, int& col) {
  if (name == "single-texel") {
    row = 4;
    col = 8;
  } else if (name == "sunset-like") {
    row = 6;
    col = 2;
  } else if (name == "overcast" || name == "uniform") {
    row = 0;  // no single dominant direction; top row by the argmax tie rule
    col = 0;
  } else {
    throw std::invalid_argument("unknown environment preset '" + name + "'");
  }
}

template <typename T>
inline EnvironmentMap<T> scene_envmap(const SceneSpec<T>& spec) {
  EnvironmentMap<T> env = spec.env_file.empty()
                              ? envmap_preset<T>(spec.env_preset, spec.env_value)
                              : read_envmap_pfm<T>(spec.env_file);
  if (spec.env_rotation_deg != T(0)) {
    // bake the rotation so the stored ground-truth map needs no extra state
    EnvironmentMap<T> rotated(env.width, env.height);
    EnvironmentMap<T> src = env;
    src.rotation = -spec.env_rotation_deg * T(M_PI) / T(180);
    for (int r = 0; r < env.height; ++r)
      for (int c = 0; c < env.width; ++c)
        rotated.at(r, c) = src.lookup(rotated.texel_to_dir(r, c));
    env = rotated;
  }
  return env;
}

// -----------------------------------------------------------------------------
// ANALYTIC PRIMITIVE INTERSECTION
// -----------------------------------------------------------------------------

template <typename T>
struct PrimHit {
  T t;
  Vec3<T> point;
  Vec3<T> normal;  // outward, unit
  int prim = -1;
};

namespace refdetail {

template <typename T>
inline std::optional<PrimHit<T>> hit_primitive(const Primitive<T>& prim, int index,
                                               const Ray<T>& ray, T time) {
  Vec3<T> c = prim.center + prim.track.offset(time);
  switch (prim.kind) {
    case PrimKind::kPlane: {
      if (std::abs(ray.dir.z) < T(1e-12)) return std::nullopt;
      T t = (c.z - ray.origin.z) / ray.dir.z;
      if (t <= T(1e-6)) return std::nullopt;
      Vec3<T> p = ray.origin + ray.dir * t;
      if (std::abs(p.x - c.x) > prim.half_extents.x ||
          std::abs(p.y - c.y) > prim.half_extents.y)
        return std::nullopt;
      return PrimHit<T>{t, p, {0, 0, 1}, index};
    }
    case PrimKind::kBox: {
      Vec3<T> lo = c - prim.half_extents, hi = c + prim.half_extents;
      T t0 = T(1e-6), t1 = T(1e30);
      int axis = -1;
      bool from_lo = false;
      for (int a = 0; a < 3; ++a) {
        T inv = T(1) / ray.dir[a];
        T ta = (lo[a] - ray.origin[a]) * inv;
        T tb = (hi[a] - ray.origin[a]) * inv;
        bool swapped = ta > tb;
        if (swapped) std::swap(ta, tb);
        if (ta > t0) {
          t0 = ta;
          axis = a;
          from_lo = !swapped;
        }
        t1 = std::min(t1, tb);
        if (t0 > t1) return std::nullopt;
      }
      if (axis < 0) return std::nullopt;  // origin inside the box
      Vec3<T> n{};
      n[axis] = from_lo ? T(-1) : T(1);
      return PrimHit<T>{t0, ray.origin + ray.dir * t0, n, index};
    }
    case PrimKind::kSphere:
    default: {
      T radius = prim.half_extents.x;
      Vec3<T> oc = ray.origin - c;
      T b = dot(oc, ray.dir);
      T disc = b * b - (length_squared(oc) - radius * radius);
      if (disc < 0) return std::nullopt;
      T sq = std::sqrt(disc);
      T t = -b - sq;
      if (t <= T(1e-6)) t = -b + sq;
      if (t <= T(1e-6)) return std::nullopt;
      Vec3<T> p = ray.origin + ray.dir * t;
      return PrimHit<T>{t, p, (p - c) / radius, index};
    }
  }
}

template <typename T>
inline std::optional<PrimHit<T>> closest_hit(const std::vector<Primitive<T>>& prims,
                                             const Ray<T>& ray, T time) {
  std::optional<PrimHit<T>> best;
  for (size_t i = 0; i < prims.size(); ++i) {
    auto hit = hit_primitive(prims[i], static_cast<int>(i), ray, time);
    if (hit && (!best || hit->t < best->t)) best = hit;
  }
  return best;
}

template <typename T>
inline bool any_hit(const std::vector<Primitive<T>>& prims, const Ray<T>& ray, T time,
                    T max_t = T(1e30)) {
  for (size_t i = 0; i < prims.size(); ++i) {
    auto hit = hit_primitive(prims[i], static_cast<int>(i), ray, time);
    if (hit && hit->t < max_t) return true;
  }
  return false;
}

// Independent BRDF evaluation: same simplified Disney model as the splat
// pipeline but written through the combined Smith visibility form rather
// than the lambda form, as a genuinely separate code path.
template <typename T>
inline Vec3<T> reference_brdf(const Vec3<T>& albedo, T rough, const Vec3<T>& n,
                              const Vec3<T>& wi, const Vec3<T>& wo) {
  Vec3<T> f = albedo * T(1.0 / M_PI);
  T mu_i = dot(wi, n), mu_o = dot(wo, n);
  if (mu_i <= 0 || mu_o <= 0) return f;
  Vec3<T> h = normalize(wi + wo);
  T a = rough * rough;
  T a2 = a * a;
  T nh = dot(n, h);
  T d = a2 / (T(M_PI) * std::pow(nh * nh * (a2 - 1) + 1, T(2)));
  T voh = std::clamp(dot(wo, h), T(0), T(1));
  T fresnel = T(0.04) + T(0.96) * std::pow(1 - voh, T(5));
  // height-correlated Smith, folded with the 1/(4 mu_i mu_o) denominator
  T vis_denom = mu_o * std::sqrt(a2 + (1 - a2) * mu_i * mu_i) +
                mu_i * std::sqrt(a2 + (1 - a2) * mu_o * mu_o);
  T vis = vis_denom > T(0) ? T(0.5) / vis_denom : T(0);
  // guard matching the pipeline's floored 4 mu_i mu_o denominator
  if (4 * mu_i * mu_o < T(kBrdfDenomMin)) return f;
  T spec = d * fresnel * vis;
  return f + Vec3<T>{spec, spec, spec};
}

}  // namespace refdetail

// Rendering quality of the reference path tracer: env texels are subdivided
// sub x sub for direct light; indirect uses a hemisphere grid of
// ind_theta x ind_phi directions with a one-bounce direct evaluation.
struct ReferenceQuality {
  int direct_sub = 2;
  int ind_theta = 8, ind_phi = 16;
  int bounce_sub = 1;

  static ReferenceQuality draft() { return {1, 0, 0, 1}; }
  static ReferenceQuality standard() { return {2, 8, 16, 1}; }
  // full 64x256 directions over the sphere for the direct term
  static ReferenceQuality oracle() { return {4, 16, 32, 1}; }
};

namespace refdetail {

// Direct radiance leaving point x toward wo (quadrature over env texels).
template <typename T>
inline Vec3<T> direct_light(const std::vector<Primitive<T>>& prims, const EnvironmentMap<T>& env,
                            const Vec3<T>& x, const Vec3<T>& n, const Vec3<T>& wo,
                            const Vec3<T>& albedo, T rough, T time, int sub) {
  Vec3<T> out{};
  Vec3<T> origin = x + n * T(1e-4);
  for (int row = 0; row < env.height; ++row) {
    T theta0 = T(row) * T(M_PI) / env.height;
    T dtheta = T(M_PI) / env.height / sub;
    for (int col = 0; col < env.width; ++col) {
      const Vec3<T>& radiance = env.at(row, col);
      if (radiance.x + radiance.y + radiance.z <= T(0)) continue;
      T phi0 = T(col) * T(2 * M_PI) / env.width;
      T dphi = T(2 * M_PI) / env.width / sub;
      for (int si = 0; si < sub; ++si)
        for (int sj = 0; sj < sub; ++sj) {
          T theta = theta0 + (T(si) + T(0.5)) * dtheta;
          T phi = phi0 + (T(sj) + T(0.5)) * dphi;
          T st = std::sin(theta);
          Vec3<T> w{st * std::cos(phi), st * std::sin(phi), std::cos(theta)};
          T cos_i = dot(w, n);
          if (cos_i <= 0) continue;
          T dw = (std::cos(theta - dtheta / 2) - std::cos(theta + dtheta / 2)) * dphi;
          if (any_hit(prims, Ray<T>{origin, w}, time)) continue;
          out += reference_brdf(albedo, rough, n, w, wo) * radiance * (cos_i * dw);
        }
    }
  }
  return out;
}

}  // namespace refdetail

// Brute-force direct + single-bounce render of the analytic scene. Linear
// RGB; background black.
template <typename T>
inline ImageBuffer<T> reference_render(const SceneSpec<T>& spec, const EnvironmentMap<T>& env,
                                       const Camera<T>& cam, T time,
                                       const ReferenceQuality& quality,
                                       ImageBuffer<T>* out_albedo = nullptr,
                                       ImageBuffer<T>* out_rough = nullptr,
                                       ImageBuffer<T>* out_normal = nullptr,
                                       std::vector<uint8_t>* out_mask = nullptr) {
  int w = cam.width, h = cam.height;
  ImageBuffer<T> img(w, h, 3);
  if (out_albedo) *out_albedo = ImageBuffer<T>(w, h, 3);
  if (out_rough) *out_rough = ImageBuffer<T>(w, h, 1);
  if (out_normal) *out_normal = ImageBuffer<T>(w, h, 3);
  if (out_mask) out_mask->assign(static_cast<size_t>(w) * h, 0);
  const auto& prims = spec.primitives;

  parallel_for(static_cast<int64_t>(w) * h, [&](int64_t idx) {
    int x = static_cast<int>(idx % w), y = static_cast<int>(idx / w);
    Ray<T> ray = pixel_ray(cam, x, y);
    auto hit = refdetail::closest_hit(prims, ray, time);
    if (!hit) return;
    const Primitive<T>& prim = prims[hit->prim];
    Vec3<T> n = dot(hit->normal, ray.dir) > 0 ? -hit->normal : hit->normal;
    Vec3<T> wo = -ray.dir;

    Vec3<T> color = refdetail::direct_light(prims, env, hit->point, n, wo, prim.albedo,
                                            prim.rough, time, quality.direct_sub);

    // one-bounce indirect over a hemisphere grid
    if (quality.ind_theta > 0) {
      Vec3<T> b1, b2;
      basis_from_normal(n, b1, b2);
      T dtheta = T(M_PI / 2) / quality.ind_theta;
      T dphi = T(2 * M_PI) / quality.ind_phi;
      Vec3<T> origin = hit->point + n * T(1e-4);
      for (int i = 0; i < quality.ind_theta; ++i) {
        T theta = (T(i) + T(0.5)) * dtheta;
        T st = std::sin(theta), ct = std::cos(theta);
        for (int j = 0; j < quality.ind_phi; ++j) {
          T phi = (T(j) + T(0.5)) * dphi;
          Vec3<T> wdir = b1 * (st * std::cos(phi)) + b2 * (st * std::sin(phi)) + n * ct;
          auto bounce = refdetail::closest_hit(prims, Ray<T>{origin, wdir}, time);
          if (!bounce) continue;
          const Primitive<T>& bprim = prims[bounce->prim];
          Vec3<T> bn = dot(bounce->normal, wdir) > 0 ? -bounce->normal : bounce->normal;
          Vec3<T> l_bounce =
              refdetail::direct_light(prims, env, bounce->point, bn, -wdir, bprim.albedo,
                                      bprim.rough, time, quality.bounce_sub);
          T dw = (std::cos(theta - dtheta / 2) - std::cos(theta + dtheta / 2)) * dphi;
          color += refdetail::reference_brdf(prim.albedo, prim.rough, n, wdir, wo) * l_bounce *
                   (ct * dw);
        }
      }
    }

    img.set_rgb(x, y, color);
    if (out_albedo) out_albedo->set_rgb(x, y, prim.albedo);
    if (out_rough) out_rough->at(x, y)[0] = prim.rough;
    if (out_normal) out_normal->set_rgb(x, y, n);
    if (out_mask) (*out_mask)[idx] = 1;
  });
  return img;
}

// -----------------------------------------------------------------------------
// DATASET GENERATION
// -----------------------------------------------------------------------------

namespace refdetail {

template <typename T>
inline T primitive_area(const Primitive<T>& p) {
  switch (p.kind) {
    case PrimKind::kPlane:
      return 4 * p.half_extents.x * p.half_extents.y;
    case PrimKind::kBox: {
      const Vec3<T>& e = p.half_extents;
      return 8 * (e.x * e.y + e.y * e.z + e.z * e.x);
    }
    case PrimKind::kSphere:
    default:
      return 4 * T(M_PI) * p.half_extents.x * p.half_extents.x;
  }
}

template <typename T>
inline void sample_surface(const Primitive<T>& p, Rng& rng, Vec3<T>& point, Vec3<T>& normal) {
  switch (p.kind) {
    case PrimKind::kPlane: {
      point = p.center + Vec3<T>{T(rng.uniform(-1.0, 1.0)) * p.half_extents.x,
                                 T(rng.uniform(-1.0, 1.0)) * p.half_extents.y, T(0)};
      normal = {0, 0, 1};
      return;
    }
    case PrimKind::kBox: {
      const Vec3<T>& e = p.half_extents;
      T areas[3] = {e.y * e.z, e.x * e.z, e.x * e.y};  // per axis pair
      T total = areas[0] + areas[1] + areas[2];
      T pick = T(rng.next_double()) * total;
      int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
      T sign = rng.next_below(2) ? T(1) : T(-1);
      Vec3<T> local{T(rng.uniform(-1.0, 1.0)) * e.x, T(rng.uniform(-1.0, 1.0)) * e.y,
                    T(rng.uniform(-1.0, 1.0)) * e.z};
      local[axis] = sign * e[axis];
      normal = {};
      normal[axis] = sign;
      point = p.center + local;
      return;
    }
    case PrimKind::kSphere:
    default: {
      T z = T(rng.uniform(-1.0, 1.0));
      T phi = T(rng.uniform(0.0, 2.0 * M_PI));
      T r = std::sqrt(std::max(T(0), 1 - z * z));
      normal = {r * std::cos(phi), r * std::sin(phi), z};
      point = p.center + normal * p.half_extents.x;
      return;
    }
  }
}

}  // namespace refdetail

// Orbit camera for frame k of n: azimuth interpolated across the arc, one
// timestep per view.
template <typename T>
inline Camera<T> orbit_camera(const SceneSpec<T>& spec, int frame, T time) {
  T alpha = spec.frame_count > 1 ? T(frame) / T(spec.frame_count - 1) : T(0);
  T az = (spec.orbit.azimuth_start_deg +
          (spec.orbit.azimuth_end_deg - spec.orbit.azimuth_start_deg) * alpha) *
         T(M_PI) / T(180);
  Vec3<T> eye{spec.orbit.look_at.x + spec.orbit.radius * std::cos(az),
              spec.orbit.look_at.y + spec.orbit.radius * std::sin(az),
              spec.orbit.look_at.z + spec.orbit.height};
  return look_at_camera<T>(eye, spec.orbit.look_at, {0, 0, 1}, spec.orbit.fov_deg, spec.width,
                           spec.height, time);
}

// Renders the dynamic and static variants of a scene; every frame carries
// full ground truth. Deterministic per (spec, seed).
template <typename T>
inline void gen_scene(const SceneSpec<T>& spec, uint64_t seed, const ReferenceQuality& quality,
                      Dataset<T>& dynamic_out, Dataset<T>& static_out) {
  EnvironmentMap<T> env = scene_envmap(spec);

  auto render_variant = [&](Dataset<T>& out, bool is_static) {
    out = Dataset<T>{};
    for (int f = 0; f < spec.frame_count; ++f) {
      T cam_time = spec.frame_count > 1 ? T(f) / T(spec.frame_count - 1) : T(0);
      T scene_time = is_static ? spec.static_time : cam_time;
      Camera<T> cam = orbit_camera(spec, f, is_static ? spec.static_time : cam_time);
      ImageBuffer<T> albedo, rough, normal;
      std::vector<uint8_t> mask;
      ImageBuffer<T> frame =
          reference_render(spec, env, cam, scene_time, quality, &albedo, &rough, &normal, &mask);
      out.frames.push_back(std::move(frame));
      out.cameras.push_back(cam);
      out.masks.push_back(std::move(mask));
      out.gt_albedo.push_back(std::move(albedo));
      out.gt_rough.push_back(std::move(rough));
      out.gt_normal.push_back(std::move(normal));
    }
    out.gt_env = env;
    out.has_gt_env = true;

    // surface-sampled initialization at the canonical (t = 0) configuration
    Rng rng(seed ^ spec.seed, 0x1a17);
    T total_area = 0;
    for (const auto& p : spec.primitives) total_area += refdetail::primitive_area(p);
    for (int i = 0; i < spec.init_points; ++i) {
      T pick = T(rng.next_double()) * total_area;
      size_t chosen = 0;
      T acc = 0;
      for (size_t pi = 0; pi < spec.primitives.size(); ++pi) {
        acc += refdetail::primitive_area(spec.primitives[pi]);
        if (pick < acc) {
          chosen = pi;
          break;
        }
      }
      Vec3<T> point, normal;
      refdetail::sample_surface(spec.primitives[chosen], rng, point, normal);
      point += spec.primitives[chosen].track.offset(is_static ? spec.static_time : T(0));
      out.init_points.push_back(point);
      out.init_normals.push_back(normal);
      out.init_dynamic.push_back(spec.primitives[chosen].track.is_dynamic() ? 1 : 0);
    }
    out.suggested_scale = std::sqrt(total_area / T(spec.init_points)) * T(0.7);
  };

  render_variant(dynamic_out, false);
  render_variant(static_out, true);
}

}  // namespace lumikit
