// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

#include "json.hpp"
#include "lumikit/math.hpp"

namespace lumikit {

template <typename T>
struct Ray {
  Vec3<T> origin;
  Vec3<T> dir;  // unit length
};

// Pinhole camera. world_from_cam maps camera space (x right, y down, z
// forward) into world space; depth values are camera-space z.
template <typename T>
struct Camera {
  Mat3<T> rot = Mat3<T>::identity();  // world-from-camera rotation
  Vec3<T> pos;                        // camera center in world space
  T fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 0, height = 0;
  T time = 0;  // in [0,1]

  Vec3<T> forward() const { return rot.col(2); }

  Vec3<T> to_camera(const Vec3<T>& p_world) const { return rot.transposed() * (p_world - pos); }

  T depth_of(const Vec3<T>& p_world) const { return dot(rot.col(2), p_world - pos); }

  // Projects a world point to pixel coordinates; returns false behind camera.
  bool project(const Vec3<T>& p_world, Vec2<T>& px, T& depth) const {
    Vec3<T> pc = to_camera(p_world);
    depth = pc.z;
    if (pc.z <= T(1e-8)) return false;
    px = {fx * pc.x / pc.z + cx, fy * pc.y / pc.z + cy};
    return true;
  }
};

// Ray through the center of pixel (ix, iy). Throws on out-of-bounds pixels.
template <typename T>
inline Ray<T> pixel_ray(const Camera<T>& cam, int ix, int iy) {
  if (ix < 0 || iy < 0 || ix >= cam.width || iy >= cam.height)
    throw std::out_of_range("pixel_ray: pixel (" + std::to_string(ix) + "," + std::to_string(iy) +
                            ") outside image");
  Vec3<T> dir_cam{(T(ix) + T(0.5) - cam.cx) / cam.fx, (T(iy) + T(0.5) - cam.cy) / cam.fy, T(1)};
  return {cam.pos, normalize(cam.rot * dir_cam)};
}

// Camera looking from `eye` toward `target`, `up` approximately world up.
template <typename T>
inline Camera<T> look_at_camera(const Vec3<T>& eye, const Vec3<T>& target, const Vec3<T>& up,
                                T fov_y_deg, int width, int height, T time = 0) {
  Vec3<T> fwd = normalize(target - eye);
  Vec3<T> right = normalize(cross(fwd, up));
  Vec3<T> down = cross(fwd, right);
  Camera<T> cam;
  cam.rot = Mat3<T>{{right.x, down.x, fwd.x}, {right.y, down.y, fwd.y}, {right.z, down.z, fwd.z}};
  cam.pos = eye;
  cam.width = width;
  cam.height = height;
  T f = T(0.5) * height / std::tan(fov_y_deg * T(M_PI) / T(360));
  cam.fx = cam.fy = f;
  cam.cx = T(0.5) * width;
  cam.cy = T(0.5) * height;
  cam.time = time;
  return cam;
}

template <typename T>
inline nlohmann::json camera_to_json(const Camera<T>& cam) {
  std::vector<double> tf(16, 0.0);
  const Mat3<T>& r = cam.rot;
  const Vec3<T> rows[3] = {r.r0, r.r1, r.r2};
  for (int i = 0; i < 3; ++i) {
    tf[i * 4 + 0] = static_cast<double>(rows[i].x);
    tf[i * 4 + 1] = static_cast<double>(rows[i].y);
    tf[i * 4 + 2] = static_cast<double>(rows[i].z);
    tf[i * 4 + 3] = static_cast<double>(cam.pos[i]);
  }
  tf[15] = 1.0;
  return {{"transform", tf}, {"fx", cam.fx}, {"fy", cam.fy},         {"cx", cam.cx},
          {"cy", cam.cy},    {"width", cam.width}, {"height", cam.height}, {"time", cam.time}};
}

template <typename T>
inline Camera<T> camera_from_json(const nlohmann::json& j) {
  Camera<T> cam;
  auto tf = j.at("transform").get<std::vector<double>>();
  if (tf.size() != 16) throw std::runtime_error("camera_from_json: transform must have 16 values");
  cam.rot = Mat3<T>{{T(tf[0]), T(tf[1]), T(tf[2])},
                    {T(tf[4]), T(tf[5]), T(tf[6])},
                    {T(tf[8]), T(tf[9]), T(tf[10])}};
  cam.pos = {T(tf[3]), T(tf[7]), T(tf[11])};
  cam.fx = j.at("fx").get<T>();
  cam.fy = j.at("fy").get<T>();
  cam.cx = j.at("cx").get<T>();
  cam.cy = j.at("cy").get<T>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.time = j.at("time").get<T>();
  if (cam.fx <= 0 || cam.fy <= 0) throw std::runtime_error("camera_from_json: fx, fy must be > 0");
  if (cam.time < 0 || cam.time > 1)
    throw std::runtime_error("camera_from_json: time must be in [0,1]");
  return cam;
}

}  // namespace lumikit
