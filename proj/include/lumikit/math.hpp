// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace lumikit {

// -----------------------------------------------------------------------------
// SMALL VECTORS AND MATRICES
// -----------------------------------------------------------------------------

template <typename T>
struct Vec2 {
  T x = 0, y = 0;

  Vec2() = default;
  Vec2(T x_, T y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(T s) const { return {x * s, y * s}; }
};

template <typename T>
struct Vec3 {
  T x = 0, y = 0, z = 0;

  Vec3() = default;
  Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}
  explicit Vec3(T s) : x(s), y(s), z(s) {}

  T& operator[](int i) { return (&x)[i]; }
  const T& operator[](int i) const { return (&x)[i]; }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(T s) const { return {x / s, y / s, z / s}; }
  Vec3 operator*(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
  Vec3 operator/(const Vec3& o) const { return {x / o.x, y / o.y, z / o.z}; }

  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  Vec3& operator*=(T s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

template <typename T>
inline Vec3<T> operator*(T s, const Vec3<T>& v) {
  return v * s;
}

template <typename T>
inline T dot(const Vec3<T>& a, const Vec3<T>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <typename T>
inline Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <typename T>
inline T length_squared(const Vec3<T>& v) {
  return dot(v, v);
}

template <typename T>
inline T length(const Vec3<T>& v) {
  return std::sqrt(length_squared(v));
}

template <typename T>
inline Vec3<T> normalize(const Vec3<T>& v) {
  return v / length(v);
}

// Adjoint of normalize: given d(normalize(v)), accumulates d(v).
// d(v/|v|)/dv = (I - n n^T) / |v| with n = v/|v|.
template <typename T>
inline Vec3<T> normalize_backward(const Vec3<T>& v, const Vec3<T>& d_out) {
  T len = length(v);
  Vec3<T> n = v / len;
  return (d_out - n * dot(n, d_out)) / len;
}

template <typename T>
inline Vec3<T> clamp01(const Vec3<T>& v) {
  return {std::clamp(v.x, T(0), T(1)), std::clamp(v.y, T(0), T(1)), std::clamp(v.z, T(0), T(1))};
}

template <typename T>
inline Vec3<T> vmin(const Vec3<T>& a, const Vec3<T>& b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}

template <typename T>
inline Vec3<T> vmax(const Vec3<T>& a, const Vec3<T>& b) {
  return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}

template <typename T>
inline T max_component(const Vec3<T>& v) {
  return std::max(v.x, std::max(v.y, v.z));
}

template <typename T>
struct Vec4 {
  T x = 0, y = 0, z = 0, w = 0;

  Vec4() = default;
  Vec4(T x_, T y_, T z_, T w_) : x(x_), y(y_), z(z_), w(w_) {}

  T& operator[](int i) { return (&x)[i]; }
  const T& operator[](int i) const { return (&x)[i]; }

  Vec4 operator+(const Vec4& o) const { return {x + o.x, y + o.y, z + o.z, w + o.w}; }
  Vec4 operator*(T s) const { return {x * s, y * s, z * s, w * s}; }
  Vec4& operator+=(const Vec4& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    w += o.w;
    return *this;
  }
};

// Column-major storage would be unusual here; rows are explicit Vec3s.
template <typename T>
struct Mat3 {
  Vec3<T> r0, r1, r2;  // rows

  static Mat3 identity() { return {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}; }

  Vec3<T> col(int i) const { return {r0[i], r1[i], r2[i]}; }

  Vec3<T> operator*(const Vec3<T>& v) const { return {dot(r0, v), dot(r1, v), dot(r2, v)}; }

  Mat3 transposed() const {
    return {{r0.x, r1.x, r2.x}, {r0.y, r1.y, r2.y}, {r0.z, r1.z, r2.z}};
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 t = o.transposed();
    return {{dot(r0, t.r0), dot(r0, t.r1), dot(r0, t.r2)},
            {dot(r1, t.r0), dot(r1, t.r1), dot(r1, t.r2)},
            {dot(r2, t.r0), dot(r2, t.r1), dot(r2, t.r2)}};
  }
};

// -----------------------------------------------------------------------------
// QUATERNIONS AND TANGENT FRAMES
// -----------------------------------------------------------------------------

// Unit quaternion (w, x, y, z). Kept normalized by the owner; operations that
// need a unit input say so.
template <typename T>
struct Quat {
  T w = 1, x = 0, y = 0, z = 0;

  Quat() = default;
  Quat(T w_, T x_, T y_, T z_) : w(w_), x(x_), y(y_), z(z_) {}

  T& operator[](int i) { return (&w)[i]; }
  const T& operator[](int i) const { return (&w)[i]; }

  T norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quat normalized() const {
    T n = norm();
    return {w / n, x / n, y / n, z / n};
  }
};

// Adjoint of Quat::normalized().
template <typename T>
inline Quat<T> quat_normalize_backward(const Quat<T>& q, const Quat<T>& d_out) {
  T n = q.norm();
  Quat<T> u{q.w / n, q.x / n, q.y / n, q.z / n};
  T proj = u.w * d_out.w + u.x * d_out.x + u.y * d_out.y + u.z * d_out.z;
  return {(d_out.w - u.w * proj) / n, (d_out.x - u.x * proj) / n, (d_out.y - u.y * proj) / n,
          (d_out.z - u.z * proj) / n};
}

// Orthonormal tangent frame of a splat: two in-plane axes and the normal.
template <typename T>
struct Frame {
  Vec3<T> tu, tv, n;
};

// Rotation matrix of a unit quaternion; frame axes are its columns, so
// n = tu x tv for any unit q.
template <typename T>
inline Mat3<T> quat_to_matrix(const Quat<T>& q) {
  T w = q.w, x = q.x, y = q.y, z = q.z;
  return {{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
          {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
          {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}};
}

template <typename T>
inline Frame<T> quat_to_frame(const Quat<T>& q) {
  Mat3<T> m = quat_to_matrix(q);
  return {m.col(0), m.col(1), m.col(2)};
}

// Accumulates d(q) given adjoints of the three frame axes.
template <typename T>
inline Quat<T> quat_to_frame_backward(const Quat<T>& q, const Vec3<T>& d_tu, const Vec3<T>& d_tv,
                                      const Vec3<T>& d_n) {
  T w = q.w, x = q.x, y = q.y, z = q.z;
  Quat<T> g{0, 0, 0, 0};
  // tu = (1-2(y^2+z^2), 2(xy+zw), 2(xz-yw))
  g.w += 2 * (z * d_tu.y - y * d_tu.z);
  g.x += 2 * (y * d_tu.y + z * d_tu.z);
  g.y += -4 * y * d_tu.x + 2 * x * d_tu.y - 2 * w * d_tu.z;
  g.z += -4 * z * d_tu.x + 2 * w * d_tu.y + 2 * x * d_tu.z;
  // tv = (2(xy-zw), 1-2(x^2+z^2), 2(yz+xw))
  g.w += 2 * (-z * d_tv.x + x * d_tv.z);
  g.x += 2 * y * d_tv.x - 4 * x * d_tv.y + 2 * w * d_tv.z;
  g.y += 2 * x * d_tv.x + 2 * z * d_tv.z;
  g.z += -2 * w * d_tv.x - 4 * z * d_tv.y + 2 * y * d_tv.z;
  // n = (2(xz+yw), 2(yz-xw), 1-2(x^2+y^2))
  g.w += 2 * (y * d_n.x - x * d_n.y);
  g.x += 2 * z * d_n.x - 2 * w * d_n.y - 4 * x * d_n.z;
  g.y += 2 * w * d_n.x + 2 * z * d_n.y - 4 * y * d_n.z;
  g.z += 2 * x * d_n.x + 2 * y * d_n.y;
  return g;
}

// Recovers a quaternion from an orthonormal frame (inverse of quat_to_frame,
// up to sign). Shepperd's method.
template <typename T>
inline Quat<T> frame_to_quat(const Frame<T>& f) {
  T m00 = f.tu.x, m10 = f.tu.y, m20 = f.tu.z;
  T m01 = f.tv.x, m11 = f.tv.y, m21 = f.tv.z;
  T m02 = f.n.x, m12 = f.n.y, m22 = f.n.z;
  T tr = m00 + m11 + m22;
  Quat<T> q;
  if (tr > 0) {
    T s = std::sqrt(tr + 1) * 2;
    q = {s / 4, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s};
  } else if (m00 > m11 && m00 > m22) {
    T s = std::sqrt(1 + m00 - m11 - m22) * 2;
    q = {(m21 - m12) / s, s / 4, (m01 + m10) / s, (m02 + m20) / s};
  } else if (m11 > m22) {
    T s = std::sqrt(1 + m11 - m00 - m22) * 2;
    q = {(m02 - m20) / s, (m01 + m10) / s, s / 4, (m12 + m21) / s};
  } else {
    T s = std::sqrt(1 + m22 - m00 - m11) * 2;
    q = {(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, s / 4};
  }
  return q.normalized();
}

// Branchless orthonormal basis about a unit normal (Duff et al.). Smooth in n
// except across n.z = 0 where the sign flips.
template <typename T>
inline void basis_from_normal(const Vec3<T>& n, Vec3<T>& b1, Vec3<T>& b2) {
  T s = std::copysign(T(1), n.z);
  T a = T(-1) / (s + n.z);
  T b = n.x * n.y * a;
  b1 = {1 + s * n.x * n.x * a, s * b, -s * n.x};
  b2 = {b, s + n.y * n.y * a, -n.y};
}

// Adjoint of basis_from_normal: accumulates d(n) from d(b1), d(b2).
template <typename T>
inline Vec3<T> basis_from_normal_backward(const Vec3<T>& n, const Vec3<T>& d_b1,
                                          const Vec3<T>& d_b2) {
  T s = std::copysign(T(1), n.z);
  T a = T(-1) / (s + n.z);
  T da_dnz = a * a;  // d(-1/(s+nz))/dnz
  T b = n.x * n.y * a;

  Vec3<T> g{0, 0, 0};
  // b1 = (1 + s*nx^2*a, s*nx*ny*a, -s*nx)
  g.x += d_b1.x * (2 * s * n.x * a) + d_b1.y * (s * n.y * a) + d_b1.z * (-s);
  g.y += d_b1.y * (s * n.x * a);
  g.z += d_b1.x * (s * n.x * n.x * da_dnz) + d_b1.y * (s * n.x * n.y * da_dnz);
  // b2 = (nx*ny*a, s + ny^2*a, -ny)
  g.x += d_b2.x * (n.y * a);
  g.y += d_b2.x * (n.x * a) + d_b2.y * (2 * n.y * a) + d_b2.z * T(-1);
  g.z += d_b2.x * (n.x * n.y * da_dnz) + d_b2.y * (n.y * n.y * da_dnz);
  (void)b;
  return g;
}

// -----------------------------------------------------------------------------
// POSITIONAL ENCODING
// -----------------------------------------------------------------------------

// Frequency encoding: per input component, [sin(2^k pi x), cos(2^k pi x)]
// for k = 0..freqs-1. No raw-input passthrough. Output size = n * 2 * freqs.
template <typename T>
inline void positional_encode(const T* input, int n, int freqs, T* out) {
  int idx = 0;
  for (int i = 0; i < n; ++i) {
    T base = input[i] * T(M_PI);
    T scale = 1;
    for (int k = 0; k < freqs; ++k) {
      T arg = base * scale;
      out[idx++] = std::sin(arg);
      out[idx++] = std::cos(arg);
      scale *= 2;
    }
  }
}

// Accumulates d(input) given d(encoded).
template <typename T>
inline void positional_encode_backward(const T* input, int n, int freqs, const T* d_out,
                                       T* d_input) {
  int idx = 0;
  for (int i = 0; i < n; ++i) {
    T base = input[i] * T(M_PI);
    T scale = 1;
    T g = 0;
    for (int k = 0; k < freqs; ++k) {
      T arg = base * scale;
      T w = T(M_PI) * scale;
      g += d_out[idx++] * std::cos(arg) * w;
      g += d_out[idx++] * -std::sin(arg) * w;
      scale *= 2;
    }
    d_input[i] += g;
  }
}

template <typename T>
inline std::vector<T> positional_encode_vec(const std::vector<T>& input, int freqs) {
  std::vector<T> out(input.size() * 2 * freqs);
  positional_encode(input.data(), static_cast<int>(input.size()), freqs, out.data());
  return out;
}

}  // namespace lumikit
