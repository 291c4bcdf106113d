// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lumikit {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

// One optimized parameter set: accessor-based so the parameters can live in
// any layout. Frozen groups must receive no updates; step() enforces it.
template <typename T>
struct ParamGroup {
  std::string name;
  T lr = 0;
  bool frozen = false;
  std::function<size_t()> count;
  std::function<T(size_t)> get;
  std::function<void(size_t, T)> set;
  std::function<T(size_t)> grad;
  std::function<void()> clamp;  // post-step projection (may be empty)

  std::vector<T> m, v;
  int64_t t = 0;

  void step() {
    if (frozen) throw std::logic_error("ParamGroup::step on frozen group '" + name + "'");
    size_t n = count();
    if (m.size() != n) {
      m.assign(n, T(0));
      v.assign(n, T(0));
    }
    ++t;
    T b1 = T(kAdamBeta1), b2 = T(kAdamBeta2);
    T bc1 = 1 - std::pow(b1, T(t));
    T bc2 = 1 - std::pow(b2, T(t));
    for (size_t i = 0; i < n; ++i) {
      T g = grad(i);
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      T mhat = m[i] / bc1;
      T vhat = v[i] / bc2;
      set(i, get(i) - lr * mhat / (std::sqrt(vhat) + T(kAdamEps)));
    }
    if (clamp) clamp();
  }
};

// Scalar reference form used by tests and small fits.
template <typename T>
struct AdamScalar {
  T m = 0, v = 0;
  int64_t t = 0;

  T update(T param, T grad, T lr) {
    ++t;
    T b1 = T(kAdamBeta1), b2 = T(kAdamBeta2);
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad * grad;
    T mhat = m / (1 - std::pow(b1, T(t)));
    T vhat = v / (1 - std::pow(b2, T(t)));
    return param - lr * mhat / (std::sqrt(vhat) + T(kAdamEps));
  }
};

}  // namespace lumikit
