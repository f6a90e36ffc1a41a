// Copyright 2026 The saesteer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// AArch64 NEON variants. Only compiled for aarch64 targets.

#include <arm_neon.h>

#include <cmath>

#include "saesteer/kernels.hpp"

namespace saesteer::kernels {
namespace {

double dot_neon(const float* a, const float* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t va = vld1q_f32(a + i);
    const float32x4_t vb = vld1q_f32(b + i);
    acc0 = vfmaq_f64(acc0, vcvt_f64_f32(vget_low_f32(va)), vcvt_f64_f32(vget_low_f32(vb)));
    acc1 = vfmaq_f64(acc1, vcvt_high_f64_f32(va), vcvt_high_f64_f32(vb));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

void axpy_acc_neon(double alpha, const float* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t vx = vld1q_f32(x + i);
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vcvt_f64_f32(vget_low_f32(vx)))));
    vst1q_f64(y + i + 2, vaddq_f64(vld1q_f64(y + i + 2), vmulq_f64(va, vcvt_high_f64_f32(vx))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_f32_neon(double alpha, const float* x, float* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t vx = vld1q_f32(x + i);
    const float32x4_t vy = vld1q_f32(y + i);
    const float64x2_t lo =
        vaddq_f64(vcvt_f64_f32(vget_low_f32(vy)), vmulq_f64(va, vcvt_f64_f32(vget_low_f32(vx))));
    const float64x2_t hi =
        vaddq_f64(vcvt_high_f64_f32(vy), vmulq_f64(va, vcvt_high_f64_f32(vx)));
    vst1q_f32(y + i, vcvt_high_f32_f64(vcvt_f32_f64(lo), hi));
  }
  for (; i < n; ++i) {
    y[i] = static_cast<float>(static_cast<double>(y[i]) + alpha * x[i]);
  }
}

double squared_distance_neon(const float* a, const float* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t va = vld1q_f32(a + i);
    const float32x4_t vb = vld1q_f32(b + i);
    const float64x2_t d0 =
        vsubq_f64(vcvt_f64_f32(vget_low_f32(va)), vcvt_f64_f32(vget_low_f32(vb)));
    const float64x2_t d1 = vsubq_f64(vcvt_high_f64_f32(va), vcvt_high_f64_f32(vb));
    acc0 = vfmaq_f64(acc0, d0, d0);
    acc1 = vfmaq_f64(acc1, d1, d1);
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

void adam_update_neon(float* p, float* m, float* v, const float* g, std::size_t n,
                      float step_size, float beta1, float beta2, float inv_sqrt_bc2,
                      float eps) {
  const float one_m_b1 = 1.0f - beta1;
  const float one_m_b2 = 1.0f - beta2;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t gi = vld1q_f32(g + i);
    const float32x4_t mi =
        vaddq_f32(vmulq_n_f32(vld1q_f32(m + i), beta1), vmulq_n_f32(gi, one_m_b1));
    const float32x4_t vi = vaddq_f32(vmulq_n_f32(vld1q_f32(v + i), beta2),
                                     vmulq_n_f32(vmulq_f32(gi, gi), one_m_b2));
    vst1q_f32(m + i, mi);
    vst1q_f32(v + i, vi);
    const float32x4_t denom =
        vaddq_f32(vmulq_n_f32(vsqrtq_f32(vi), inv_sqrt_bc2), vdupq_n_f32(eps));
    const float32x4_t upd = vdivq_f32(vmulq_n_f32(mi, step_size), denom);
    vst1q_f32(p + i, vsubq_f32(vld1q_f32(p + i), upd));
  }
  for (; i < n; ++i) {
    const float gi = g[i];
    const float mi = beta1 * m[i] + one_m_b1 * gi;
    const float vi = beta2 * v[i] + one_m_b2 * (gi * gi);
    m[i] = mi;
    v[i] = vi;
    const float denom = std::sqrt(vi) * inv_sqrt_bc2 + eps;
    p[i] = p[i] - step_size * mi / denom;
  }
}

}  // namespace

namespace detail {

const KernelTable* neon_table() {
  static const KernelTable t{Backend::kNeon, dot_neon,       axpy_acc_neon,
                             axpy_f32_neon,  squared_distance_neon, adam_update_neon};
  return &t;
}

}  // namespace detail
}  // namespace saesteer::kernels
