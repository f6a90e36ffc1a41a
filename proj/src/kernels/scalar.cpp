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


// Reference implementations. Plain loops, serial accumulation order.

#include <cmath>

#include "saesteer/kernels.hpp"

namespace saesteer::kernels {
namespace {

double dot_scalar(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

void axpy_acc_scalar(double alpha, const float* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_f32_scalar(double alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<float>(static_cast<double>(y[i]) + alpha * x[i]);
  }
}

double squared_distance_scalar(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

void adam_update_scalar(float* p, float* m, float* v, const float* g, std::size_t n,
                        float step_size, float beta1, float beta2, float inv_sqrt_bc2,
                        float eps) {
  const float one_m_b1 = 1.0f - beta1;
  const float one_m_b2 = 1.0f - beta2;
  for (std::size_t i = 0; i < n; ++i) {
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

const KernelTable& scalar_table() {
  static const KernelTable t{Backend::kScalar, dot_scalar,       axpy_acc_scalar,
                             axpy_f32_scalar,  squared_distance_scalar, adam_update_scalar};
  return t;
}

}  // namespace detail
}  // namespace saesteer::kernels
