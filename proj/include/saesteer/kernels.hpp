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


#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace saesteer::kernels {

// Instruction-set variants. Each variant implements the same contract; the
// scalar one is the reference every other variant is tested against.
enum class Backend { kScalar, kAvx2, kNeon };

std::string_view backend_name(Backend b);

// Inner loops used by the SAE, vector building and steering code. Float
// inputs, 64-bit accumulation.
struct KernelTable {
  Backend backend;
  // sum_i a[i] * b[i]
  double (*dot)(const float* a, const float* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy_acc)(double alpha, const float* x, double* y, std::size_t n);
  // y[i] += alpha * x[i]; y is float, product formed in double.
  void (*axpy_f32)(double alpha, const float* x, float* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*squared_distance)(const float* a, const float* b, std::size_t n);
  // One bias-corrected Adam update over a contiguous slice.
  //   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
  //   p -= step_size * m / (sqrt(v) * inv_sqrt_bc2 + eps)
  // where step_size = lr / (1 - b1^t) and inv_sqrt_bc2 = 1/sqrt(1 - b2^t).
  void (*adam_update)(float* p, float* m, float* v, const float* g, std::size_t n,
                      float step_size, float beta1, float beta2, float inv_sqrt_bc2,
                      float eps);
};

// Variants compiled into this binary and supported by the running CPU.
std::vector<Backend> available_backends();

bool is_available(Backend b);

// Table for a specific variant. Throws std::invalid_argument if unavailable.
const KernelTable& table(Backend b);

// The variant used by the library. Chosen once from CPU features; the
// SAESTEER_KERNELS environment variable ("scalar", "avx2", "neon") overrides.
const KernelTable& active();

// Forces the active variant (tests and benchmarks).
void set_active(Backend b);

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in
const KernelTable* neon_table();
}  // namespace detail

}  // namespace saesteer::kernels
