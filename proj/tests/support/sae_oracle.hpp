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


// Dense-loop reference evaluations shared by the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "saesteer/matrix.hpp"
#include "saesteer/sae.hpp"

namespace saesteer::testing {

// Total objective evaluated with plain loops in double.
inline double reference_loss(const SaeParams& p, const Matrix& batch, double lambda) {
  const std::size_t d = p.d_model, k = p.n_features;
  double recon = 0.0, sparsity = 0.0;
  for (std::size_t b = 0; b < batch.rows(); ++b) {
    std::vector<double> out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = p.b_dec[i];
    for (std::size_t j = 0; j < k; ++j) {
      double pi = p.b_enc[j];
      for (std::size_t i = 0; i < d; ++i) pi += static_cast<double>(p.w_enc[j * d + i]) * batch(b, i);
      const double theta = std::exp(static_cast<double>(p.log_theta[j]));
      if (!(pi > theta)) continue;
      double norm = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        out[i] += pi * p.dec(i, j);
        norm += static_cast<double>(p.dec(i, j)) * p.dec(i, j);
      }
      sparsity += std::sqrt(norm);
    }
    for (std::size_t i = 0; i < d; ++i) recon += (out[i] - batch(b, i)) * (out[i] - batch(b, i));
  }
  return (recon + lambda * sparsity) / static_cast<double>(batch.rows());
}

// Smallest |pi_j - theta_j| over the batch, evaluated independently.
inline double min_gate_gap(const SaeParams& p, const Matrix& batch) {
  const std::size_t d = p.d_model;
  double m = 1e300;
  for (std::size_t b = 0; b < batch.rows(); ++b) {
    for (std::size_t j = 0; j < p.n_features; ++j) {
      double pi = p.b_enc[j];
      for (std::size_t i = 0; i < d; ++i) pi += static_cast<double>(p.w_enc[j * d + i]) * batch(b, i);
      m = std::min(m, std::abs(pi - std::exp(static_cast<double>(p.log_theta[j]))));
    }
  }
  return m;
}

inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// Central finite difference of reference_loss with respect to `values[i]`.
inline double fd(SaeParams& p, std::vector<float>& values, std::size_t i, const Matrix& batch,
                 double lambda, float h) {
  const float orig = values[i];
  values[i] = orig + h;
  const float up = values[i];
  const double lp = reference_loss(p, batch, lambda);
  values[i] = orig - h;
  const float down = values[i];
  const double lm = reference_loss(p, batch, lambda);
  values[i] = orig;
  return (lp - lm) / (static_cast<double>(up) - down);
}


}  // namespace saesteer::testing
