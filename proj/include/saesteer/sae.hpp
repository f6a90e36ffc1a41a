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


// JumpReLU sparse autoencoder: parameters, forward pass, objective and its
// straight-through gradients.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "saesteer/matrix.hpp"

namespace saesteer {

// Parameters of one SAE with model dimension D and K features.
//
// The decoder is logically a D x K matrix. It is stored transposed (K rows of
// length D, one dictionary atom per feature) so the sparse decode touches
// contiguous memory; checkpoints serialize it in the logical D x K order.
struct SaeParams {
  std::uint32_t d_model = 0;     // D
  std::uint32_t n_features = 0;  // K
  std::vector<float> w_enc;      // K x D, row-major
  std::vector<float> b_enc;      // K
  std::vector<float> w_dec;      // K x D (atom-major), see above
  std::vector<float> b_dec;      // D
  std::vector<float> log_theta;  // K, threshold = exp(log_theta)

  static SaeParams zeros(std::uint32_t d_model, std::uint32_t n_features);

  std::span<float> enc_row(std::size_t j) { return {w_enc.data() + j * d_model, d_model}; }
  std::span<const float> enc_row(std::size_t j) const {
    return {w_enc.data() + j * d_model, d_model};
  }
  std::span<float> atom(std::size_t j) { return {w_dec.data() + j * d_model, d_model}; }
  std::span<const float> atom(std::size_t j) const {
    return {w_dec.data() + j * d_model, d_model};
  }
  // W_dec[d][j] in the logical D x K orientation.
  float dec(std::size_t d, std::size_t j) const { return w_dec[j * d_model + d]; }

  // Tensor rank / size consistency plus finiteness.
  void validate() const;

  friend bool operator==(const SaeParams&, const SaeParams&) = default;
};

struct SparseCode {
  std::vector<float> z;                 // length K, zero outside `active`
  std::vector<std::uint32_t> active;    // ascending feature indices with z != 0

  std::size_t active_count() const { return active.size(); }
};

// Pre-activations pi = W_enc h + b_enc, accumulated in double.
std::vector<double> preactivations(const SaeParams& params, std::span<const float> h);

// z_j = pi_j if pi_j > theta_j else 0.
SparseCode encode(const SaeParams& params, std::span<const float> h);

// W_dec z + b_dec, visiting only the active features.
std::vector<float> decode(const SaeParams& params, const SparseCode& code);
// W_dec z + b_dec for an arbitrary (dense) code vector.
std::vector<float> decode_dense(const SaeParams& params, std::span<const float> z);
// Double-precision variants used where differences of two decodes matter.
std::vector<double> decode_f64(const SaeParams& params, const SparseCode& code);
std::vector<double> decode_dense_f64(const SaeParams& params, std::span<const float> z);

struct LossOptions {
  double l1_coefficient = 0.0;  // lambda at the current step
  double bandwidth = 1e-3;      // epsilon of the rectangular kernel
  // When set, the penalty's ||W_dec column|| factor contributes to the
  // decoder gradient (the exact gradient of the objective). Off by default:
  // with it on, training shrinks decoder norms until the penalty stops biting.
  bool grad_through_decoder_norm = false;
  unsigned threads = 1;
};

struct LossResult {
  double recon_loss = 0.0;     // mean_b ||h - h_hat||^2
  double sparsity_loss = 0.0;  // lambda * mean_b sum_j ||d_j|| H(pi_j - theta_j)
  double mean_l0 = 0.0;
  SaeParams grads;                          // same shapes as the params
  std::vector<double> example_error;        // ||h - h_hat||^2 per batch row
  std::vector<std::uint32_t> fire_counts;   // per feature, rows where it fired

  double total() const { return recon_loss + sparsity_loss; }
};

// Loss and gradients for one batch (B x D). The Heaviside gate uses the
// rectangular-kernel pseudo-derivative for the threshold:
//   dH(pi - theta)/dtheta = -(1/eps) K((pi - theta)/eps)
//   dz/dtheta             = -(theta/eps) K((pi - theta)/eps)
// with K(u) = 1/2 * 1[|u| <= 1]; chained into log_theta by multiplying with
// theta. Batch rows are processed in fixed-size chunks reduced in chunk
// order, so results do not depend on `threads`.
// Throws NumericError if the loss is not finite.
LossResult loss_and_grads(const SaeParams& params, const Matrix& batch, const LossOptions& opts);

}  // namespace saesteer
