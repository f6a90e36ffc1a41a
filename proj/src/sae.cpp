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


#include "saesteer/sae.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "saesteer/error.hpp"
#include "saesteer/kernels.hpp"

namespace saesteer {
namespace {

constexpr std::size_t kChunkRows = 256;

void check_dims(const SaeParams& p, std::size_t got, const char* what) {
  if (got != p.d_model) {
    throw ValidationError(std::string("dimension mismatch: ") + what + " has length " +
                          std::to_string(got) + ", SAE expects " + std::to_string(p.d_model));
  }
}

// Per-chunk accumulators, all in double.
struct GradAccumulator {
  std::vector<double> w_enc, b_enc, w_dec, b_dec, theta;
  std::vector<std::uint32_t> fire_counts;
  double recon = 0.0;
  double sparsity = 0.0;  // sum over rows of sum_j ||d_j|| gate_j (unscaled)
  double l0 = 0.0;

  GradAccumulator(std::size_t d, std::size_t k)
      : w_enc(k * d), b_enc(k), w_dec(k * d), b_dec(d), theta(k), fire_counts(k) {}
};

void accumulate_rows(const SaeParams& p, const Matrix& batch, std::size_t row_begin,
                     std::size_t row_end, const std::vector<double>& theta,
                     const std::vector<double>& atom_norm, const LossOptions& opts,
                     std::vector<double>& example_error, GradAccumulator& acc) {
  const auto& kt = kernels::active();
  const std::size_t d = p.d_model;
  const std::size_t k = p.n_features;
  const double inv_b = 1.0 / static_cast<double>(batch.rows());
  const double eps = opts.bandwidth;
  const double lambda = opts.l1_coefficient;

  std::vector<double> pi(k);
  std::vector<std::uint32_t> active;
  std::vector<std::uint32_t> touched;  // active or inside the kernel support
  std::vector<double> recon(d);
  std::vector<double> resid(d);  // kept in double: bias gradients cancel across rows
  active.reserve(k);
  touched.reserve(k);

  for (std::size_t b = row_begin; b < row_end; ++b) {
    const auto h = batch.row(b);
    active.clear();
    touched.clear();
    for (std::size_t j = 0; j < k; ++j) {
      pi[j] = p.b_enc[j] + kt.dot(p.w_enc.data() + j * d, h.data(), d);
      const double gap = pi[j] - theta[j];
      const bool on = gap > 0.0;
      if (on) active.push_back(static_cast<std::uint32_t>(j));
      if (on || std::abs(gap) <= eps) touched.push_back(static_cast<std::uint32_t>(j));
    }

    std::copy(p.b_dec.begin(), p.b_dec.end(), recon.begin());
    for (auto j : active) kt.axpy_acc(pi[j], p.w_dec.data() + j * d, recon.data(), d);
    double err = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double r = recon[i] - h[i];
      err += r * r;
      resid[i] = r;
    }
    example_error[b] = err;
    acc.recon += err;

    // d(recon)/d(h_hat) = 2 r / B
    const double g_out = 2.0 * inv_b;
    for (std::size_t i = 0; i < d; ++i) acc.b_dec[i] += g_out * resid[i];

    for (auto j : touched) {
      const float* atom = p.w_dec.data() + j * d;
      double dz = 0.0;
      for (std::size_t i = 0; i < d; ++i) dz += atom[i] * resid[i];
      const double g_z = g_out * dz;
      const double gap = pi[j] - theta[j];
      if (gap > 0.0) {
        // Smooth path: z_j = pi_j.
        kt.axpy_acc(g_z, h.data(), acc.w_enc.data() + j * d, d);
        acc.b_enc[j] += g_z;
        const double g_atom = g_out * pi[j];
        double* dst = acc.w_dec.data() + j * d;
        for (std::size_t i = 0; i < d; ++i) dst[i] += g_atom * resid[i];
        acc.sparsity += atom_norm[j];
        acc.fire_counts[j] += 1;
      }
      if (std::abs(gap) <= eps) {
        const double kernel = 0.5 / eps;
        acc.theta[j] += g_z * (-theta[j] * kernel) - lambda * inv_b * atom_norm[j] * kernel;
      }
    }
    acc.l0 += static_cast<double>(active.size());
  }
}

}  // namespace

SaeParams SaeParams::zeros(std::uint32_t d_model, std::uint32_t n_features) {
  SaeParams p;
  p.d_model = d_model;
  p.n_features = n_features;
  const std::size_t kd = static_cast<std::size_t>(d_model) * n_features;
  p.w_enc.assign(kd, 0.0f);
  p.b_enc.assign(n_features, 0.0f);
  p.w_dec.assign(kd, 0.0f);
  p.b_dec.assign(d_model, 0.0f);
  p.log_theta.assign(n_features, 0.0f);
  return p;
}

void SaeParams::validate() const {
  if (d_model == 0 || n_features == 0) throw ValidationError("SAE dimensions must be positive");
  const std::size_t kd = static_cast<std::size_t>(d_model) * n_features;
  if (w_enc.size() != kd || w_dec.size() != kd || b_enc.size() != n_features ||
      b_dec.size() != d_model || log_theta.size() != n_features) {
    throw ValidationError("SAE tensor shapes are inconsistent with D and K");
  }
  if (!all_finite(w_enc) || !all_finite(w_dec) || !all_finite(b_enc) || !all_finite(b_dec) ||
      !all_finite(log_theta)) {
    throw NumericError("SAE parameters contain NaN or Inf");
  }
}

std::vector<double> preactivations(const SaeParams& params, std::span<const float> h) {
  check_dims(params, h.size(), "input");
  const auto& kt = kernels::active();
  std::vector<double> pi(params.n_features);
  for (std::size_t j = 0; j < params.n_features; ++j) {
    pi[j] = params.b_enc[j] + kt.dot(params.w_enc.data() + j * params.d_model, h.data(),
                                     params.d_model);
  }
  return pi;
}

SparseCode encode(const SaeParams& params, std::span<const float> h) {
  const auto pi = preactivations(params, h);
  SparseCode code;
  code.z.assign(params.n_features, 0.0f);
  for (std::size_t j = 0; j < params.n_features; ++j) {
    const double theta = std::exp(static_cast<double>(params.log_theta[j]));
    if (pi[j] > theta) {
      code.z[j] = static_cast<float>(pi[j]);
      code.active.push_back(static_cast<std::uint32_t>(j));
    }
  }
  return code;
}

std::vector<double> decode_f64(const SaeParams& params, const SparseCode& code) {
  if (code.z.size() != params.n_features) {
    throw ValidationError("dimension mismatch: code length " + std::to_string(code.z.size()) +
                          " != K " + std::to_string(params.n_features));
  }
  const auto& kt = kernels::active();
  std::vector<double> out(params.b_dec.begin(), params.b_dec.end());
  for (auto j : code.active) {
    kt.axpy_acc(code.z[j], params.w_dec.data() + j * params.d_model, out.data(),
                params.d_model);
  }
  return out;
}

std::vector<double> decode_dense_f64(const SaeParams& params, std::span<const float> z) {
  if (z.size() != params.n_features) {
    throw ValidationError("dimension mismatch: code length " + std::to_string(z.size()) +
                          " != K " + std::to_string(params.n_features));
  }
  const auto& kt = kernels::active();
  std::vector<double> out(params.b_dec.begin(), params.b_dec.end());
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (z[j] != 0.0f) kt.axpy_acc(z[j], params.w_dec.data() + j * params.d_model, out.data(),
                                  params.d_model);
  }
  return out;
}

std::vector<float> decode(const SaeParams& params, const SparseCode& code) {
  const auto v = decode_f64(params, code);
  return {v.begin(), v.end()};
}

std::vector<float> decode_dense(const SaeParams& params, std::span<const float> z) {
  const auto v = decode_dense_f64(params, z);
  return {v.begin(), v.end()};
}

LossResult loss_and_grads(const SaeParams& params, const Matrix& batch, const LossOptions& opts) {
  if (batch.rows() == 0) throw ValidationError("empty batch");
  check_dims(params, batch.cols(), "batch row");
  if (!(opts.bandwidth > 0.0)) throw ValidationError("bandwidth must be positive");

  const std::size_t d = params.d_model;
  const std::size_t k = params.n_features;
  const std::size_t rows = batch.rows();
  const double inv_b = 1.0 / static_cast<double>(rows);

  std::vector<double> theta(k), atom_norm(k);
  const auto& kt = kernels::active();
  for (std::size_t j = 0; j < k; ++j) {
    theta[j] = std::exp(static_cast<double>(params.log_theta[j]));
    const float* a = params.w_dec.data() + j * d;
    atom_norm[j] = std::sqrt(kt.dot(a, a, d));
  }

  const std::size_t n_chunks = (rows + kChunkRows - 1) / kChunkRows;
  std::vector<GradAccumulator> chunks(n_chunks, GradAccumulator(d, k));
  LossResult result;
  result.example_error.assign(rows, 0.0);

  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * kChunkRows;
    const std::size_t end = std::min(rows, begin + kChunkRows);
    accumulate_rows(params, batch, begin, end, theta, atom_norm, opts, result.example_error,
                    chunks[c]);
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(opts.threads, n_chunks));
  if (workers == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < n_chunks; c += workers) run_chunk(c);
      });
    }
    for (auto& t : pool) t.join();
  }

  // Fixed-order reduction.
  GradAccumulator& total = chunks[0];
  for (std::size_t c = 1; c < n_chunks; ++c) {
    const GradAccumulator& g = chunks[c];
    for (std::size_t i = 0; i < total.w_enc.size(); ++i) total.w_enc[i] += g.w_enc[i];
    for (std::size_t i = 0; i < total.w_dec.size(); ++i) total.w_dec[i] += g.w_dec[i];
    for (std::size_t i = 0; i < k; ++i) {
      total.b_enc[i] += g.b_enc[i];
      total.theta[i] += g.theta[i];
      total.fire_counts[i] += g.fire_counts[i];
    }
    for (std::size_t i = 0; i < d; ++i) total.b_dec[i] += g.b_dec[i];
    total.recon += g.recon;
    total.sparsity += g.sparsity;
    total.l0 += g.l0;
  }

  result.recon_loss = total.recon * inv_b;
  result.sparsity_loss = opts.l1_coefficient * total.sparsity * inv_b;
  result.mean_l0 = total.l0 * inv_b;
  if (!std::isfinite(result.recon_loss) || !std::isfinite(result.sparsity_loss)) {
    throw NumericError("non-finite SAE loss (recon=" + std::to_string(result.recon_loss) +
                       ", sparsity=" + std::to_string(result.sparsity_loss) + ")");
  }

  if (opts.grad_through_decoder_norm && opts.l1_coefficient != 0.0) {
    // d/d d_j of lambda/B * ||d_j|| * (#rows where j fired)
    for (std::size_t j = 0; j < k; ++j) {
      if (total.fire_counts[j] == 0 || atom_norm[j] == 0.0) continue;
      const double scale = opts.l1_coefficient * inv_b * total.fire_counts[j] / atom_norm[j];
      kt.axpy_acc(scale, params.w_dec.data() + j * d, total.w_dec.data() + j * d, d);
    }
  }

  SaeParams& g = result.grads;
  g.d_model = params.d_model;
  g.n_features = params.n_features;
  g.w_enc.assign(total.w_enc.begin(), total.w_enc.end());
  g.b_enc.assign(total.b_enc.begin(), total.b_enc.end());
  g.w_dec.assign(total.w_dec.begin(), total.w_dec.end());
  g.b_dec.assign(total.b_dec.begin(), total.b_dec.end());
  g.log_theta.resize(k);
  for (std::size_t j = 0; j < k; ++j) g.log_theta[j] = static_cast<float>(theta[j] * total.theta[j]);
  result.fire_counts = std::move(total.fire_counts);
  return result;
}

}  // namespace saesteer
