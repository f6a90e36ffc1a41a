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


#include "saesteer/steering.hpp"

#include <cmath>

#include "saesteer/error.hpp"
#include "saesteer/kernels.hpp"

namespace saesteer {
namespace {

void steer_into(std::span<const float> h, const SteeringRequest& req, std::span<float> out) {
  const SaeParams& sae = req.sae;
  const std::size_t d = sae.d_model;
  const auto& kt = kernels::active();

  const SparseCode z = encode(sae, h);
  const std::vector<double> recon = decode_f64(sae, z);

  // decode(z + alpha w), with the code kept in double.
  std::vector<double> steered(sae.b_dec.begin(), sae.b_dec.end());
  const auto& w = req.vector.w;
  for (std::size_t j = 0; j < sae.n_features; ++j) {
    const double zj = static_cast<double>(z.z[j]) + req.alpha * w[j];
    if (zj != 0.0) kt.axpy_acc(zj, sae.w_dec.data() + j * d, steered.data(), d);
  }
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = static_cast<float>(static_cast<double>(h[i]) + (steered[i] - recon[i]));
  }
}

}  // namespace

void SteeringRequest::validate() const {
  sae.validate();
  vector.validate();
  if (vector.space != Space::kSparse) {
    throw ValidationError("SAE steering needs a sparse-space steering vector");
  }
  if (vector.w.size() != sae.n_features) {
    throw ValidationError("steering vector has " + std::to_string(vector.w.size()) +
                          " features but the SAE has K=" + std::to_string(sae.n_features));
  }
  if (vector.layer != layer) {
    throw ValidationError("steering vector was built at layer " + std::to_string(vector.layer) +
                          ", request targets layer " + std::to_string(layer));
  }
  if (!std::isfinite(alpha)) throw ValidationError("steering strength must be finite");
}

std::vector<float> steer(std::span<const float> h, const SteeringRequest& req) {
  req.validate();
  if (h.size() != req.sae.d_model) {
    throw ValidationError("dimension mismatch: activation has length " + std::to_string(h.size()) +
                          ", SAE expects " + std::to_string(req.sae.d_model));
  }
  std::vector<float> out(h.size());
  steer_into(h, req, out);
  return out;
}

std::vector<ActivationRecord> steer_batch(std::span<const ActivationRecord> records,
                                          const SteeringRequest& req) {
  req.validate();
  std::vector<ActivationRecord> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    if (rec.layer != req.layer) {
      throw ValidationError("layer mismatch: record at layer " + std::to_string(rec.layer) +
                            ", steering layer " + std::to_string(req.layer));
    }
    rec.validate(req.sae.d_model);
    ActivationRecord steered = rec;
    for (std::size_t t = 0; t < rec.token_count(); ++t) steer_into(rec.token(t), req, steered.token(t));
    out.push_back(std::move(steered));
  }
  return out;
}

std::vector<float> dense_steer(std::span<const float> h, const SteeringVector& w_dense,
                               double alpha) {
  w_dense.validate();
  if (w_dense.space != Space::kDense) {
    throw ValidationError("dense steering needs a dense-space steering vector");
  }
  if (h.size() != w_dense.w.size()) {
    throw ValidationError("dimension mismatch: activation has length " + std::to_string(h.size()) +
                          ", vector has " + std::to_string(w_dense.w.size()));
  }
  std::vector<float> out(h.begin(), h.end());
  kernels::active().axpy_f32(alpha, w_dense.w.data(), out.data(), out.size());
  return out;
}

std::size_t steer_store(const StoreReader& input, const SteeringRequest& req,
                        const std::filesystem::path& output) {
  req.validate();
  const auto& manifest = input.manifest();
  if (!manifest.layer_position(req.layer)) {
    throw ValidationError("store has no layer " + std::to_string(req.layer));
  }
  if (manifest.d_model != req.sae.d_model) {
    throw ValidationError("store d_model " + std::to_string(manifest.d_model) +
                          " does not match SAE D=" + std::to_string(req.sae.d_model));
  }
  StoreWriter writer(output, manifest);
  auto cursor = input.scan();
  ActivationRecord rec;
  std::size_t steered = 0;
  while (cursor.next(rec)) {
    if (rec.layer == req.layer) {
      auto out = steer_batch(std::span<const ActivationRecord>(&rec, 1), req);
      writer.write(out.front());
      ++steered;
    } else {
      writer.write(rec);
    }
  }
  writer.finish();
  return steered;
}

}  // namespace saesteer
