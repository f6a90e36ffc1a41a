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


// Inference-time steering of residual-stream activations through an SAE.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "saesteer/activation_store.hpp"
#include "saesteer/lang_vectors.hpp"
#include "saesteer/sae.hpp"

namespace saesteer {

struct SteeringRequest {
  const SaeParams& sae;
  const SteeringVector& vector;  // sparse-space, length K
  double alpha;
  std::uint32_t layer;

  // Throws ValidationError on K mismatch, wrong space or layer mismatch.
  void validate() const;
};

// 1. z = encode(h)   2. z' = z + alpha w   3. h' = decode(z')
// 4. h~ = h' + (h - decode(z))
// Evaluated as h + (decode(z') - decode(z)) in double, so alpha = 0 returns h
// bit for bit.
std::vector<float> steer(std::span<const float> h, const SteeringRequest& req);

// Steers every token row of every record (special tokens included; masks
// untouched). All records must be at req.layer.
std::vector<ActivationRecord> steer_batch(std::span<const ActivationRecord> records,
                                          const SteeringRequest& req);

// h + alpha w in the dense residual stream.
std::vector<float> dense_steer(std::span<const float> h, const SteeringVector& w_dense,
                               double alpha);

// Copies `input` to `output`, steering the records at req.layer and passing
// the others through unchanged. Returns the number of steered records.
std::size_t steer_store(const StoreReader& input, const SteeringRequest& req,
                        const std::filesystem::path& output);

}  // namespace saesteer
