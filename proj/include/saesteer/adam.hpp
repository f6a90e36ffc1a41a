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


// Adam optimizer over SAE parameter tensors.

#pragma once

#include <cstdint>

#include "saesteer/sae.hpp"

namespace saesteer {

struct AdamConfig {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

struct AdamState {
  SaeParams m;  // first moments, same shapes as the params
  SaeParams v;  // second moments
  std::uint64_t step = 0;

  static AdamState for_params(const SaeParams& params);
};

// One bias-corrected Adam update of every tensor. Increments state.step.
// Throws ValidationError on shape mismatch.
void adam_step(AdamState& state, SaeParams& params, const SaeParams& grads, double lr,
               const AdamConfig& config = {});

}  // namespace saesteer
