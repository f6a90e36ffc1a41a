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


#include "saesteer/adam.hpp"

#include <cmath>
#include <vector>

#include "saesteer/error.hpp"
#include "saesteer/kernels.hpp"

namespace saesteer {
namespace {

bool same_shape(const SaeParams& a, const SaeParams& b) {
  return a.d_model == b.d_model && a.n_features == b.n_features &&
         a.w_enc.size() == b.w_enc.size() && a.b_enc.size() == b.b_enc.size() &&
         a.w_dec.size() == b.w_dec.size() && a.b_dec.size() == b.b_dec.size() &&
         a.log_theta.size() == b.log_theta.size();
}

}  // namespace

AdamState AdamState::for_params(const SaeParams& params) {
  AdamState s;
  s.m = SaeParams::zeros(params.d_model, params.n_features);
  s.v = SaeParams::zeros(params.d_model, params.n_features);
  return s;
}

void adam_step(AdamState& state, SaeParams& params, const SaeParams& grads, double lr,
               const AdamConfig& config) {
  if (!same_shape(params, grads) || !same_shape(params, state.m) ||
      !same_shape(params, state.v)) {
    throw ValidationError("Adam state, parameter and gradient shapes do not match");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(static_cast<double>(config.beta1), t);
  const double bc2 = 1.0 - std::pow(static_cast<double>(config.beta2), t);
  const auto step_size = static_cast<float>(lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));

  const auto& kt = kernels::active();
  auto update = [&](std::vector<float>& p, std::vector<float>& m, std::vector<float>& v,
                    const std::vector<float>& g) {
    kt.adam_update(p.data(), m.data(), v.data(), g.data(), p.size(), step_size, config.beta1,
                   config.beta2, inv_sqrt_bc2, config.eps);
  };
  update(params.w_enc, state.m.w_enc, state.v.w_enc, grads.w_enc);
  update(params.b_enc, state.m.b_enc, state.v.b_enc, grads.b_enc);
  update(params.w_dec, state.m.w_dec, state.v.w_dec, grads.w_dec);
  update(params.b_dec, state.m.b_dec, state.v.b_dec, grads.b_dec);
  update(params.log_theta, state.m.log_theta, state.v.log_theta, grads.log_theta);
}

}  // namespace saesteer
