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


// SAE training: hyperparameters, schedules, dead-feature tracking and the
// training loop.

#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "saesteer/activation_store.hpp"
#include "saesteer/adam.hpp"
#include "saesteer/sae.hpp"

namespace saesteer {

struct TrainConfig {
  std::uint32_t expansion_factor = 8;  // K = expansion_factor * D
  double l1_coefficient = 5.0;
  double bandwidth = 1e-3;
  double init_threshold = 1e-3;
  double lr = 5e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t lr_warmup_steps = 1500;
  std::uint64_t lr_decay_steps = 3000;
  std::uint64_t l1_warmup_steps = 1500;
  std::uint64_t steps = 30000;
  std::uint64_t batch_tokens = 4096;
  std::uint64_t feature_sampling_window = 2000;
  std::uint64_t dead_feature_window = 1000;
  double dead_threshold = 1e-4;
  bool resample_dead = true;
  bool grad_through_decoder_norm = false;  // see LossOptions
  std::uint64_t seed = 0;
  unsigned threads = 1;

  // Throws ValidationError if a field is out of range.
  void validate() const;

  // Copy with the step-count fields (warmups, decay, windows, steps) rescaled
  // proportionally to `new_steps`; other fields unchanged.
  TrainConfig scaled_to(std::uint64_t new_steps) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct Schedule {
  double lr = 0.0;
  double l1_coefficient = 0.0;
};

// Linear LR warmup from 0, constant, then linear decay to 0 over the final
// lr_decay_steps. The L1 coefficient warms up linearly and then stays put.
Schedule schedule(std::uint64_t step, const TrainConfig& config);

struct TrainStats {
  std::uint64_t step = 0;
  double recon_loss = 0.0;
  double sparsity_loss = 0.0;
  double mean_l0 = 0.0;
  std::uint64_t dead_feature_count = 0;
  double lr = 0.0;
  double l1_coefficient = 0.0;
};

// Per-feature firing history over a trailing window of steps. A feature counts
// as firing in a step if it was active for at least one token of the batch.
// It is dead when it has been observed for a full window and
// (firing steps / window) < threshold.
class DeadFeatureTracker {
 public:
  DeadFeatureTracker(std::size_t n_features, std::uint64_t window, double threshold);

  // Records one step's per-feature fire counts and returns the dead set.
  std::vector<std::uint32_t> update(std::span<const std::uint32_t> fire_counts);

  std::vector<std::uint32_t> dead_features() const;
  // Forgets the feature's history; it must be observed for a new full window
  // before it can be dead again.
  void reset_feature(std::uint32_t feature);

  std::uint64_t steps_recorded() const { return steps_; }
  std::uint64_t firing_steps(std::uint32_t feature) const { return fired_[feature]; }

 private:
  struct StepEntry {
    std::uint64_t step;
    std::vector<std::uint32_t> fired;
  };
  std::uint64_t window_;
  double threshold_;
  std::uint64_t steps_ = 0;
  std::vector<std::uint64_t> fired_;
  std::vector<std::uint64_t> tracked_since_;
  std::deque<StepEntry> history_;
};

// Reinitializes the given features from the highest-error rows of `batch`:
// encoder row = example direction scaled to the mean encoder-row norm of the
// remaining features, decoder atom = unit example direction, b_enc = 0,
// log_theta = log(init_threshold); the matching Adam moments are zeroed.
void resample_dead_features(SaeParams& params, AdamState& adam,
                            std::span<const std::uint32_t> dead, const Matrix& batch,
                            std::span<const double> example_error, double init_threshold);

// W_enc ~ U(-1/sqrt(D), 1/sqrt(D)); W_dec = W_enc^T with unit columns;
// biases zero; log_theta = log(init_threshold).
SaeParams initialize_params(std::uint32_t d_model, std::uint32_t n_features,
                            double init_threshold, std::mt19937_64& rng);

struct TrainResult {
  SaeParams params;
  std::vector<TrainStats> history;
};

using StepCallback = std::function<void(const TrainStats&)>;

// Trains on the given token rows (one token per row).
TrainResult train_sae(const Matrix& tokens, const TrainConfig& config,
                      const StepCallback& on_step = {});

// Trains on every kept token of `layer` in the store.
TrainResult train_sae(const StoreReader& store, std::uint32_t layer, const TrainConfig& config,
                      const StepCallback& on_step = {});

// All kept tokens of a layer, in file order.
Matrix gather_kept_tokens(const StoreReader& store, std::uint32_t layer);

// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace saesteer
