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


#include "saesteer/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "saesteer/error.hpp"
#include "saesteer/kernels.hpp"

namespace saesteer {
namespace {

std::uint64_t scale_count(std::uint64_t count, double factor, std::uint64_t floor) {
  const auto scaled = static_cast<std::uint64_t>(std::llround(static_cast<double>(count) * factor));
  return std::max(scaled, floor);
}

// Reshuffles the token pool once per epoch; deterministic for a given seed.
class TokenSampler {
 public:
  TokenSampler(const Matrix& tokens, std::mt19937_64& rng) : tokens_(tokens), rng_(rng) {
    order_.resize(tokens.rows());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    shuffle();
  }

  Matrix next(std::size_t batch_rows) {
    Matrix batch(batch_rows, tokens_.cols());
    for (std::size_t r = 0; r < batch_rows; ++r) {
      if (pos_ == order_.size()) shuffle();
      const auto src = tokens_.row(order_[pos_++]);
      std::copy(src.begin(), src.end(), batch.row(r).begin());
    }
    return batch;
  }

 private:
  void shuffle() {
    // Fisher-Yates on the raw engine output, so the permutation does not depend
    // on the standard library's distribution implementations.
    for (std::size_t i = order_.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng_() % i);
      std::swap(order_[i - 1], order_[j]);
    }
    pos_ = 0;
  }

  const Matrix& tokens_;
  std::mt19937_64& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string("train config: ") + name + " must be positive");
    }
  };
  if (expansion_factor == 0) throw ValidationError("train config: expansion_factor must be positive");
  if (l1_coefficient < 0.0 || !std::isfinite(l1_coefficient)) {
    throw ValidationError("train config: l1_coefficient must be non-negative");
  }
  positive(bandwidth, "bandwidth");
  positive(init_threshold, "init_threshold");
  positive(lr, "lr");
  positive(adam_eps, "adam_eps");
  positive(dead_threshold, "dead_threshold");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ValidationError("train config: Adam betas must lie in [0, 1)");
  }
  if (batch_tokens == 0) throw ValidationError("train config: batch_tokens must be positive");
  if (feature_sampling_window == 0 || dead_feature_window == 0) {
    throw ValidationError("train config: feature windows must be positive");
  }
  if (steps > 0 && (lr_warmup_steps > steps || l1_warmup_steps > steps || lr_decay_steps > steps)) {
    throw ValidationError("train config: warmup/decay lengths exceed the step count");
  }
}

TrainConfig TrainConfig::scaled_to(std::uint64_t new_steps) const {
  TrainConfig c = *this;
  const double factor = steps == 0 ? 0.0 : static_cast<double>(new_steps) / static_cast<double>(steps);
  c.steps = new_steps;
  c.lr_warmup_steps = std::min(new_steps, scale_count(lr_warmup_steps, factor, 0));
  c.l1_warmup_steps = std::min(new_steps, scale_count(l1_warmup_steps, factor, 0));
  c.lr_decay_steps = std::min(new_steps, scale_count(lr_decay_steps, factor, 0));
  c.feature_sampling_window = scale_count(feature_sampling_window, factor, 1);
  c.dead_feature_window = scale_count(dead_feature_window, factor, 1);
  return c;
}

#define SAESTEER_CONFIG_FIELDS(X)                                                          \
  X(expansion_factor) X(l1_coefficient) X(bandwidth) X(init_threshold) X(lr) X(adam_beta1) \
  X(adam_beta2) X(adam_eps) X(lr_warmup_steps) X(lr_decay_steps) X(l1_warmup_steps)        \
  X(steps) X(batch_tokens) X(feature_sampling_window) X(dead_feature_window)               \
  X(dead_threshold) X(resample_dead) X(grad_through_decoder_norm) X(seed) X(threads)

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json::object();
#define X(name) j[#name] = c.name;
  SAESTEER_CONFIG_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ValidationError("train config must be a JSON object");
  static const std::set<std::string> known = {
#define X(name) #name,
      SAESTEER_CONFIG_FIELDS(X)
#undef X
  };
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ValidationError("unknown train config key '" + key + "'");
  }
  try {
#define X(name) \
  if (j.contains(#name)) j.at(#name).get_to(c.name);
    SAESTEER_CONFIG_FIELDS(X)
#undef X
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid train config value: ") + e.what());
  }
}

#undef SAESTEER_CONFIG_FIELDS

Schedule schedule(std::uint64_t step, const TrainConfig& config) {
  const auto s = static_cast<double>(step);
  double lr_factor = 1.0;
  if (config.lr_warmup_steps > 0 && step < config.lr_warmup_steps) {
    lr_factor = s / static_cast<double>(config.lr_warmup_steps);
  }
  if (config.lr_decay_steps > 0 && config.steps >= config.lr_decay_steps) {
    const std::uint64_t decay_start = config.steps - config.lr_decay_steps;
    if (step >= decay_start) {
      const double remaining = static_cast<double>(config.steps) - s;
      lr_factor = std::min(lr_factor, remaining / static_cast<double>(config.lr_decay_steps));
    }
  }
  double l1_factor = 1.0;
  if (config.l1_warmup_steps > 0 && step < config.l1_warmup_steps) {
    l1_factor = s / static_cast<double>(config.l1_warmup_steps);
  }
  return {config.lr * lr_factor, config.l1_coefficient * l1_factor};
}

// ---------------------------------------------------------------------------

DeadFeatureTracker::DeadFeatureTracker(std::size_t n_features, std::uint64_t window,
                                       double threshold)
    : window_(window), threshold_(threshold), fired_(n_features, 0), tracked_since_(n_features, 0) {
  if (window_ == 0) throw ValidationError("dead-feature window must be positive");
}

std::vector<std::uint32_t> DeadFeatureTracker::update(std::span<const std::uint32_t> fire_counts) {
  if (fire_counts.size() != fired_.size()) {
    throw ValidationError("fire count vector length does not match the feature count");
  }
  StepEntry entry{steps_, {}};
  for (std::size_t j = 0; j < fire_counts.size(); ++j) {
    if (fire_counts[j] > 0) {
      entry.fired.push_back(static_cast<std::uint32_t>(j));
      ++fired_[j];
    }
  }
  history_.push_back(std::move(entry));
  ++steps_;
  while (history_.size() > window_) {
    const StepEntry& old = history_.front();
    for (auto j : old.fired) {
      if (old.step >= tracked_since_[j]) --fired_[j];
    }
    history_.pop_front();
  }
  return dead_features();
}

std::vector<std::uint32_t> DeadFeatureTracker::dead_features() const {
  std::vector<std::uint32_t> dead;
  const auto window = static_cast<double>(window_);
  for (std::size_t j = 0; j < fired_.size(); ++j) {
    if (steps_ - tracked_since_[j] < window_) continue;
    if (static_cast<double>(fired_[j]) / window < threshold_) {
      dead.push_back(static_cast<std::uint32_t>(j));
    }
  }
  return dead;
}

void DeadFeatureTracker::reset_feature(std::uint32_t feature) {
  fired_.at(feature) = 0;
  tracked_since_[feature] = steps_;
}

void resample_dead_features(SaeParams& params, AdamState& adam,
                            std::span<const std::uint32_t> dead, const Matrix& batch,
                            std::span<const double> example_error, double init_threshold) {
  if (dead.empty() || batch.rows() == 0) return;
  const std::size_t d = params.d_model;
  const auto& kt = kernels::active();

  std::vector<bool> is_dead(params.n_features, false);
  for (auto j : dead) is_dead.at(j) = true;
  double norm_sum = 0.0;
  std::size_t alive = 0;
  for (std::size_t j = 0; j < params.n_features; ++j) {
    if (is_dead[j]) continue;
    const float* row = params.w_enc.data() + j * d;
    norm_sum += std::sqrt(kt.dot(row, row, d));
    ++alive;
  }
  const double target_norm = alive > 0 && norm_sum > 0.0 ? norm_sum / static_cast<double>(alive) : 1.0;

  std::vector<std::size_t> order(batch.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return example_error[a] > example_error[b];
  });

  const auto log_init = static_cast<float>(std::log(init_threshold));
  std::size_t next = 0;
  for (auto j : dead) {
    const auto x = batch.row(order[next++ % order.size()]);
    const double norm = std::sqrt(kt.dot(x.data(), x.data(), d));
    if (!(norm > 0.0)) continue;
    auto enc = params.enc_row(j);
    auto atom = params.atom(j);
    for (std::size_t i = 0; i < d; ++i) {
      const double unit = x[i] / norm;
      enc[i] = static_cast<float>(unit * target_norm);
      atom[i] = static_cast<float>(unit);
    }
    params.b_enc[j] = 0.0f;
    params.log_theta[j] = log_init;
    for (SaeParams* moments : {&adam.m, &adam.v}) {
      std::fill_n(moments->w_enc.begin() + static_cast<std::ptrdiff_t>(j * d), d, 0.0f);
      std::fill_n(moments->w_dec.begin() + static_cast<std::ptrdiff_t>(j * d), d, 0.0f);
      moments->b_enc[j] = 0.0f;
      moments->log_theta[j] = 0.0f;
    }
  }
}

SaeParams initialize_params(std::uint32_t d_model, std::uint32_t n_features,
                            double init_threshold, std::mt19937_64& rng) {
  SaeParams p = SaeParams::zeros(d_model, n_features);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
  for (auto& w : p.w_enc) w = static_cast<float>((2.0 * uniform01(rng) - 1.0) * bound);
  const auto& kt = kernels::active();
  for (std::size_t j = 0; j < n_features; ++j) {
    const auto row = p.enc_row(j);
    const double norm = std::sqrt(kt.dot(row.data(), row.data(), d_model));
    auto atom = p.atom(j);
    for (std::size_t i = 0; i < d_model; ++i) {
      atom[i] = norm > 0.0 ? static_cast<float>(row[i] / norm) : 0.0f;
    }
  }
  std::fill(p.log_theta.begin(), p.log_theta.end(), static_cast<float>(std::log(init_threshold)));
  return p;
}

TrainResult train_sae(const Matrix& tokens, const TrainConfig& config, const StepCallback& on_step) {
  config.validate();
  if (tokens.rows() == 0) throw ValidationError("no training tokens");
  if (!all_finite(tokens.data())) throw ValidationError("training tokens contain NaN or Inf");
  const auto d_model = static_cast<std::uint32_t>(tokens.cols());
  const auto n_features = static_cast<std::uint32_t>(d_model * config.expansion_factor);

  std::mt19937_64 rng(config.seed);
  TrainResult result;
  result.params = initialize_params(d_model, n_features, config.init_threshold, rng);
  if (config.steps == 0) return result;

  SaeParams& params = result.params;
  AdamState adam = AdamState::for_params(params);
  const AdamConfig adam_cfg{static_cast<float>(config.adam_beta1),
                            static_cast<float>(config.adam_beta2),
                            static_cast<float>(config.adam_eps)};
  DeadFeatureTracker tracker(n_features, config.dead_feature_window, config.dead_threshold);
  TokenSampler sampler(tokens, rng);
  LossOptions opts;
  opts.bandwidth = config.bandwidth;
  opts.grad_through_decoder_norm = config.grad_through_decoder_norm;
  opts.threads = config.threads;
  const std::uint64_t resample_stop = config.steps - std::min(config.steps, config.lr_decay_steps);

  result.history.reserve(config.steps);
  for (std::uint64_t step = 0; step < config.steps; ++step) {
    const Schedule sch = schedule(step, config);
    const Matrix batch = sampler.next(config.batch_tokens);
    opts.l1_coefficient = sch.l1_coefficient;
    LossResult lr;
    try {
      lr = loss_and_grads(params, batch, opts);
    } catch (const NumericError& e) {
      throw NumericError("training step " + std::to_string(step) + ": " + e.what());
    }
    adam_step(adam, params, lr.grads, sch.lr, adam_cfg);
    if (!all_finite(params.w_enc) || !all_finite(params.w_dec) || !all_finite(params.b_enc) ||
        !all_finite(params.b_dec) || !all_finite(params.log_theta)) {
      throw NumericError("training step " + std::to_string(step) +
                         ": parameters became non-finite");
    }

    auto dead = tracker.update(lr.fire_counts);
    TrainStats stats{step,          lr.recon_loss, lr.sparsity_loss, lr.mean_l0,
                     dead.size(),   sch.lr,        sch.l1_coefficient};
    if (config.resample_dead && (step + 1) % config.feature_sampling_window == 0 &&
        step < resample_stop && !dead.empty()) {
      resample_dead_features(params, adam, dead, batch, lr.example_error, config.init_threshold);
      for (auto j : dead) tracker.reset_feature(j);
    }
    result.history.push_back(stats);
    if (on_step) on_step(stats);
  }
  return result;
}

Matrix gather_kept_tokens(const StoreReader& store, std::uint32_t layer) {
  auto cursor = store.scan(RecordFilter{layer, std::nullopt});
  Matrix tokens(0, store.manifest().d_model);
  std::vector<float> rows;
  std::size_t n = 0;
  ActivationRecord rec;
  while (cursor.next(rec)) {
    for (std::size_t t = 0; t < rec.token_count(); ++t) {
      if (!rec.keep_mask[t]) continue;
      const auto tok = rec.token(t);
      rows.insert(rows.end(), tok.begin(), tok.end());
      ++n;
    }
  }
  return Matrix(n, store.manifest().d_model, std::move(rows));
}

TrainResult train_sae(const StoreReader& store, std::uint32_t layer, const TrainConfig& config,
                      const StepCallback& on_step) {
  Matrix tokens = gather_kept_tokens(store, layer);
  if (tokens.rows() == 0) {
    throw ValidationError("store has no usable tokens at layer " + std::to_string(layer));
  }
  return train_sae(tokens, config, on_step);
}

}  // namespace saesteer
