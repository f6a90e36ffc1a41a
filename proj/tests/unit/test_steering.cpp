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


#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "saesteer/checkpoint.hpp"
#include "saesteer/error.hpp"
#include "saesteer/steering.hpp"
#include "test_util.hpp"

using namespace saesteer;
using saesteer::testing::make_manifest;
using saesteer::testing::make_record;
using saesteer::testing::random_floats;
using saesteer::testing::random_params;
using saesteer::testing::TempDir;

namespace {

SteeringVector sparse_vector(std::mt19937_64& rng, std::uint32_t k, std::uint32_t layer = 4) {
  SteeringVector v;
  v.layer = layer;
  v.space = Space::kSparse;
  v.target_language = "fra_Latn";
  v.w = random_floats(rng, k);
  return v;
}

// alpha * W_dec w, in double.
std::vector<double> decoder_shift(const SaeParams& p, const SteeringVector& v, double alpha) {
  std::vector<double> out(p.d_model, 0.0);
  for (std::size_t i = 0; i < p.d_model; ++i) {
    for (std::size_t j = 0; j < p.n_features; ++j) out[i] += alpha * p.dec(i, j) * v.w[j];
  }
  return out;
}

}  // namespace

TEST_CASE("alpha = 0 returns the input bit for bit") {
  std::mt19937_64 rng(51);
  const SaeParams sae = random_params(rng, 6, 24, 0.05f);
  const SteeringVector v = sparse_vector(rng, 24);
  const SteeringRequest req{sae, v, 0.0, 4};
  for (int trial = 0; trial < 200; ++trial) {
    const auto h = random_floats(rng, 6, -5.0f, 5.0f);
    CHECK(steer(h, req) == h);
  }
}

TEST_CASE("property: the steering shift is alpha W_dec w whatever h is") {
  std::mt19937_64 rng(52);
  const SaeParams sae = random_params(rng, 6, 24, 0.05f);
  const SteeringVector v = sparse_vector(rng, 24);
  for (double alpha : {0.5, 5.0, 100.0, -3.0}) {
    const SteeringRequest req{sae, v, alpha, 4};
    const auto shift = decoder_shift(sae, v, alpha);
    double shift_norm = 0.0;
    for (double x : shift) shift_norm += x * x;
    shift_norm = std::sqrt(shift_norm);
    for (int trial = 0; trial < 50; ++trial) {
      const auto h = random_floats(rng, 6);
      const auto out = steer(h, req);
      double err = 0.0;
      for (std::size_t i = 0; i < 6; ++i) {
        const double d = (static_cast<double>(out[i]) - h[i]) - shift[i];
        err += d * d;
      }
      CHECK(std::sqrt(err) <= 1e-6 * shift_norm);
    }
  }
}

TEST_CASE("requests are validated") {
  std::mt19937_64 rng(53);
  const SaeParams sae = random_params(rng, 4, 8);
  SteeringVector v = sparse_vector(rng, 8);
  CHECK_NOTHROW((SteeringRequest{sae, v, 5.0, 4}.validate()));
  CHECK_THROWS_WITH_AS((SteeringRequest{sae, v, 5.0, 3}.validate()), doctest::Contains("layer"),
                       ValidationError);
  SteeringVector short_v = sparse_vector(rng, 7);
  CHECK_THROWS_AS((SteeringRequest{sae, short_v, 5.0, 4}.validate()), ValidationError);
  SteeringVector dense_v = v;
  dense_v.space = Space::kDense;
  CHECK_THROWS_AS((SteeringRequest{sae, dense_v, 5.0, 4}.validate()), ValidationError);
  CHECK_THROWS_AS(steer(std::vector<float>(3, 0.0f), SteeringRequest{sae, v, 5.0, 4}), ValidationError);
}

TEST_CASE("batch steering") {
  std::mt19937_64 rng(54);
  const SaeParams sae = random_params(rng, 5, 10, 0.05f);
  const SteeringVector v = sparse_vector(rng, 10);
  const SteeringRequest req{sae, v, 2.5, 4};

  SUBCASE("alpha = 0 leaves payloads untouched") {
    const SteeringRequest zero{sae, v, 0.0, 4};
    const std::vector<ActivationRecord> recs = {make_record(4, 0, 5, random_floats(rng, 15), {0, 1, 1})};
    CHECK(steer_batch(recs, zero) == recs);
  }
  SUBCASE("a one-token record equals the single-vector path") {
    const auto h = random_floats(rng, 5);
    const std::vector<ActivationRecord> recs = {make_record(4, 1, 5, h)};
    CHECK(steer_batch(recs, req).front().activations == steer(h, req));
  }
  SUBCASE("property: random batches equal a per-row loop") {
    std::vector<ActivationRecord> recs;
    for (int r = 0; r < 3; ++r) {
      const std::uint32_t t = 1 + static_cast<std::uint32_t>(rng() % 5);
      std::vector<std::uint8_t> mask(t, 1);
      mask[0] = 0;
      recs.push_back(make_record(4, static_cast<std::uint32_t>(r), 5, random_floats(rng, t * 5), mask));
    }
    const auto out = steer_batch(recs, req);
    REQUIRE(out.size() == 3);
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(out[r].keep_mask == recs[r].keep_mask);
      CHECK(out[r].language_index == recs[r].language_index);
      for (std::size_t t = 0; t < recs[r].token_count(); ++t) {
        const auto row = steer(recs[r].token(t), req);
        CHECK(std::equal(row.begin(), row.end(), out[r].token(t).begin()));
      }
    }
  }
  SUBCASE("records from another layer are refused") {
    const std::vector<ActivationRecord> recs = {make_record(3, 0, 5, random_floats(rng, 5))};
    CHECK_THROWS_WITH_AS(steer_batch(recs, req), doctest::Contains("layer mismatch"), ValidationError);
  }
}

TEST_CASE("dense steering adds alpha w") {
  SteeringVector e0;
  e0.space = Space::kDense;
  e0.target_language = "x";
  e0.w = {1.0f, 0.0f, 0.0f};
  const std::vector<float> h = {0.5f, -1.0f, 2.0f};
  CHECK(dense_steer(h, e0, 0.0) == h);
  CHECK(dense_steer(h, e0, 2.0) == std::vector<float>{2.5f, -1.0f, 2.0f});

  std::mt19937_64 rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    SteeringVector w;
    w.space = Space::kDense;
    w.target_language = "x";
    w.w = random_floats(rng, 9);
    const auto x = random_floats(rng, 9);
    const auto out = dense_steer(x, w, 1.75);
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(out[i] == static_cast<float>(static_cast<double>(x[i]) + 1.75 * w.w[i]));
    }
  }
  SteeringVector sparse_w = e0;
  sparse_w.space = Space::kSparse;
  CHECK_THROWS_AS(dense_steer(h, sparse_w, 1.0), ValidationError);
}

TEST_CASE("store steering touches only the requested layer") {
  TempDir dir;
  std::mt19937_64 rng(56);
  const SaeParams sae = random_params(rng, 3, 6, 0.05f);
  const SteeringVector v = sparse_vector(rng, 6);
  std::vector<ActivationRecord> recs;
  for (std::uint32_t i = 0; i < 6; ++i) recs.push_back(make_record(i % 2 == 0 ? 4 : 7, 0, 3, random_floats(rng, 6)));
  write_store(make_manifest(3, {4, 7}, {"a"}), recs, dir / "in.saea");
  const auto input = StoreReader::open(dir / "in.saea");
  CHECK(steer_store(input, {sae, v, 5.0, 4}, dir / "out.saea") == 3);
  const auto out = StoreReader::open(dir / "out.saea").read_all();
  REQUIRE(out.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    if (recs[i].layer == 7) {
      CHECK(out[i] == recs[i]);
    } else {
      CHECK(out[i].activations != recs[i].activations);
    }
  }
  steer_store(input, {sae, v, 0.0, 4}, dir / "zero.saea");
  CHECK(saesteer::testing::read_bytes(dir / "zero.saea") == saesteer::testing::read_bytes(dir / "in.saea"));
  SteeringVector v9 = v;
  v9.layer = 9;
  CHECK_THROWS_AS(steer_store(input, {sae, v9, 1.0, 9}, dir / "bad.saea"), ValidationError);
}

TEST_CASE("checkpoints round-trip and reject corruption") {
  TempDir dir;
  std::mt19937_64 rng(57);
  const SaeParams p = random_params(rng, 5, 12);
  save_checkpoint(p, dir / "p.ckpt");
  CHECK(load_checkpoint(dir / "p.ckpt") == p);

  auto bytes = saesteer::testing::read_bytes(dir / "p.ckpt");
  // Logical D x K order on disk: W_dec[d][j] follows the encoder and its bias.
  const std::size_t dec_offset = 16 + 4 * (12 * 5 + 12);
  float first;
  std::memcpy(&first, bytes.data() + dec_offset + 4, 4);
  CHECK(first == p.dec(0, 1));

  bytes[20] ^= 1;
  saesteer::testing::write_bytes(dir / "bad.ckpt", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), FormatError);
  bytes.resize(10);
  saesteer::testing::write_bytes(dir / "short.ckpt", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
}
