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


// Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "saesteer/activation_store.hpp"
#include "saesteer/error.hpp"
#include "saesteer/lang_vectors.hpp"
#include "saesteer/layer_analysis.hpp"
#include "saesteer/sae.hpp"
#include "saesteer/steering.hpp"
#include "saesteer/synthetic.hpp"
#include "saesteer/train.hpp"
#include "saesteer_cli.hpp"
#include "support/sae_oracle.hpp"
#include "unit/test_util.hpp"

namespace fs = std::filesystem;
using namespace saesteer;
using saesteer::testing::TempDir;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Status::kPass : Status::kFail, std::move(detail)}; }

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// 1. Analytic gradients against central finite differences.

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  const double eps = 1e-3, lambda = 0.5;
  const float h = 1e-4f;
  int instances = 0, rejected = 0;
  double worst = 0.0;
  while (instances < 60) {
    const auto d = static_cast<std::uint32_t>(2 + rng() % 7);             // 2..8
    const auto k = static_cast<std::uint32_t>(d + rng() % (17 - d));      // d..16
    SaeParams p = testing::random_params(rng, d, k, 0.1f);
    Matrix batch(3, d, 0.0f);
    batch.storage() = testing::random_floats(rng, 3 * d);
    if (testing::min_gate_gap(p, batch) <= 2.0 * eps) {
      ++rejected;
      continue;
    }
    ++instances;
    const auto r = loss_and_grads(
        p, batch, {.l1_coefficient = lambda, .bandwidth = eps, .grad_through_decoder_norm = true});
    auto check = [&](std::vector<float>& values, const std::vector<float>& grads) {
      for (std::size_t i = 0; i < values.size(); ++i) {
        worst = std::max(worst, testing::rel_err(grads[i], testing::fd(p, values, i, batch, lambda, h)));
      }
    };
    check(p.w_enc, r.grads.w_enc);
    check(p.b_enc, r.grads.b_enc);
    check(p.w_dec, r.grads.w_dec);
    check(p.b_dec, r.grads.b_dec);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return pass_if(worst < 1e-4 && secs < 10.0,
                 std::to_string(instances) + " instances (" + std::to_string(rejected) +
                     " rejected near a gate), max rel err " + fmt(worst) + " < 1e-4, " + fmt(secs) + " s");
}

// ---------------------------------------------------------------------------
// 2. Multilinguality against the Jacobi eigen oracle.

Outcome eigen_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_oracle = 0.0, worst_closed = 0.0;
  int cases = 0;
  auto run = [&](const std::vector<std::uint32_t>& fam, double rho_in, double rho_out) {
    const double f = multilinguality(correlation(plant_block_correlation(fam, rho_in, rho_out)));
    const auto eig = oracle::jacobi_eigenvalues(block_correlation_target(fam, rho_in, rho_out), fam.size());
    worst_oracle = std::max(worst_oracle, std::abs(f - eig.back() / static_cast<double>(fam.size())));
    ++cases;
    return f;
  };
  for (std::size_t n = 2; n <= 10; ++n) {
    const std::vector<std::uint32_t> one(n, 0);
    for (double rho : {0.0, 0.25, 0.5, 0.9}) {
      const double f = run(one, rho, rho);
      worst_closed = std::max(worst_closed, std::abs(f - (1.0 + (n - 1.0) * rho) / n));
    }
    if (n < 3) continue;
    std::vector<std::uint32_t> two(n);
    for (std::size_t i = 0; i < n; ++i) two[i] = i < n / 2 ? 0 : 1;
    for (auto [a, b] : {std::pair{0.8, 0.2}, {0.5, 0.0}, {0.9, 0.6}, {0.3, 0.1}}) run(two, a, b);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return pass_if(worst_oracle <= 1e-10 && worst_closed <= 1e-10 && secs < 1.0,
                 std::to_string(cases) + " matrices, max |f - oracle| " + fmt(worst_oracle) +
                     ", max closed-form gap " + fmt(worst_closed) + " (<= 1e-10), " + fmt(secs) + " s");
}

// ---------------------------------------------------------------------------
// 3. Steering identity at alpha = 0 and affinity in alpha.

Outcome steering_affinity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(77);
  const std::uint32_t d = 32, k = 128;
  const SaeParams sae = testing::random_params(rng, d, k, 0.2f);
  SteeringVector vec;
  vec.layer = 0;
  vec.space = Space::kSparse;
  vec.target_language = "eng_Latn";
  vec.w = testing::random_floats(rng, k);
  double worst_id = 0.0, worst_aff = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto h = testing::random_floats(rng, d, -3.0f, 3.0f);
    const double alpha = std::uniform_real_distribution<double>(-10.0, 10.0)(rng);
    const auto same = steer(h, SteeringRequest{sae, vec, 0.0, 0});
    const auto moved = steer(h, SteeringRequest{sae, vec, alpha, 0});
    std::vector<double> id_diff(d), aff_diff(d), ref(d, 0.0), hd(h.begin(), h.end());
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < k; ++j) ref[i] += alpha * static_cast<double>(sae.dec(i, j)) * vec.w[j];
      id_diff[i] = static_cast<double>(same[i]) - h[i];
      aff_diff[i] = (static_cast<double>(moved[i]) - h[i]) - ref[i];
    }
    worst_id = std::max(worst_id, norm(id_diff) / norm(hd));
    worst_aff = std::max(worst_aff, norm(aff_diff) / norm(ref));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return pass_if(worst_id <= 1e-6 && worst_aff <= 1e-5 && secs < 5.0,
                 "1000 vectors, identity rel " + fmt(worst_id) + " <= 1e-6, affinity rel " +
                     fmt(worst_aff) + " <= 1e-5, " + fmt(secs) + " s");
}

// ---------------------------------------------------------------------------
// CLI helpers.

int cli_run(std::vector<std::string> args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  if (code != 0) std::cerr << "  cli error: " << e.str();
  return code;
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(); }

// ---------------------------------------------------------------------------
// 4. Planted intersections through the command line pipeline.

Outcome planted_intersections() {
  const auto t0 = std::chrono::steady_clock::now();
  TempDir dir;
  int seeds_ok = 0, oracle_total = 0;
  double worst = 0.0;
  std::string first_failure;
  for (int seed = 0; seed < 20; ++seed) {
    const fs::path root = dir / ("seed" + std::to_string(seed));
    fs::create_directories(root);
    write_json(root / "spec.json", {{"n_languages", 6}, {"d_model", 32}, {"n_layers", 12},
                                    {"sigma_fraction", 0.01}, {"seed", seed}});
    const std::string store = (root / "s.saea").string();
    const std::string vdir = (root / "vec").string();
    bool ok = cli_run({"gen-synthetic", "--spec", (root / "spec.json").string(), "--out", store}) == 0;
    for (int layer = 0; ok && layer < 12; ++layer) {
      ok = cli_run({"build-vectors", "--store", store, "--layer", std::to_string(layer), "--space",
                    "dense", "--out-dir", vdir}) == 0;
    }
    ok = ok && cli_run({"select-layers", "--vector-dir", vdir, "--layers", "0-11", "--out",
                        (root / "report").string()}) == 0;
    if (!ok) {
      if (first_failure.empty()) first_failure = "seed " + std::to_string(seed) + ": CLI error";
      continue;
    }
    const auto oracle = oracle_from_json(nlohmann::json::parse(std::ifstream(store + ".oracle.json")));
    const auto found = nlohmann::json::parse(std::ifstream(root / "report.json"))
                           .at("intersections")
                           .get<std::vector<double>>();
    oracle_total += static_cast<int>(oracle.intersections.size());
    bool match = found.size() == oracle.intersections.size();
    for (std::size_t i = 0; match && i < found.size(); ++i) {
      const double gap = std::abs(found[i] - oracle.intersections[i]);
      worst = std::max(worst, gap);
      match = gap <= 0.5;
    }
    if (match) {
      ++seeds_ok;
    } else if (first_failure.empty()) {
      first_failure = "seed " + std::to_string(seed) + ": found " + std::to_string(found.size()) +
                      " crossings, oracle " + std::to_string(oracle.intersections.size());
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string detail = std::to_string(seeds_ok) + "/20 seeds match (" + std::to_string(oracle_total) +
                       " oracle crossings, max offset " + fmt(worst) + " <= 0.5), " + fmt(secs) + " s";
  if (!first_failure.empty()) detail += "; " + first_failure;
  return pass_if(seeds_ok == 20 && oracle_total > 0 && secs < 60.0, detail);
}

// ---------------------------------------------------------------------------
// 5. SAE trainability.

Outcome trainability() {
  const auto t0 = std::chrono::steady_clock::now();

  // One-point dataset: 64 copies of a fixed vector.
  std::mt19937_64 rng(3);
  std::vector<float> hstar(8);
  double n2 = 0.0;
  for (auto& x : hstar) {
    x = static_cast<float>(2.0 * uniform01(rng) - 1.0);
    n2 += static_cast<double>(x) * x;
  }
  Matrix point(64, 8, 0.0f);
  for (std::size_t r = 0; r < 64; ++r) std::copy(hstar.begin(), hstar.end(), point.row(r).begin());
  double worst_point = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainConfig c;
    c.expansion_factor = 2;
    c = c.scaled_to(2000);
    c.lr = 5e-3;
    c.batch_tokens = 64;
    c.seed = seed;
    const auto r = train_sae(point, c);
    worst_point = std::max(worst_point, loss_and_grads(r.params, point, {}).recon_loss / n2);
  }

  // Three-language synthetic store.
  TempDir dir;
  double worst_ratio = 0.0, worst_l0 = 0.0;
  std::uint32_t k = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SynthSpec s;
    s.n_languages = 3;
    s.d_model = 8;
    s.n_layers = 1;
    s.samples_per_language = 512;
    s.sigma_fraction = 0.05;
    s.blend = {0.5};
    s.seed = seed;
    generate(s, dir / "three.saea");
    const Matrix x = gather_kept_tokens(StoreReader::open(dir / "three.saea"), 0);
    std::vector<double> mu(x.cols(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t i = 0; i < x.cols(); ++i) mu[i] += x(r, i) / static_cast<double>(x.rows());
    }
    double var = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t i = 0; i < x.cols(); ++i) var += (x(r, i) - mu[i]) * (x(r, i) - mu[i]);
    }
    var /= static_cast<double>(x.rows());
    TrainConfig c;
    c = c.scaled_to(3000);
    c.lr = 2e-3;
    c.l1_coefficient = 5.0;
    c.batch_tokens = 256;
    c.init_threshold = 0.1;
    c.seed = seed;
    const auto r = train_sae(x, c);
    const auto full = loss_and_grads(r.params, x, {});
    k = r.params.n_features;
    worst_ratio = std::max(worst_ratio, full.recon_loss / var);
    worst_l0 = std::max(worst_l0, full.mean_l0);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return pass_if(worst_point < 1e-3 && worst_l0 < k / 4.0 && worst_ratio < 0.1 && secs < 300.0,
                 "one-point recon/|h|^2 " + fmt(worst_point) + " < 1e-3 (5 seeds); 3-language L0 " +
                     fmt(worst_l0) + " < K/4 = " + fmt(k / 4.0) + ", recon/var " + fmt(worst_ratio) +
                     " < 0.1 (3 seeds), " + fmt(secs) + " s");
}

// ---------------------------------------------------------------------------
// 6. Determinism of every subcommand.

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (auto b : bytes) h = (h ^ b) * 1099511628211ull;
  return h;
}

// Hash of every regular file under `root`, keyed by relative path.
std::map<std::string, std::uint64_t> hash_tree(const fs::path& root) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = fnv1a(testing::read_bytes(e.path()));
  }
  return out;
}

Outcome determinism() {
  TempDir dir;
  auto pipeline = [&](const fs::path& root, std::map<std::string, std::uint64_t>& stdout_hashes) {
    fs::create_directories(root / "work");
    const fs::path w = root / "work";
    write_json(root / "spec.json", {{"n_languages", 4}, {"d_model", 8}, {"n_layers", 3},
                                    {"samples_per_language", 32}, {"sigma_fraction", 0.02}, {"seed", 9}});
    const std::string store = (w / "s.saea").string(), ckpt = (w / "l1.sae").string();
    const std::string vdir = (w / "vec").string();
    std::string text;
    bool ok = cli_run({"gen-synthetic", "--spec", (root / "spec.json").string(), "--out", store}) == 0;
    ok = ok && cli_run({"train-sae", "--store", store, "--layer", "1", "--out", ckpt, "--scale-steps",
                        "200", "--batch-tokens", "32", "--seed", "4", "--log-interval", "10"}) == 0;
    for (const char* layer : {"0", "1", "2"}) {
      ok = ok && cli_run({"build-vectors", "--store", store, "--layer", layer, "--space", "dense",
                          "--out-dir", vdir}) == 0;
    }
    ok = ok && cli_run({"build-vectors", "--store", store, "--layer", "1", "--space", "sparse",
                        "--checkpoint", ckpt, "--out-dir", vdir}) == 0;
    ok = ok && cli_run({"select-layers", "--vector-dir", vdir, "--layers", "0-2", "--out",
                        (w / "report").string()}) == 0;
    ok = ok && cli_run({"steer", "--store", store, "--checkpoint", ckpt, "--vector",
                        vdir + "/layer1.deu_Latn.sparse.vec", "--out", (w / "steered.saea").string()}) == 0;
    ok = ok && cli_run({"inspect", "--store", store}, &text) == 0;
    stdout_hashes["inspect stdout"] = fnv1a({text.begin(), text.end()});
    return ok;
  };
  std::map<std::string, std::uint64_t> out_a, out_b;
  if (!pipeline(dir / "a", out_a) || !pipeline(dir / "b", out_b)) return {Status::kFail, "a CLI step failed"};
  auto a = hash_tree(dir / "a" / "work"), b = hash_tree(dir / "b" / "work");
  a.insert(out_a.begin(), out_a.end());
  b.insert(out_b.begin(), out_b.end());
  std::string mismatch;
  for (const auto& [name, h] : a) {
    if (!b.count(name) || b.at(name) != h) mismatch += " " + name;
  }
  // Every subcommand must have contributed at least one output.
  const bool complete = a.count("s.saea") && a.count("s.saea.oracle.json") && a.count("l1.sae") &&
                        a.count("l1.sae.stats.csv") && a.count("vec/layer1.sparse.vset") &&
                        a.count("report.json") && a.count("steered.saea");
  return pass_if(mismatch.empty() && a.size() == b.size() && complete,
                 std::to_string(a.size()) + " outputs from 6 subcommands compared by FNV-1a hash" +
                     (mismatch.empty() ? std::string() : "; differing:" + mismatch));
}

// ---------------------------------------------------------------------------
// 7. DiffMean equivalences.

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return norm(d) / std::max(norm(b), 1e-300);
}

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

Outcome diffmean_equivalences() {
  TempDir dir;
  std::mt19937_64 rng(31);
  double row = 0.0, anti = 0.0, ident = 0.0;

  // Row equivalence with the contrast set, dense and sparse, on a noisy store.
  SynthSpec s;
  s.n_languages = 5;
  s.d_model = 12;
  s.n_layers = 2;
  s.sigma = 0.3;
  s.seed = 8;
  generate(s, dir / "noisy.saea");
  const auto noisy = StoreReader::open(dir / "noisy.saea");
  const SaeParams sae = testing::random_params(rng, 12, 48, 0.05f);
  for (const Codec& codec : {Codec::dense(12), Codec::sparse(sae)}) {
    for (std::uint32_t layer : {0u, 1u}) {
      const auto set = contrast_set(noisy, codec, layer);
      for (std::size_t i = 0; i < set.size(); ++i) {
        row = std::max(row, rel_diff(widen(diffmean(noisy, codec, layer, set.labels[i]).w), set.vectors[i]));
      }
    }
  }

  // N = 2 antisymmetry on random two-language stores.
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = testing::make_manifest(6, {0}, {"aaa_Latn", "bbb_Latn"});
    std::vector<ActivationRecord> recs;
    for (std::uint32_t lang = 0; lang < 2; ++lang) {
      for (int r = 0; r < 3; ++r) recs.push_back(testing::make_record(0, lang, 6, testing::random_floats(rng, 6 * 4)));
    }
    write_store(m, recs, dir / "two.saea");
    const auto two = StoreReader::open(dir / "two.saea");
    const SaeParams small = testing::random_params(rng, 6, 24, 0.05f);
    for (const Codec& codec : {Codec::dense(6), Codec::sparse(small)}) {
      const auto a = widen(diffmean(two, codec, 0, "aaa_Latn").w);
      auto b = widen(diffmean(two, codec, 0, "bbb_Latn").w);
      for (auto& x : b) x = -x;
      anti = std::max(anti, rel_diff(a, b));
    }
  }

  // Closed-form identity on noiseless stores.
  for (std::uint32_t n = 3; n <= 6; ++n) {
    SynthSpec q;
    q.n_languages = n;
    q.d_model = n + 6;
    q.n_layers = 3;
    q.seed = n;
    const auto out = generate(q, dir / "clean.saea");
    const auto clean = StoreReader::open(dir / "clean.saea");
    for (std::uint32_t layer = 0; layer < 3; ++layer) {
      const auto& mu = out.means[layer];
      std::vector<double> grand(q.d_model, 0.0);
      for (const auto& m : mu) {
        for (std::size_t c = 0; c < q.d_model; ++c) grand[c] += m[c] / static_cast<double>(n);
      }
      const auto labels = q.labels();
      for (std::uint32_t i = 0; i < n; ++i) {
        std::vector<double> expect(q.d_model);
        for (std::size_t c = 0; c < q.d_model; ++c) expect[c] = n / (n - 1.0) * (mu[i][c] - grand[c]);
        ident = std::max(ident, rel_diff(widen(diffmean(clean, Codec::dense(q.d_model), layer, labels[i]).w), expect));
      }
    }
  }
  return pass_if(row <= 1e-6 && anti <= 1e-6 && ident <= 1e-6,
                 "row equivalence " + fmt(row) + ", N=2 antisymmetry " + fmt(anti) +
                     ", N/(N-1) identity " + fmt(ident) + " (all <= 1e-6 relative)");
}

// ---------------------------------------------------------------------------
// 9. Separability on exported model activations.

Outcome exported_separability(const std::optional<std::string>& path) {
  if (!path) {
    return {Status::kSkip,
            "no exported model store (pass --exported-store or set SAESTEER_EXPORTED_STORE)"};
  }
  const auto store = StoreReader::open(*path);
  ActivationRecord rec;
  auto cursor = store.scan();
  while (cursor.next(rec)) rec.validate(store.manifest().d_model);
  std::vector<LanguageVectorSet> sets;
  for (auto layer : store.manifest().layer_indices) {
    sets.push_back(contrast_set(store, Codec::dense(store.manifest().d_model), layer));
  }
  const auto profile = build_profile(sets, kDefaultIntersectionTolerance);
  const auto best = std::max_element(profile.s.begin(), profile.s.end()) - profile.s.begin();
  return pass_if(profile.s.front() < profile.s[best],
                 "s(layer " + std::to_string(profile.layers.front()) + ") = " + fmt(profile.s.front()) +
                     " vs max s(layer " + std::to_string(profile.layers[best]) + ") = " +
                     fmt(profile.s[best]));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"saesteer acceptance checks"};
  std::vector<int> only;
  std::optional<std::string> exported;
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--exported-store", exported, "Store exported from a small causal LM");
  CLI11_PARSE(app, argc, argv);
  if (!exported) {
    if (const char* env = std::getenv("SAESTEER_EXPORTED_STORE"); env && *env) exported = env;
  }

  const std::vector<std::pair<int, std::pair<std::string, std::function<Outcome()>>>> criteria = {
      {1, {"gradient correctness", gradients}},
      {2, {"eigen/multilinguality oracle", eigen_oracle}},
      {3, {"steering identity and affinity", steering_affinity}},
      {4, {"planted intersections end to end", planted_intersections}},
      {5, {"SAE trainability", trainability}},
      {6, {"CLI determinism", determinism}},
      {7, {"DiffMean equivalences", diffmean_equivalences}},
      {9, {"separability rises on exported activations", [&] { return exported_separability(exported); }}},
  };

  int failed = 0, skipped = 0, ran = 0;
  for (const auto& [id, entry] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    ++ran;
    Outcome o;
    try {
      o = entry.second();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    std::cout << "[" << tag << "] criterion " << id << " " << entry.first << ": " << o.detail << std::endl;
    failed += o.status == Status::kFail;
    skipped += o.status == Status::kSkip;
  }
  if (failed > 0) return 1;
  // Everything requested was skipped: report it as a skip to ctest.
  if (ran > 0 && skipped == ran) return 77;
  return 0;
}
