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


#include "saesteer_cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "saesteer/activation_store.hpp"
#include "saesteer/checkpoint.hpp"
#include "saesteer/error.hpp"
#include "saesteer/kernels.hpp"
#include "saesteer/lang_vectors.hpp"
#include "saesteer/layer_analysis.hpp"
#include "saesteer/steering.hpp"
#include "saesteer/synthetic.hpp"
#include "saesteer/train.hpp"

namespace saesteer::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

fs::path with_suffix(const fs::path& base, const std::string& suffix) {
  fs::path p = base;
  p += suffix;
  return p;
}

std::string vector_file_name(std::uint32_t layer, const std::string& lang, Space space) {
  return "layer" + std::to_string(layer) + "." + lang + "." + std::string(space_name(space)) + ".vec";
}

std::string vector_set_file_name(std::uint32_t layer, Space space) {
  return "layer" + std::to_string(layer) + "." + std::string(space_name(space)) + ".vset";
}

// Structured run configuration; CLI flags override every value.
struct PipelineConfig {
  json paths = json::object();
  TrainConfig train;
  std::optional<std::string> space;
  std::optional<double> tolerance;
  std::optional<double> alpha;
  std::optional<std::uint32_t> layer;

  static PipelineConfig load(const std::optional<std::string>& path) {
    PipelineConfig c;
    if (const char* env = std::getenv("SAESTEER_THREADS")) {
      const int t = std::atoi(env);
      if (t > 0) c.train.threads = static_cast<unsigned>(t);
    }
    if (!path) return c;
    const json j = read_json_file(*path);
    if (!j.is_object()) throw ValidationError("config file must hold a JSON object");
    for (const auto& [key, _] : j.items()) {
      if (key != "paths" && key != "train" && key != "analysis" && key != "steering") {
        throw ValidationError("unknown config section '" + key + "'");
      }
    }
    try {
      if (j.contains("paths")) c.paths = j.at("paths");
      if (j.contains("train")) from_json(j.at("train"), c.train);
      if (j.contains("analysis")) {
        const auto& a = j.at("analysis");
        if (a.contains("space")) c.space = a.at("space").get<std::string>();
        if (a.contains("tolerance")) c.tolerance = a.at("tolerance").get<double>();
      }
      if (j.contains("steering")) {
        const auto& s = j.at("steering");
        if (s.contains("alpha")) c.alpha = s.at("alpha").get<double>();
        if (s.contains("layer")) c.layer = s.at("layer").get<std::uint32_t>();
      }
    } catch (const json::exception& e) {
      throw ValidationError(std::string("invalid config value: ") + e.what());
    }
    c.train.validate();
    return c;
  }

  std::optional<std::string> path(const char* key) const {
    if (paths.contains(key)) return paths.at(key).get<std::string>();
    return std::nullopt;
  }
};

template <class T>
T require(const std::optional<T>& flag, const std::optional<T>& fallback, const char* name) {
  if (flag) return *flag;
  if (fallback) return *fallback;
  throw ValidationError(std::string("missing required value --") + name);
}

std::vector<std::uint32_t> parse_layer_list(const std::string& text) {
  std::vector<std::uint32_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    try {
      if (dash == std::string::npos) {
        out.push_back(static_cast<std::uint32_t>(std::stoul(item)));
      } else {
        const auto a = static_cast<std::uint32_t>(std::stoul(item.substr(0, dash)));
        const auto b = static_cast<std::uint32_t>(std::stoul(item.substr(dash + 1)));
        if (b < a) throw ValidationError("bad layer range '" + item + "'");
        for (std::uint32_t l = a; l <= b; ++l) out.push_back(l);
      }
    } catch (const std::logic_error&) {
      throw ValidationError("bad layer list '" + text + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct GenSyntheticArgs {
  std::optional<std::string> spec;
  std::optional<std::string> out;
  std::optional<std::string> oracle;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_synthetic(const GenSyntheticArgs& a, const PipelineConfig& cfg, std::ostream& out) {
  const std::string spec_path = require(a.spec, cfg.path("spec"), "spec");
  const fs::path store_path = require(a.out, cfg.path("store"), "out");
  SynthSpec spec;
  from_json(read_json_file(spec_path), spec);
  if (a.seed) spec.seed = *a.seed;
  spec.validate();
  const fs::path oracle_path = a.oracle ? fs::path(*a.oracle) : with_suffix(store_path, ".oracle.json");
  const SynthOutput result = generate(spec, store_path);
  write_text_file(oracle_path, oracle_json(result.oracle, spec.tolerance).dump(2) + "\n");
  out << "wrote " << store_path.string() << " (" << result.manifest.total_records()
      << " records) and " << oracle_path.string() << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::optional<std::string> store;
  std::optional<std::uint32_t> layer;
  std::optional<std::string> out;
  std::optional<std::string> stats;
  std::uint64_t log_interval = 100;
  // Overrides for every TrainConfig field.
  std::optional<std::uint32_t> expansion_factor;
  std::optional<double> l1_coefficient, bandwidth, init_threshold, lr, adam_beta1, adam_beta2,
      adam_eps, dead_threshold;
  std::optional<std::uint64_t> lr_warmup_steps, lr_decay_steps, l1_warmup_steps, steps,
      batch_tokens, feature_sampling_window, dead_feature_window, seed;
  std::optional<bool> resample_dead, grad_through_decoder_norm;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> scale_steps;
};

int cmd_train(const TrainArgs& a, const PipelineConfig& cfg, std::ostream& out) {
  const fs::path store_path = require(a.store, cfg.path("store"), "store");
  const fs::path ckpt_path = require(a.out, cfg.path("checkpoint"), "out");
  const std::uint32_t layer = require(a.layer, cfg.layer, "layer");
  TrainConfig c = cfg.train;
  if (a.scale_steps) c = c.scaled_to(*a.scale_steps);
#define OVERRIDE(name) \
  if (a.name) c.name = *a.name;
  OVERRIDE(expansion_factor) OVERRIDE(l1_coefficient) OVERRIDE(bandwidth)
  OVERRIDE(init_threshold) OVERRIDE(lr) OVERRIDE(adam_beta1) OVERRIDE(adam_beta2)
  OVERRIDE(adam_eps) OVERRIDE(dead_threshold) OVERRIDE(lr_warmup_steps) OVERRIDE(lr_decay_steps)
  OVERRIDE(l1_warmup_steps) OVERRIDE(steps) OVERRIDE(batch_tokens)
  OVERRIDE(feature_sampling_window) OVERRIDE(dead_feature_window) OVERRIDE(seed)
  OVERRIDE(resample_dead) OVERRIDE(grad_through_decoder_norm) OVERRIDE(threads)
#undef OVERRIDE
  c.validate();
  if (a.log_interval == 0) throw ValidationError("--log-interval must be positive");

  const StoreReader store = StoreReader::open(store_path);
  if (!store.manifest().layer_position(layer)) {
    throw ValidationError("store has no layer " + std::to_string(layer));
  }
  std::string csv = "step,recon_loss,sparsity_loss,mean_l0,dead_features,lr,l1_coefficient\n";
  const std::uint64_t last = c.steps == 0 ? 0 : c.steps - 1;
  const TrainResult result = train_sae(store, layer, c, [&](const TrainStats& s) {
    if (s.step % a.log_interval != 0 && s.step != last) return;
    char line[256];
    std::snprintf(line, sizeof(line), "%llu,%.9g,%.9g,%.9g,%llu,%.9g,%.9g\n",
                  static_cast<unsigned long long>(s.step), s.recon_loss, s.sparsity_loss,
                  s.mean_l0, static_cast<unsigned long long>(s.dead_feature_count), s.lr,
                  s.l1_coefficient);
    csv += line;
  });
  save_checkpoint(result.params, ckpt_path);
  const fs::path stats_path = a.stats ? fs::path(*a.stats) : with_suffix(ckpt_path, ".stats.csv");
  write_text_file(stats_path, csv);
  out << "trained D=" << result.params.d_model << " K=" << result.params.n_features << " for "
      << c.steps << " steps; wrote " << ckpt_path.string() << "\n";
  return kExitOk;
}

struct BuildVectorsArgs {
  std::optional<std::string> store;
  std::optional<std::string> checkpoint;
  std::optional<std::uint32_t> layer;
  std::optional<std::string> space;
  std::optional<std::string> out_dir;
  std::optional<double> alpha;
  std::string suite = "llama";
};

int cmd_build_vectors(const BuildVectorsArgs& a, const PipelineConfig& cfg, std::ostream& out) {
  const fs::path store_path = require(a.store, cfg.path("store"), "store");
  const fs::path out_dir = require(a.out_dir, cfg.path("vectors"), "out-dir");
  const std::uint32_t layer = require(a.layer, cfg.layer, "layer");
  const Space space = parse_space(require(a.space, cfg.space, "space"));
  const double alpha = a.alpha ? *a.alpha : (cfg.alpha ? *cfg.alpha : suite_default_alpha(parse_suite(a.suite)));
  std::optional<std::string> ckpt = a.checkpoint ? a.checkpoint : cfg.path("checkpoint");
  if (space == Space::kSparse && !ckpt) {
    throw ValidationError("sparse-space vectors need --checkpoint");
  }

  const StoreReader store = StoreReader::open(store_path);
  if (!store.manifest().layer_position(layer)) {
    throw ValidationError("store has no layer " + std::to_string(layer));
  }
  std::optional<SaeParams> sae;
  if (space == Space::kSparse) {
    sae = load_checkpoint(*ckpt);
    if (sae->d_model != store.manifest().d_model) {
      throw ValidationError("checkpoint D does not match the store's d_model");
    }
  }
  const Codec codec = sae ? Codec::sparse(*sae) : Codec::dense(store.manifest().d_model);
  const LanguageSums sums = language_sums(store, codec, layer);
  const LanguageVectorSet set = contrast_from_sums(sums);

  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < set.size(); ++i) {
    SteeringVector v;
    v.layer = layer;
    v.space = space;
    v.target_language = set.labels[i];
    v.w.assign(set.vectors[i].begin(), set.vectors[i].end());
    v.default_alpha = alpha;
    save_steering_vector(v, out_dir / vector_file_name(layer, set.labels[i], space));
  }
  save_vector_set(set, out_dir / vector_set_file_name(layer, space));
  out << "wrote " << set.size() << " steering vectors and "
      << vector_set_file_name(layer, space) << " to " << out_dir.string() << "\n";
  return kExitOk;
}

struct SelectLayersArgs {
  std::vector<std::string> vectors;
  std::optional<std::string> vector_dir;
  std::optional<std::string> layers;
  std::optional<std::string> space;
  std::optional<double> tolerance;
  std::optional<std::string> out;
  std::optional<std::string> families;
};

int cmd_select_layers(const SelectLayersArgs& a, const PipelineConfig& cfg, std::ostream& out) {
  const fs::path prefix = require(a.out, cfg.path("reports"), "out");
  const double tau = a.tolerance ? *a.tolerance : cfg.tolerance.value_or(kDefaultIntersectionTolerance);
  if (!(tau >= 0.0)) throw ValidationError("--tolerance must be non-negative");

  std::vector<LanguageVectorSet> sets;
  if (a.vector_dir || a.layers) {
    if (!a.vector_dir || !a.layers) {
      throw ValidationError("--vector-dir and --layers must be given together");
    }
    const Space space = parse_space(a.space ? *a.space : cfg.space.value_or("dense"));
    for (auto layer : parse_layer_list(*a.layers)) {
      const fs::path p = fs::path(*a.vector_dir) / vector_set_file_name(layer, space);
      if (!fs::exists(p)) {
        throw ValidationError("missing vector set for layer " + std::to_string(layer) + " (" +
                              p.string() + ")");
      }
      sets.push_back(load_vector_set(p));
    }
  }
  for (const auto& p : a.vectors) {
    if (!fs::exists(p)) throw ValidationError("missing vector set file '" + p + "'");
    sets.push_back(load_vector_set(p));
  }
  if (sets.size() < 2) throw ValidationError("select-layers needs vector sets for at least 2 layers");

  const LayerProfile profile = build_profile(sets, tau);
  json report = profile_json(profile, tau);
  if (a.families) {
    const json fam = read_json_file(*a.families);
    std::map<std::string, std::string> family_of;
    try {
      family_of = fam.get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
      throw ValidationError(std::string("families file must map language -> family: ") + e.what());
    }
    report["families"] = json::array();
    for (const auto& set : sets) {
      json entry = family_report_json(family_report(correlation(set), family_of));
      entry["layer"] = set.layer;
      report["families"].push_back(std::move(entry));
    }
  }
  write_text_file(with_suffix(prefix, ".csv"), profile_csv(profile));
  write_text_file(with_suffix(prefix, ".json"), report.dump(2) + "\n");
  out << "layers analysed: " << profile.layers.size() << "; intersections:";
  if (profile.intersections.empty()) out << " none";
  for (double x : profile.intersections) out << " " << x;
  out << "\n";
  return kExitOk;
}

struct SteerArgs {
  std::optional<std::string> store;
  std::optional<std::string> checkpoint;
  std::optional<std::string> vector;
  std::optional<double> alpha;
  std::optional<std::string> suite;
  std::optional<std::uint32_t> layer;
  std::optional<std::string> out;
};

int cmd_steer(const SteerArgs& a, const PipelineConfig& cfg, std::ostream& out) {
  const fs::path store_path = require(a.store, cfg.path("store"), "store");
  const fs::path ckpt_path = require(a.checkpoint, cfg.path("checkpoint"), "checkpoint");
  const fs::path vector_path = require(a.vector, cfg.path("vector"), "vector");
  const fs::path out_path = require(a.out, cfg.path("steered"), "out");

  const SaeParams sae = load_checkpoint(ckpt_path);
  const SteeringVector vec = load_steering_vector(vector_path);
  double alpha = vec.default_alpha;
  if (a.alpha) {
    alpha = *a.alpha;
  } else if (a.suite) {
    alpha = suite_default_alpha(parse_suite(*a.suite));
  } else if (cfg.alpha) {
    alpha = *cfg.alpha;
  }
  const std::uint32_t layer = a.layer ? *a.layer : cfg.layer.value_or(vec.layer);
  const SteeringRequest req{sae, vec, alpha, layer};
  req.validate();
  const StoreReader store = StoreReader::open(store_path);
  const std::size_t n = steer_store(store, req, out_path);
  out << "steered " << n << " records at layer " << layer << " toward " << vec.target_language
      << " with alpha " << alpha << "; wrote " << out_path.string() << "\n";
  return kExitOk;
}

struct InspectArgs {
  std::optional<std::string> store;
};

int cmd_inspect(const InspectArgs& a, const PipelineConfig& cfg, std::ostream& out) {
  const fs::path store_path = require(a.store, cfg.path("store"), "store");
  const StoreReader store = StoreReader::open(store_path);
  const auto& m = store.manifest();
  std::uint64_t tokens = 0, kept = 0;
  auto cursor = store.scan();
  ActivationRecord rec;
  while (cursor.next(rec)) {
    rec.validate(m.d_model);
    tokens += rec.token_count();
    kept += rec.kept_count();
  }
  json j;
  j["model_name"] = m.model_name;
  j["d_model"] = m.d_model;
  j["layers"] = m.layer_indices;
  j["languages"] = m.languages;
  j["counts"] = m.record_counts;
  j["records"] = m.total_records();
  j["tokens"] = tokens;
  j["kept_tokens"] = kept;
  j["kernels"] = std::string(kernels::backend_name(kernels::active().backend));
  out << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"SAE-based multilingual steering toolkit"};
  app.require_subcommand(1);
  std::optional<std::string> config_path;
  app.add_option("--config", config_path, "JSON pipeline config (flags override it)");

  GenSyntheticArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write a synthetic store and its oracle profile");
  gen_cmd->add_option("--spec", gen.spec, "Synthetic spec JSON");
  gen_cmd->add_option("--out", gen.out, "Output store path");
  gen_cmd->add_option("--oracle", gen.oracle, "Oracle JSON path (default <out>.oracle.json)");
  gen_cmd->add_option("--seed", gen.seed, "Override the spec seed");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train-sae", "Train a JumpReLU SAE on one layer");
  train_cmd->add_option("--store", tr.store, "Activation store");
  train_cmd->add_option("--layer", tr.layer, "Layer index");
  train_cmd->add_option("--out", tr.out, "Checkpoint path");
  train_cmd->add_option("--stats", tr.stats, "Stats CSV path (default <out>.stats.csv)");
  train_cmd->add_option("--log-interval", tr.log_interval, "Steps between stats rows");
  train_cmd->add_option("--scale-steps", tr.scale_steps,
                        "Rescale the schedule lengths to this many steps");
  train_cmd->add_option("--expansion-factor", tr.expansion_factor);
  train_cmd->add_option("--l1-coefficient", tr.l1_coefficient);
  train_cmd->add_option("--bandwidth", tr.bandwidth);
  train_cmd->add_option("--init-threshold", tr.init_threshold);
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--adam-beta1", tr.adam_beta1);
  train_cmd->add_option("--adam-beta2", tr.adam_beta2);
  train_cmd->add_option("--adam-eps", tr.adam_eps);
  train_cmd->add_option("--lr-warmup-steps", tr.lr_warmup_steps);
  train_cmd->add_option("--lr-decay-steps", tr.lr_decay_steps);
  train_cmd->add_option("--l1-warmup-steps", tr.l1_warmup_steps);
  train_cmd->add_option("--steps", tr.steps);
  train_cmd->add_option("--batch-tokens", tr.batch_tokens);
  train_cmd->add_option("--feature-sampling-window", tr.feature_sampling_window);
  train_cmd->add_option("--dead-feature-window", tr.dead_feature_window);
  train_cmd->add_option("--dead-threshold", tr.dead_threshold);
  train_cmd->add_option("--resample-dead", tr.resample_dead);
  train_cmd->add_option("--grad-through-decoder-norm", tr.grad_through_decoder_norm);
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--threads", tr.threads);

  BuildVectorsArgs bv;
  auto* bv_cmd = app.add_subcommand("build-vectors", "Build DiffMean vectors for every language");
  bv_cmd->add_option("--store", bv.store, "Activation store");
  bv_cmd->add_option("--checkpoint", bv.checkpoint, "SAE checkpoint (sparse space)");
  bv_cmd->add_option("--layer", bv.layer, "Layer index");
  bv_cmd->add_option("--space", bv.space, "sparse | dense");
  bv_cmd->add_option("--out-dir", bv.out_dir, "Output directory");
  bv_cmd->add_option("--alpha", bv.alpha, "Default strength recorded in the vector files");
  bv_cmd->add_option("--suite", bv.suite, "llama (alpha 5) | gemma (alpha 100)");

  SelectLayersArgs sl;
  auto* sl_cmd = app.add_subcommand("select-layers", "Multilinguality/separability curves and intersections");
  sl_cmd->add_option("--vectors", sl.vectors, "Vector-set files, one per layer");
  sl_cmd->add_option("--vector-dir", sl.vector_dir, "Directory written by build-vectors");
  sl_cmd->add_option("--layers", sl.layers, "Layers to load from --vector-dir, e.g. 0-11");
  sl_cmd->add_option("--space", sl.space, "sparse | dense (with --vector-dir)");
  sl_cmd->add_option("--tolerance", sl.tolerance, "Tolerance on 2f-1");
  sl_cmd->add_option("--out", sl.out, "Report prefix (<out>.csv, <out>.json)");
  sl_cmd->add_option("--families", sl.families, "JSON map language -> family");

  SteerArgs st;
  auto* st_cmd = app.add_subcommand("steer", "Apply SAE steering to a store");
  st_cmd->add_option("--store", st.store, "Input store");
  st_cmd->add_option("--checkpoint", st.checkpoint, "SAE checkpoint");
  st_cmd->add_option("--vector", st.vector, "Sparse-space steering vector file");
  st_cmd->add_option("--alpha", st.alpha, "Steering strength");
  st_cmd->add_option("--suite", st.suite, "llama (alpha 5) | gemma (alpha 100)");
  st_cmd->add_option("--layer", st.layer, "Layer to steer (default: the vector's layer)");
  st_cmd->add_option("--out", st.out, "Output store");

  InspectArgs in;
  auto* in_cmd = app.add_subcommand("inspect", "Validate a store and print its manifest");
  in_cmd->add_option("--store", in.store, "Activation store");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    const PipelineConfig cfg = PipelineConfig::load(config_path);
    if (*gen_cmd) return cmd_gen_synthetic(gen, cfg, out);
    if (*train_cmd) return cmd_train(tr, cfg, out);
    if (*bv_cmd) return cmd_build_vectors(bv, cfg, out);
    if (*sl_cmd) return cmd_select_layers(sl, cfg, out);
    if (*st_cmd) return cmd_steer(st, cfg, out);
    if (*in_cmd) return cmd_inspect(in, cfg, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace saesteer::cli
