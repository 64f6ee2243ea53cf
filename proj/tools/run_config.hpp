// Copyright 2026 The TAPO Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TAPO_TOOLS_RUN_CONFIG_HPP_
#define TAPO_TOOLS_RUN_CONFIG_HPP_

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "tapo/eval.hpp"
#include "tapo/schema.hpp"
#include "tapo/synthetic.hpp"
#include "tapo/trainer.hpp"

namespace tapo::tools {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kSyntheticCorpus = "synthetic";

// Everything a train/compare run depends on. Flags override file values.
struct RunConfig {
  std::string prompts = TAPO_DATA_DIR "/asap_prompts.json";
  std::string corpus;    // CSV path, or "synthetic"
  std::string features;  // optional features CSV for a CSV corpus
  std::size_t synthetic_train = 2000;
  std::size_t synthetic_heldout = 500;
  SyntheticTask synthetic;
  std::size_t folds = 5;
  std::size_t heldout_fold = 0;
  bool conditioning = true;
  OptimizerConfig optimizer;
  std::string out = "run";
};

inline std::string norm_name(OuterNorm n) {
  return n == OuterNorm::kJoint ? "joint" : "per-position";
}

inline OuterNorm parse_norm(const std::string& s) {
  if (s == "per-position") return OuterNorm::kPerPosition;
  if (s == "joint") return OuterNorm::kJoint;
  throw ConfigError("unknown outer_norm '" + s + "' (expected per-position or joint)");
}

// Infinity is not representable in JSON; it is written as the string "inf".
inline nlohmann::json number_or_inf(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

inline double read_number_or_inf(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw ConfigError("expected a number or \"inf\"");
  }
  return j.get<double>();
}

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& o = c.optimizer;
  return {
      {"prompts", c.prompts},
      {"corpus", c.corpus},
      {"features", c.features},
      {"synthetic",
       {{"n_train", c.synthetic_train},
        {"n_heldout", c.synthetic_heldout},
        {"quality_mean", c.synthetic.quality_mean},
        {"quality_sd", c.synthetic.quality_sd},
        {"trait_noise", c.synthetic.trait_noise},
        {"noise_by_trait", c.synthetic.noise_by_trait},
        {"observation_noise", c.synthetic.observation_noise},
        {"prompt_ids", c.synthetic.prompt_ids}}},
      {"folds", c.folds},
      {"heldout_fold", c.heldout_fold},
      {"conditioning", c.conditioning},
      {"mode", to_string(o.mode)},
      {"seed", o.seed},
      {"threads", o.threads},
      {"optimizer",
       {{"group_size", o.group_size},
        {"epochs", o.epochs},
        {"batch_size", o.batch_size},
        {"learning_rate", o.learning_rate},
        {"clip_ratio", o.clip_ratio},
        {"kl_coeff", o.kl_coeff},
        {"lambda_loc", o.credit.lambda_loc},
        {"clip_max", number_or_inf(o.credit.clip_max)},
        {"outer_norm", norm_name(o.credit.outer_norm)},
        {"eval_interval", o.eval_interval},
        {"inner_passes", o.inner_passes},
        {"fault_probability", o.fault_probability},
        {"epsilon", o.epsilon}}},
      {"reward",
       {{"alpha", o.reward.alpha},
        {"beta", o.reward.beta},
        {"delta", o.reward.delta},
        {"lambda_rel", o.reward.lambda_rel},
        {"lambda_fmt", o.reward.lambda_fmt}}},
      {"out", c.out},
  };
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace detail

// Missing keys keep their defaults. A run manifest is accepted as well: its
// "config" object is used.
inline RunConfig run_config_from_json(const nlohmann::json& doc) {
  const nlohmann::json& j = doc.contains("config") && doc.at("config").is_object()
                                ? doc.at("config")
                                : doc;
  RunConfig c;
  using detail::read_field;
  try {
    read_field(j, "prompts", c.prompts);
    read_field(j, "corpus", c.corpus);
    read_field(j, "features", c.features);
    read_field(j, "folds", c.folds);
    read_field(j, "heldout_fold", c.heldout_fold);
    read_field(j, "conditioning", c.conditioning);
    read_field(j, "seed", c.optimizer.seed);
    read_field(j, "threads", c.optimizer.threads);
    read_field(j, "out", c.out);
    if (j.contains("mode")) c.optimizer.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      read_field(s, "n_train", c.synthetic_train);
      read_field(s, "n_heldout", c.synthetic_heldout);
      read_field(s, "quality_mean", c.synthetic.quality_mean);
      read_field(s, "quality_sd", c.synthetic.quality_sd);
      read_field(s, "trait_noise", c.synthetic.trait_noise);
      read_field(s, "noise_by_trait", c.synthetic.noise_by_trait);
      read_field(s, "observation_noise", c.synthetic.observation_noise);
      read_field(s, "prompt_ids", c.synthetic.prompt_ids);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      auto& d = c.optimizer;
      read_field(o, "group_size", d.group_size);
      read_field(o, "epochs", d.epochs);
      read_field(o, "batch_size", d.batch_size);
      read_field(o, "learning_rate", d.learning_rate);
      read_field(o, "clip_ratio", d.clip_ratio);
      read_field(o, "kl_coeff", d.kl_coeff);
      read_field(o, "lambda_loc", d.credit.lambda_loc);
      if (o.contains("clip_max")) d.credit.clip_max = read_number_or_inf(o.at("clip_max"));
      if (o.contains("outer_norm")) {
        d.credit.outer_norm = parse_norm(o.at("outer_norm").get<std::string>());
      }
      read_field(o, "eval_interval", d.eval_interval);
      read_field(o, "inner_passes", d.inner_passes);
      read_field(o, "fault_probability", d.fault_probability);
      read_field(o, "epsilon", d.epsilon);
    }
    if (j.contains("reward")) {
      const auto& r = j.at("reward");
      auto& d = c.optimizer.reward;
      read_field(r, "alpha", d.alpha);
      read_field(r, "beta", d.beta);
      read_field(r, "delta", d.delta);
      read_field(r, "lambda_rel", d.lambda_rel);
      read_field(r, "lambda_fmt", d.lambda_fmt);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
}

// Train and held-out examples resolved against a dataset config.
struct PreparedData {
  std::vector<EssayRecord> records;
  std::vector<std::vector<double>> features;
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> heldout;
  std::map<std::string, std::size_t> folds;  // CSV corpora only
  std::size_t feature_dim = 0;
};

inline std::uint64_t synthetic_data_seed(std::uint64_t seed) { return derive_seed(seed, 0xDA7A); }

inline std::vector<std::vector<double>> resolve_features(
    std::span<const EssayRecord> records, const std::string& features_path) {
  std::vector<std::vector<double>> features;
  if (features_path.empty()) {
    for (const auto& r : records) features.push_back(text_features(r.essay_text));
    return features;
  }
  std::ifstream in(features_path);
  if (!in) throw IngestError("cannot open features file '" + features_path + "'");
  const auto table = read_features(in);
  for (const auto& r : records) {
    const auto it = table.find(r.essay_id);
    if (it == table.end()) throw IngestError("features file has no row for essay " + r.essay_id);
    features.push_back(it->second);
  }
  return features;
}

inline PreparedData prepare_data(const RunConfig& c, const DatasetConfig& dataset) {
  if (c.corpus.empty()) throw ConfigError("missing required field 'corpus'");
  PreparedData d;
  std::vector<bool> held;
  if (c.corpus == kSyntheticCorpus) {
    auto syn = generate_synthetic(c.synthetic, dataset, c.synthetic_train + c.synthetic_heldout,
                                  synthetic_data_seed(c.optimizer.seed));
    d.records = std::move(syn.records);
    d.features = std::move(syn.features);
    held.assign(d.records.size(), false);
    for (std::size_t i = c.synthetic_train; i < held.size(); ++i) held[i] = true;
  } else {
    d.records = load_corpus(c.corpus, dataset);
    if (d.records.empty()) throw ConfigError("corpus '" + c.corpus + "' has no rows");
    d.features = resolve_features(d.records, c.features);
    const auto plan = make_folds(d.records, c.folds, c.optimizer.seed);
    if (c.heldout_fold >= c.folds) throw ConfigError("heldout_fold must be < folds");
    for (const auto& r : d.records) held.push_back(plan.fold_of(r.essay_id) == c.heldout_fold);
    d.folds = plan.assignments;
  }
  d.feature_dim = d.features.empty() ? 0 : d.features.front().size();
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    if (d.features[i].size() != d.feature_dim) throw IngestError("inconsistent feature width");
    TrainingExample ex{d.records[i].essay_id, &dataset.at(d.records[i].prompt_id), d.features[i],
                       d.records[i].gold};
    (held[i] ? d.heldout : d.train).push_back(std::move(ex));
  }
  return d;
}

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "";
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

struct Manifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;

  void write(const std::string& path) const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["tool_version"] = kToolVersion;
    j["inputs"] = nlohmann::json::array();
    for (const auto& p : inputs) {
      j["inputs"].push_back({{"path", p}, {"sha256", sha256_file(p)}});
    }
    j["outputs"] = outputs;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write manifest '" + path + "'");
    out << j.dump(2) << '\n';
  }
};

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace tapo::tools

#endif  // TAPO_TOOLS_RUN_CONFIG_HPP_
