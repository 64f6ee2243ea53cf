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

#ifndef TAPO_SYNTHETIC_HPP_
#define TAPO_SYNTHETIC_HPP_

// Synthetic multi-trait corpora and essay feature extraction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tapo/csv.hpp"
#include "tapo/policy.hpp"
#include "tapo/schema.hpp"

namespace tapo {

// Each essay draws a latent quality u ~ N(quality_mean, quality_sd) clamped
// to [0, 1]. Valid trait j gets q_j = u + trait_noise_j * N(0, 1), and its
// gold score is q_j mapped onto the trait range, rounded to the grid and
// clamped. The feature vector is [u, o_1, ..., o_T] centered at 0.5, where
// o_j = q_j + observation_noise * N(0, 1) (0.5 for inapplicable traits).
struct SyntheticTask {
  double quality_mean = 0.5;
  double quality_sd = 0.2;
  double trait_noise = 0.15;                // applies to traits without an override
  std::map<std::string, double> noise_by_trait;
  double observation_noise = 0.05;
  std::vector<std::string> prompt_ids;      // prompts to emulate; empty = all

  void validate(const DatasetConfig& dataset) const {
    if (!(quality_sd >= 0) || !(trait_noise >= 0) || !(observation_noise >= 0)) {
      throw ConfigError("synthetic task: noise scales must be non-negative");
    }
    for (const auto& [name, v] : noise_by_trait) {
      if (!dataset.schema.index_of(name)) {
        throw ConfigError("synthetic task: unknown trait '" + name + "'");
      }
      if (!(v >= 0)) throw ConfigError("synthetic task: noise must be non-negative");
    }
    for (const auto& id : prompt_ids) dataset.at(id);
  }

  double noise_for(const std::string& trait) const {
    const auto it = noise_by_trait.find(trait);
    return it == noise_by_trait.end() ? trait_noise : it->second;
  }
};

struct SyntheticCorpus {
  std::vector<EssayRecord> records;
  std::vector<std::vector<double>> features;  // aligned with records
};

inline std::size_t synthetic_feature_dim(const TraitSchema& schema) { return schema.size() + 1; }

inline SyntheticCorpus generate_synthetic(const SyntheticTask& task,
                                          const DatasetConfig& dataset, std::size_t n,
                                          std::uint64_t seed) {
  task.validate(dataset);
  std::vector<const PromptConfig*> prompts;
  if (task.prompt_ids.empty()) {
    for (const auto& p : dataset.prompts) prompts.push_back(&p);
  } else {
    for (const auto& id : task.prompt_ids) prompts.push_back(&dataset.at(id));
  }
  const auto& schema = dataset.schema;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SyntheticCorpus out;
  out.records.reserve(n);
  out.features.reserve(n);
  for (std::size_t e = 0; e < n; ++e) {
    const auto& config =
        *prompts[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(prompts.size()))];
    const double u = std::clamp(task.quality_mean + task.quality_sd * normal(rng), 0.0, 1.0);
    EssayRecord rec;
    rec.essay_id = "syn" + std::to_string(e);
    rec.prompt_id = config.prompt_id();
    rec.gold = ScoreVector::all_nan(schema.size());
    std::vector<double> x(synthetic_feature_dim(schema), 0.0);
    x[0] = u - 0.5;
    for (TraitIndex t = 0; t < schema.size(); ++t) {
      if (!config.is_valid(t)) continue;
      const double q = u + task.noise_for(schema.name(t)) * normal(rng);
      const ScoreRange r = config.range(t);
      const double step = config.score_step();
      const double raw = r.lower + q * r.width();
      const double snapped = r.lower + std::round((raw - r.lower) / step) * step;
      rec.gold[t] = std::clamp(snapped, static_cast<double>(r.lower),
                               static_cast<double>(r.upper));
      x[1 + t] = q + task.observation_noise * normal(rng) - 0.5;
    }
    std::ostringstream text;
    text << "Synthetic essay " << e << " for prompt " << config.prompt_id() << ".";
    rec.essay_text = text.str();
    out.records.push_back(std::move(rec));
    out.features.push_back(std::move(x));
  }
  return out;
}

inline constexpr std::size_t kTextFeatureDim = 3;

// Weak surface features of raw essay text: word count / 500, type-token
// ratio, and mean sentence length / 25.
inline std::vector<double> text_features(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  std::size_t sentences = 0;
  bool in_sentence = false;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
      in_sentence = true;
    } else {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
      if ((c == '.' || c == '!' || c == '?') && in_sentence) {
        ++sentences;
        in_sentence = false;
      }
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  if (in_sentence) ++sentences;
  const std::set<std::string> types(words.begin(), words.end());
  const double n = static_cast<double>(words.size());
  const double ttr = words.empty() ? 0.0 : static_cast<double>(types.size()) / n;
  const double mean_len = sentences == 0 ? 0.0 : n / static_cast<double>(sentences);
  return {n / 500.0, ttr, mean_len / 25.0};
}

// Feature CSV: essay_id,f0,...,f{D-1}.
inline void write_features(std::ostream& out, std::span<const EssayRecord> records,
                           std::span<const std::vector<double>> features) {
  require(records.size() == features.size(), "write_features: size mismatch");
  const std::size_t dim = features.empty() ? 0 : features[0].size();
  csv::Row header = {"essay_id"};
  for (std::size_t f = 0; f < dim; ++f) header.push_back("f" + std::to_string(f));
  csv::write_row(out, header);
  char buf[40];
  for (std::size_t i = 0; i < records.size(); ++i) {
    csv::Row row = {records[i].essay_id};
    for (const double v : features[i]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      row.emplace_back(buf);
    }
    csv::write_row(out, row);
  }
}

inline std::map<std::string, std::vector<double>> read_features(std::istream& in) {
  const auto rows = csv::read(in);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "essay_id") {
    throw IngestError("features: header must start with essay_id");
  }
  std::map<std::string, std::vector<double>> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() == 1 && rows[r][0].empty()) continue;
    if (rows[r].size() != rows[0].size()) {
      throw IngestError("features row " + std::to_string(r) + ": wrong field count");
    }
    std::vector<double> x;
    for (std::size_t f = 1; f < rows[r].size(); ++f) {
      char* end = nullptr;
      const double v = std::strtod(rows[r][f].c_str(), &end);
      if (end == rows[r][f].c_str() || *end != '\0') {
        throw IngestError("features row " + std::to_string(r) + ": bad value");
      }
      x.push_back(v);
    }
    out[rows[r][0]] = std::move(x);
  }
  return out;
}

}  // namespace tapo

#endif  // TAPO_SYNTHETIC_HPP_
