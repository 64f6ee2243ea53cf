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

#ifndef TAPO_REWARD_HPP_
#define TAPO_REWARD_HPP_

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tapo/parser.hpp"
#include "tapo/schema.hpp"

namespace tapo {

struct RewardConfig {
  double alpha = 0.3;       // Huber weight
  double beta = 0.7;        // absolute-error weight
  double delta = 0.1;       // Huber threshold on normalized error
  double lambda_rel = 0.2;  // relation reward weight
  double lambda_fmt = 0.1;  // format reward weight

  void validate() const {
    if (alpha < 0 || beta < 0 || lambda_rel < 0 || lambda_fmt < 0) {
      throw ConfigError("reward weights must be non-negative");
    }
    if (!(delta > 0)) throw ConfigError("reward delta must be positive");
  }
};

// Normalized absolute error of one valid trait. `usable` is false when the
// prediction was missing, NaN or off-grid, in which case error is 1.
struct TraitError {
  TraitIndex trait = 0;
  double error = 0.0;
  bool usable = true;
};

struct RewardBreakdown {
  double global = 0.0;
  double relation = 0.0;
  double format = 0.0;
  double sample = 0.0;
  std::vector<TraitError> per_trait_errors;  // valid traits, schema order
};

struct TraitPair {
  TraitIndex first = 0;
  TraitIndex second = 0;
  int direction = 0;           // sign(gold_first - gold_second), never 0
  double predicted_gap = 0.0;  // pred_first - pred_second, normalized
};

inline double huber(double error, double delta) {
  const double a = std::abs(error);
  if (a <= delta) return 0.5 * a * a;
  return delta * a - 0.5 * delta * delta;
}

namespace detail {

inline std::optional<double> usable_prediction(const TraitValue& v, TraitIndex t,
                                               const PromptConfig& config) {
  if (v.kind != ValueKind::kNumber || !config.accepts(t, v.number)) return std::nullopt;
  return config.normalize(t, v.number);
}

}  // namespace detail

struct GlobalReward {
  double value = 0.0;
  std::vector<TraitError> errors;
};

inline GlobalReward global_reward(std::span<const TraitValue> pred, const ScoreVector& gold,
                                  const PromptConfig& config, const RewardConfig& rc) {
  if (config.num_valid() == 0) throw ConfigError("global reward needs at least one valid trait");
  require(pred.size() == config.schema_size() && gold.size() == config.schema_size(),
          "global_reward: vector size differs from schema");
  GlobalReward out;
  out.errors.reserve(config.num_valid());
  double penalty = 0.0;
  for (const auto& vt : config.valid_traits()) {
    TraitError te{vt.index, 1.0, false};
    if (const auto p = detail::usable_prediction(pred[vt.index], vt.index, config)) {
      te.error = std::abs(*p - config.normalize(vt.index, gold[vt.index]));
      te.usable = true;
    }
    penalty += rc.alpha * huber(te.error, rc.delta) + rc.beta * te.error;
    out.errors.push_back(te);
  }
  out.value = -penalty / static_cast<double>(config.num_valid());
  return out;
}

inline GlobalReward global_reward(const ScoreVector& pred, const ScoreVector& gold,
                                  const PromptConfig& config, const RewardConfig& rc) {
  const auto values = to_trait_values(pred);
  return global_reward(values, gold, config, rc);
}

// The pair set: valid, usable a < b with distinct normalized gold scores.
inline std::vector<TraitPair> relation_pairs(std::span<const TraitValue> pred,
                                             const ScoreVector& gold,
                                             const PromptConfig& config) {
  std::vector<TraitPair> pairs;
  const auto& valid = config.valid_traits();
  std::vector<std::optional<double>> p(valid.size());
  std::vector<double> g(valid.size());
  for (std::size_t k = 0; k < valid.size(); ++k) {
    p[k] = detail::usable_prediction(pred[valid[k].index], valid[k].index, config);
    g[k] = config.normalize(valid[k].index, gold[valid[k].index]);
  }
  for (std::size_t a = 0; a < valid.size(); ++a) {
    for (std::size_t b = a + 1; b < valid.size(); ++b) {
      if (g[a] == g[b] || !p[a] || !p[b]) continue;
      pairs.push_back({valid[a].index, valid[b].index, g[a] > g[b] ? 1 : -1, *p[a] - *p[b]});
    }
  }
  return pairs;
}

inline double relation_reward(std::span<const TraitValue> pred, const ScoreVector& gold,
                              const PromptConfig& config) {
  const auto pairs = relation_pairs(pred, gold, config);
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& pr : pairs) sum += std::max(0.0, -pr.direction * pr.predicted_gap);
  return -sum / static_cast<double>(pairs.size());
}

inline double relation_reward(const ScoreVector& pred, const ScoreVector& gold,
                              const PromptConfig& config) {
  const auto values = to_trait_values(pred);
  return relation_reward(values, gold, config);
}

inline double format_reward(const ParsedOutput& parsed) { return parsed.is_valid ? 0.0 : -1.0; }

inline RewardBreakdown sample_reward(const ParsedOutput& parsed, const ScoreVector& gold,
                                     const PromptConfig& config, const RewardConfig& rc) {
  auto g = global_reward(parsed.values, gold, config, rc);
  RewardBreakdown out;
  out.global = g.value;
  out.relation = relation_reward(parsed.values, gold, config);
  out.format = format_reward(parsed);
  out.sample = out.global + rc.lambda_rel * out.relation + rc.lambda_fmt * out.format;
  out.per_trait_errors = std::move(g.errors);
  return out;
}

}  // namespace tapo

#endif  // TAPO_REWARD_HPP_
