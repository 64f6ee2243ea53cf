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

#ifndef TAPO_CREDIT_HPP_
#define TAPO_CREDIT_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tapo/csv.hpp"
#include "tapo/parser.hpp"
#include "tapo/reward.hpp"

namespace tapo {

inline constexpr double kDefaultEpsilon = 1e-8;

// (v - mean) / (population std + epsilon). A group whose members are all
// equal maps to exact zeros.
inline std::vector<double> group_normalize(std::span<const double> values,
                                           double epsilon = kDefaultEpsilon) {
  require(!values.empty(), "group_normalize: empty group");
  std::vector<double> out(values.size(), 0.0);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return out;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (const double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / (sd + epsilon);
  return out;
}

struct GroupSample {
  ParsedOutput parsed;  // carries the emitted token sequence
  RewardBreakdown reward;
};

// G sampled outputs for one input with their normalized sample advantages.
struct GroupBatch {
  std::vector<GroupSample> samples;
  std::vector<double> sample_advantages;
  double epsilon = kDefaultEpsilon;

  static GroupBatch build(std::vector<GroupSample> samples, double epsilon = kDefaultEpsilon) {
    require(!samples.empty(), "GroupBatch: group size must be at least 1");
    GroupBatch b;
    b.epsilon = epsilon;
    std::vector<double> rewards;
    rewards.reserve(samples.size());
    for (const auto& s : samples) rewards.push_back(s.reward.sample);
    b.sample_advantages = group_normalize(rewards, epsilon);
    b.samples = std::move(samples);
    return b;
  }

  std::size_t group_size() const { return samples.size(); }
};

// Per-trait local rewards -H(e), raw and normalized across the group.
// Indexed [sample][k] where k runs over `traits` (the prompt's valid traits).
struct LocalRewards {
  std::vector<TraitIndex> traits;
  std::vector<std::vector<double>> raw;
  std::vector<std::vector<double>> normalized;
};

inline LocalRewards local_trait_rewards(std::span<const RewardBreakdown> breakdowns,
                                        const PromptConfig& config, double delta,
                                        double epsilon = kDefaultEpsilon) {
  require(!breakdowns.empty(), "local_trait_rewards: empty group");
  LocalRewards out;
  for (const auto& vt : config.valid_traits()) out.traits.push_back(vt.index);
  const std::size_t g = breakdowns.size();
  const std::size_t k = out.traits.size();
  out.raw.assign(g, std::vector<double>(k, 0.0));
  out.normalized.assign(g, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < g; ++i) {
    const auto& errs = breakdowns[i].per_trait_errors;
    require(errs.size() == k, "local_trait_rewards: breakdown does not match prompt traits");
    for (std::size_t j = 0; j < k; ++j) {
      require(errs[j].trait == out.traits[j], "local_trait_rewards: trait order mismatch");
      out.raw[i][j] = -huber(errs[j].error, delta);
    }
  }
  std::vector<double> column(g);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < g; ++i) column[i] = out.raw[i][j];
    const auto norm = group_normalize(column, epsilon);
    for (std::size_t i = 0; i < g; ++i) out.normalized[i][j] = norm[i];
  }
  return out;
}

// How the combined per-token value is renormalized over the group.
enum class OuterNorm {
  kPerPosition,  // across the G samples at each token index
  kJoint,        // across every (sample, token) pair of the group
};

struct CreditConfig {
  double lambda_loc = 0.3;
  double clip_max = 10.0;
  OuterNorm outer_norm = OuterNorm::kPerPosition;
};

struct TokenAdvantages {
  std::vector<std::vector<double>> values;     // [sample][token]
  std::vector<std::vector<double>> local;      // injected local reward, [sample][token]
  std::vector<std::vector<int>> trait_at;      // trait whose span ends here, or -1
  double lambda_loc = 0.0;
  double clip_max = std::numeric_limits<double>::infinity();
};

namespace detail {

inline TokenAdvantages place_local_rewards(const GroupBatch& batch, const LocalRewards* local) {
  TokenAdvantages adv;
  const std::size_t g = batch.group_size();
  adv.values.resize(g);
  adv.local.resize(g);
  adv.trait_at.resize(g);
  for (std::size_t i = 0; i < g; ++i) {
    const auto& parsed = batch.samples[i].parsed;
    const std::size_t len = parsed.tokens.size();
    adv.local[i].assign(len, 0.0);
    adv.trait_at[i].assign(len, -1);
    for (std::size_t t = 0; t < parsed.token_spans.size(); ++t) {
      const auto& span = parsed.token_spans[t];
      if (!span) continue;
      require(span->begin < span->end && span->end <= len,
              "token_advantages: score span beyond token sequence");
      adv.trait_at[i][span->last()] = static_cast<int>(t);
    }
    if (local == nullptr) continue;
    for (std::size_t j = 0; j < local->traits.size(); ++j) {
      const auto& span = parsed.token_spans.at(local->traits[j]);
      if (span) adv.local[i][span->last()] = local->normalized[i][j];
    }
  }
  return adv;
}

inline double clip(double v, double bound) { return std::clamp(v, -bound, bound); }

}  // namespace detail

// Every token of sample i carries A_i.
inline TokenAdvantages shared_advantages(const GroupBatch& batch) {
  auto adv = detail::place_local_rewards(batch, nullptr);
  for (std::size_t i = 0; i < batch.group_size(); ++i) {
    adv.values[i].assign(batch.samples[i].parsed.tokens.size(), batch.sample_advantages[i]);
  }
  return adv;
}

// A_i + lambda_loc * r_tok, renormalized over the group, then clipped to
// +-clip_max. r_tok is the trait's normalized local reward on the last token
// of its score span and zero elsewhere.
//
// Per-position mode: a token index where no sample receives a nonzero local
// term already holds the group-normalized A_i, and is passed through as is.
inline TokenAdvantages token_advantages(const GroupBatch& batch, const LocalRewards& local,
                                        const CreditConfig& cfg) {
  require(local.raw.size() == batch.group_size(), "token_advantages: local rewards size");
  require(cfg.clip_max > 0, "token_advantages: clip_max must be positive");
  auto adv = detail::place_local_rewards(batch, &local);
  adv.lambda_loc = cfg.lambda_loc;
  adv.clip_max = cfg.clip_max;
  const std::size_t g = batch.group_size();
  std::size_t max_len = 0;
  for (std::size_t i = 0; i < g; ++i) {
    const std::size_t len = adv.local[i].size();
    max_len = std::max(max_len, len);
    adv.values[i].resize(len);
    for (std::size_t t = 0; t < len; ++t) {
      adv.values[i][t] = batch.sample_advantages[i] + cfg.lambda_loc * adv.local[i][t];
    }
  }

  if (cfg.outer_norm == OuterNorm::kJoint) {
    std::vector<double> all;
    for (const auto& row : adv.values) all.insert(all.end(), row.begin(), row.end());
    if (!all.empty()) {
      const auto norm = group_normalize(all, batch.epsilon);
      std::size_t k = 0;
      for (auto& row : adv.values) {
        for (auto& v : row) v = norm[k++];
      }
    }
  } else {
    std::vector<double> column;
    std::vector<std::size_t> members;
    for (std::size_t t = 0; t < max_len; ++t) {
      column.clear();
      members.clear();
      bool injected = false;
      for (std::size_t i = 0; i < g; ++i) {
        if (t >= adv.values[i].size()) continue;
        members.push_back(i);
        column.push_back(adv.values[i][t]);
        injected = injected || cfg.lambda_loc * adv.local[i][t] != 0.0;
      }
      if (!injected) continue;
      const auto norm = group_normalize(column, batch.epsilon);
      for (std::size_t m = 0; m < members.size(); ++m) adv.values[members[m]][t] = norm[m];
    }
  }

  for (auto& row : adv.values) {
    for (auto& v : row) v = detail::clip(v, cfg.clip_max);
  }
  return adv;
}

inline void write_credit_dump_header(std::ostream& out) {
  out << "sample_index,token_index,token_text,trait,local_reward,sample_advantage,"
         "token_advantage\n";
}

inline void write_credit_dump_rows(std::ostream& out, const GroupBatch& batch,
                                   const TokenAdvantages& adv, const TraitSchema& schema) {
  for (std::size_t i = 0; i < batch.group_size(); ++i) {
    const auto& tokens = batch.samples[i].parsed.tokens;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      const int trait = adv.trait_at[i][t];
      csv::write_row(out, {std::to_string(i), std::to_string(t), tokens[t],
                           trait >= 0 ? schema.name(static_cast<TraitIndex>(trait)) : "",
                           format_score(adv.local[i][t]),
                           format_score(batch.sample_advantages[i]),
                           format_score(adv.values[i][t])});
    }
  }
}

}  // namespace tapo

#endif  // TAPO_CREDIT_HPP_
