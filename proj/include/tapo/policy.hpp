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

#ifndef TAPO_POLICY_HPP_
#define TAPO_POLICY_HPP_

// Toy autoregressive scoring policy. For every (prompt, valid trait) there is
// one categorical head over the trait's discrete scores with logits
//
//   z = bias + prev * cond + W x
//
// where x is the essay feature vector and prev is the normalized score the
// policy emitted for the previous valid trait (0 for the first one).
// Structural tokens (trait names, ":", ",", NaN) are emitted with
// probability 1.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tapo/parser.hpp"
#include "tapo/schema.hpp"

namespace tapo {

// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
  return mix_seed(mix_seed(mix_seed(mix_seed(root) ^ a) ^ b) ^ c);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline void softmax_inplace(std::span<double> z) {
  double m = -std::numeric_limits<double>::infinity();
  for (const double v : z) m = std::max(m, v);
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

inline double log_softmax_at(std::span<const double> z, std::size_t k) {
  double m = -std::numeric_limits<double>::infinity();
  for (const double v : z) m = std::max(m, v);
  double sum = 0.0;
  for (const double v : z) sum += std::exp(v - m);
  return z[k] - m - std::log(sum);
}

// KL(p || q) between the categoricals softmax(p_logits), softmax(q_logits).
inline double categorical_kl(std::span<const double> p_logits, std::span<const double> q_logits) {
  std::vector<double> p(p_logits.begin(), p_logits.end());
  softmax_inplace(p);
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] == 0.0) continue;
    kl += p[k] * (log_softmax_at(p_logits, k) - log_softmax_at(q_logits, k));
  }
  return std::max(kl, 0.0);
}

struct ParameterBlock {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return rows * cols; }
};

struct PolicyInput {
  const PromptConfig* config = nullptr;
  std::span<const double> features;
};

struct ScoreDecision {
  static constexpr std::size_t kDropped = std::numeric_limits<std::size_t>::max();

  TraitIndex trait = 0;
  std::size_t choice = 0;  // grid index of the emitted score
  double log_prob = 0.0;
  std::size_t token_index = kDropped;  // position of the value token, if still present
};

struct SampledOutput {
  std::vector<std::string> tokens;
  std::vector<ScoreDecision> decisions;  // one per valid trait, schema order
  double total_log_prob = 0.0;
};

// Probability that a sampled output has its structure corrupted after
// generation (one of: dropped pair, swapped pairs, duplicated pair,
// out-of-range value, wrong NaN marker, unparseable value).
struct FaultInjection {
  double probability = 0.0;
};

class ToyPolicy {
 public:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  struct Head {
    TraitIndex trait = 0;
    std::size_t num_scores = 0;
    std::size_t bias = 0;
    std::size_t cond = kNone;
    std::size_t feat = 0;
  };

  ToyPolicy() = default;
  ToyPolicy(const DatasetConfig& dataset, std::size_t feature_dim, bool conditioning = true)
      : schema_(dataset.schema), feature_dim_(feature_dim), conditioning_(conditioning) {
    for (const auto& prompt : dataset.prompts) {
      auto& heads = heads_[prompt.prompt_id()];
      for (const auto& vt : prompt.valid_traits()) {
        const std::string suffix = "/" + prompt.prompt_id() + "/" + schema_.name(vt.index);
        Head h;
        h.trait = vt.index;
        h.num_scores = prompt.num_scores(vt.index);
        h.bias = add_block("bias" + suffix, 1, h.num_scores);
        if (conditioning_) h.cond = add_block("cond" + suffix, 1, h.num_scores);
        h.feat = add_block("feat" + suffix, h.num_scores, feature_dim_);
        heads.push_back(h);
      }
    }
    params_.assign(total_, 0.0);
  }

  const TraitSchema& schema() const { return schema_; }
  std::size_t feature_dim() const { return feature_dim_; }
  bool conditioning() const { return conditioning_; }
  std::size_t num_parameters() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  const std::vector<ParameterBlock>& blocks() const { return blocks_; }

  const ParameterBlock* find_block(std::string_view name) const {
    for (const auto& b : blocks_) {
      if (b.name == name) return &b;
    }
    return nullptr;
  }

  const std::vector<Head>& heads(const PromptConfig& config) const {
    const auto it = heads_.find(config.prompt_id());
    require(it != heads_.end(), "policy has no heads for prompt " + config.prompt_id());
    require(it->second.size() == config.num_valid(),
            "policy heads do not match prompt " + config.prompt_id());
    return it->second;
  }

  void logits(const Head& h, std::span<const double> x, double prev, std::span<double> out) const {
    for (std::size_t k = 0; k < h.num_scores; ++k) {
      double z = params_[h.bias + k];
      if (h.cond != kNone) z += prev * params_[h.cond + k];
      const double* w = &params_[h.feat + k * feature_dim_];
      for (std::size_t f = 0; f < feature_dim_; ++f) z += w[f] * x[f];
      out[k] = z;
    }
  }

  // grad += scale * d(logits)/d(theta)^T dlogits.
  void add_logit_gradient(const Head& h, std::span<const double> x, double prev,
                          std::span<const double> dlogits, double scale,
                          std::span<double> grad) const {
    for (std::size_t k = 0; k < h.num_scores; ++k) {
      const double d = scale * dlogits[k];
      if (d == 0.0) continue;
      grad[h.bias + k] += d;
      if (h.cond != kNone) grad[h.cond + k] += d * prev;
      double* g = &grad[h.feat + k * feature_dim_];
      for (std::size_t f = 0; f < feature_dim_; ++f) g[f] += d * x[f];
    }
  }

  void check_input(const PolicyInput& in) const {
    require(in.config != nullptr, "policy input has no prompt config");
    require(in.features.size() == feature_dim_, "feature dimension mismatch: got " +
                                                    std::to_string(in.features.size()) +
                                                    ", policy expects " +
                                                    std::to_string(feature_dim_));
  }

 private:
  std::size_t add_block(std::string name, std::size_t rows, std::size_t cols) {
    blocks_.push_back({std::move(name), rows, cols, total_});
    total_ += rows * cols;
    return blocks_.back().offset;
  }

  TraitSchema schema_;
  std::size_t feature_dim_ = 0;
  bool conditioning_ = true;
  std::map<std::string, std::vector<Head>, std::less<>> heads_;
  std::vector<ParameterBlock> blocks_;
  std::vector<double> params_;
  std::size_t total_ = 0;
};

// Normalized score of grid index `choice` on a K-point grid.
inline double grid_fraction(std::size_t choice, std::size_t num_scores) {
  return static_cast<double>(choice) / static_cast<double>(num_scores - 1);
}

namespace detail {

struct PairTokens {
  std::string trait;
  std::string value;
  std::size_t decision = ScoreDecision::kDropped;
};

inline void corrupt(std::vector<PairTokens>& pairs, const PolicyInput& in,
                    const TraitSchema& schema, std::mt19937_64& rng) {
  const std::size_t n = pairs.size();
  const auto pick = [&](std::size_t bound) {
    return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(bound));
  };
  const std::size_t kind = pick(6);
  const std::size_t at = pick(n);
  switch (kind) {
    case 0:  // dropped pair
      pairs.erase(pairs.begin() + static_cast<std::ptrdiff_t>(at));
      break;
    case 1:  // adjacent swap
      if (n >= 2) std::swap(pairs[at == n - 1 ? at - 1 : at], pairs[at == n - 1 ? at : at + 1]);
      break;
    case 2: {  // duplicate, the copy carries no decision
      PairTokens copy = pairs[at];
      copy.decision = ScoreDecision::kDropped;
      pairs.insert(pairs.begin() + static_cast<std::ptrdiff_t>(at) + 1, copy);
      break;
    }
    case 3: {  // out of range (or a number where NaN belongs)
      const auto t = *schema.index_of(pairs[at].trait);
      const double v = in.config->is_valid(t) ? in.config->range(t).upper + 1.0 : 0.0;
      pairs[at].value = format_score(v);
      pairs[at].decision = ScoreDecision::kDropped;
      break;
    }
    case 4: {  // NaN on a valid trait, or a number on an invalid one
      const auto t = *schema.index_of(pairs[at].trait);
      pairs[at].value = in.config->is_valid(t) ? std::string(kNaNToken) : "1";
      pairs[at].decision = ScoreDecision::kDropped;
      break;
    }
    default:  // unparseable value
      pairs[at].value = "x";
      pairs[at].decision = ScoreDecision::kDropped;
      break;
  }
}

}  // namespace detail

inline SampledOutput sample(const ToyPolicy& policy, const PolicyInput& in, std::uint64_t seed,
                            FaultInjection faults = {}) {
  policy.check_input(in);
  const auto& schema = policy.schema();
  const auto& heads = policy.heads(*in.config);
  std::mt19937_64 rng(seed);
  SampledOutput out;
  std::vector<detail::PairTokens> pairs;
  pairs.reserve(schema.size());
  std::vector<double> z;
  double prev = 0.0;
  std::size_t h = 0;
  for (TraitIndex t = 0; t < schema.size(); ++t) {
    if (!in.config->is_valid(t)) {
      pairs.push_back({schema.name(t), std::string(kNaNToken)});
      continue;
    }
    const auto& head = heads[h++];
    z.resize(head.num_scores);
    policy.logits(head, in.features, prev, z);
    std::vector<double> p = z;
    softmax_inplace(p);
    const double u = uniform01(rng);
    std::size_t k = 0;
    double cum = p[0];
    while (k + 1 < p.size() && u >= cum) cum += p[++k];
    ScoreDecision d{t, k, log_softmax_at(z, k)};
    out.total_log_prob += d.log_prob;
    pairs.push_back({schema.name(t), format_score(in.config->score_at(t, k)),
                     out.decisions.size()});
    out.decisions.push_back(d);
    prev = grid_fraction(k, head.num_scores);
  }
  if (faults.probability > 0.0 && uniform01(rng) < faults.probability) {
    detail::corrupt(pairs, in, schema, rng);
  }
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (p > 0) out.tokens.emplace_back(",");
    out.tokens.push_back(pairs[p].trait);
    out.tokens.emplace_back(":");
    if (pairs[p].decision != ScoreDecision::kDropped) {
      out.decisions[pairs[p].decision].token_index = out.tokens.size();
    }
    out.tokens.push_back(pairs[p].value);
  }
  return out;
}

// Most likely score per trait, feeding each choice to the next head.
inline ScoreVector greedy(const ToyPolicy& policy, const PolicyInput& in) {
  policy.check_input(in);
  const auto& heads = policy.heads(*in.config);
  ScoreVector out = ScoreVector::all_nan(policy.schema().size());
  std::vector<double> z;
  double prev = 0.0;
  for (const auto& head : heads) {
    z.resize(head.num_scores);
    policy.logits(head, in.features, prev, z);
    const auto k = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    out[head.trait] = in.config->score_at(head.trait, k);
    prev = grid_fraction(k, head.num_scores);
  }
  return out;
}

// Conditioning value seen by each decision of `out`.
inline std::vector<double> decision_contexts(const ToyPolicy& policy, const PolicyInput& in,
                                             const SampledOutput& out) {
  policy.check_input(in);
  const auto& heads = policy.heads(*in.config);
  require(out.decisions.size() == heads.size(),
          "sampled output does not carry one decision per valid trait");
  std::vector<double> prev(heads.size(), 0.0);
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const auto& d = out.decisions[k];
    require(d.trait == heads[k].trait && d.choice < heads[k].num_scores,
            "sampled output decision does not match the prompt grammar");
    if (d.token_index != ScoreDecision::kDropped) {
      require(d.token_index < out.tokens.size() &&
                  out.tokens[d.token_index] ==
                      format_score(in.config->score_at(d.trait, d.choice)),
              "sampled output token does not match its decision");
    }
    if (k + 1 < heads.size()) prev[k + 1] = grid_fraction(d.choice, heads[k].num_scores);
  }
  return prev;
}

inline std::vector<double> decision_log_probs(const ToyPolicy& policy, const PolicyInput& in,
                                              const SampledOutput& out) {
  const auto prev = decision_contexts(policy, in, out);
  const auto& heads = policy.heads(*in.config);
  std::vector<double> lp(heads.size());
  std::vector<double> z;
  for (std::size_t k = 0; k < heads.size(); ++k) {
    z.resize(heads[k].num_scores);
    policy.logits(heads[k], in.features, prev[k], z);
    lp[k] = log_softmax_at(z, out.decisions[k].choice);
  }
  return lp;
}

inline double log_prob(const ToyPolicy& policy, const PolicyInput& in, const SampledOutput& out) {
  double total = 0.0;
  for (const double v : decision_log_probs(policy, in, out)) total += v;
  return total;
}

// d log pi(out) / d theta: (one-hot - softmax) per decision, chained through
// the bias, conditioning and feature weights.
inline std::vector<double> grad_log_prob(const ToyPolicy& policy, const PolicyInput& in,
                                         const SampledOutput& out) {
  const auto prev = decision_contexts(policy, in, out);
  const auto& heads = policy.heads(*in.config);
  std::vector<double> grad(policy.num_parameters(), 0.0);
  std::vector<double> z;
  for (std::size_t k = 0; k < heads.size(); ++k) {
    z.resize(heads[k].num_scores);
    policy.logits(heads[k], in.features, prev[k], z);
    softmax_inplace(z);
    for (auto& v : z) v = -v;
    z[out.decisions[k].choice] += 1.0;
    policy.add_logit_gradient(heads[k], in.features, prev[k], z, 1.0, grad);
  }
  return grad;
}

// Plain-text checkpoint: a header line, then per block "<name> <rows> <cols>"
// followed by its values in 17 significant digits.
inline void write_checkpoint(std::ostream& out, const ToyPolicy& policy) {
  out << "tapo-checkpoint 1\n";
  out << "feature_dim " << policy.feature_dim() << "\n";
  out << "conditioning " << (policy.conditioning() ? 1 : 0) << "\n";
  out << "blocks " << policy.blocks().size() << "\n";
  const auto params = policy.parameters();
  char buf[40];
  for (const auto& b : policy.blocks()) {
    out << b.name << ' ' << b.rows << ' ' << b.cols << '\n';
    for (std::size_t i = 0; i < b.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", params[b.offset + i]);
      out << (i > 0 ? " " : "") << buf;
    }
    out << '\n';
  }
}

// Fills `policy` (already shaped for the dataset) from a checkpoint stream.
inline void read_checkpoint(std::istream& in, ToyPolicy& policy) {
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != "tapo-checkpoint" || version != 1) {
    throw ConfigError("checkpoint: bad header");
  }
  std::size_t feature_dim = 0;
  std::size_t count = 0;
  if (!(in >> word >> feature_dim) || word != "feature_dim") {
    throw ConfigError("checkpoint: missing feature_dim");
  }
  if (feature_dim != policy.feature_dim()) throw ConfigError("checkpoint: feature_dim mismatch");
  int conditioning = 0;
  if (!(in >> word >> conditioning) || word != "conditioning" ||
      (conditioning != 0) == !policy.conditioning()) {
    throw ConfigError("checkpoint: conditioning flag mismatch");
  }
  if (!(in >> word >> count) || word != "blocks" || count != policy.blocks().size()) {
    throw ConfigError("checkpoint: block count does not match the prompt config");
  }
  auto params = policy.parameters();
  for (std::size_t n = 0; n < count; ++n) {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    if (!(in >> name >> rows >> cols)) throw ConfigError("checkpoint: truncated block header");
    const auto* b = policy.find_block(name);
    if (b == nullptr) throw ConfigError("checkpoint: unknown block '" + name + "'");
    if (b->rows != rows || b->cols != cols) {
      throw ConfigError("checkpoint: shape mismatch for block '" + name + "'");
    }
    for (std::size_t i = 0; i < b->size(); ++i) {
      if (!(in >> word)) throw ConfigError("checkpoint: truncated values in '" + name + "'");
      char* end = nullptr;
      const double v = std::strtod(word.c_str(), &end);
      if (end == word.c_str() || *end != '\0' || !std::isfinite(v)) {
        throw ConfigError("checkpoint: bad value in '" + name + "'");
      }
      params[b->offset + i] = v;
    }
  }
}

// Builds a policy shaped for `dataset` from the checkpoint header, then
// fills it.
inline ToyPolicy load_checkpoint(std::istream& in, const DatasetConfig& dataset) {
  const auto start = in.tellg();
  std::string word;
  int version = 0;
  std::size_t feature_dim = 0;
  int conditioning = 0;
  std::string w1;
  std::string w2;
  if (!(in >> word >> version >> w1 >> feature_dim >> w2 >> conditioning) ||
      word != "tapo-checkpoint" || w1 != "feature_dim" || w2 != "conditioning") {
    throw ConfigError("checkpoint: bad header");
  }
  in.seekg(start);
  ToyPolicy policy(dataset, feature_dim, conditioning != 0);
  read_checkpoint(in, policy);
  return policy;
}

}  // namespace tapo

#endif  // TAPO_POLICY_HPP_
