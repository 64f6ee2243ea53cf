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

#ifndef TAPO_TRAINER_HPP_
#define TAPO_TRAINER_HPP_

// Group-relative post-training of the toy policy.
//
// Per input: sample G outputs, parse and score them, build token advantages
// (TAPO or the shared GRPO baseline), then ascend
//
//   J = mean_inputs mean_i 1/|o_i| sum_t [ min(rho_t A_t, clip(rho_t) A_t)
//                                          - beta_KL KL_t ]
//
// with rho_t = pi(o_t)/pi_old(o_t) on score tokens (1 on structural tokens)
// and KL_t the exact categorical KL(current || reference) at score tokens.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "tapo/credit.hpp"
#include "tapo/eval.hpp"
#include "tapo/parser.hpp"
#include "tapo/policy.hpp"
#include "tapo/reward.hpp"

namespace tapo {

enum class AdvantageMode { kTapo, kGrpoShared };

inline std::string to_string(AdvantageMode m) {
  return m == AdvantageMode::kTapo ? "tapo" : "grpo-shared";
}

inline AdvantageMode parse_mode(std::string_view s) {
  if (s == "tapo") return AdvantageMode::kTapo;
  if (s == "grpo-shared") return AdvantageMode::kGrpoShared;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected tapo or grpo-shared)");
}

struct OptimizerConfig {
  AdvantageMode mode = AdvantageMode::kTapo;
  std::size_t group_size = 4;
  std::size_t epochs = 2;
  std::size_t batch_size = 8;
  double learning_rate = 50.0;
  double clip_ratio = 0.2;
  double kl_coeff = 0.1;
  std::uint64_t seed = 0;
  RewardConfig reward;
  CreditConfig credit;  // lambda_loc = 0.3, clip_max = 10, per-position norm
  std::size_t eval_interval = 50;
  std::size_t inner_passes = 1;
  double fault_probability = 0.0;
  double epsilon = kDefaultEpsilon;
  std::size_t threads = 1;

  void validate() const {
    if (group_size < 1) throw ConfigError("group_size must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(clip_ratio > 0 && clip_ratio < 1)) throw ConfigError("clip_ratio must be in (0,1)");
    if (!(kl_coeff >= 0)) throw ConfigError("kl_coeff must be non-negative");
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning_rate must be finite and non-negative");
    }
    if (!(credit.clip_max > 0)) throw ConfigError("clip_max must be positive");
    if (!(credit.lambda_loc >= 0)) throw ConfigError("lambda_loc must be non-negative");
    if (inner_passes < 1) throw ConfigError("inner_passes must be at least 1");
    if (!(fault_probability >= 0 && fault_probability <= 1)) {
      throw ConfigError("fault_probability must be in [0,1]");
    }
    if (threads < 1) throw ConfigError("threads must be at least 1");
    reward.validate();
  }
};

struct TrainingExample {
  std::string essay_id;
  const PromptConfig* config = nullptr;
  std::vector<double> features;
  ScoreVector gold;

  PolicyInput input() const { return {config, features}; }
};

struct Rollout {
  SampledOutput output;
  std::vector<double> old_log_probs;  // per decision, at sampling time
  std::vector<double> advantages;     // per token
  RewardBreakdown reward;
  bool valid = false;
};

struct RolloutGroup {
  const TrainingExample* example = nullptr;
  std::vector<Rollout> members;
};

struct StepReport {
  std::size_t step = 0;
  double mean_sample_reward = 0.0;
  double mean_global = 0.0;
  double mean_relation = 0.0;
  double format_violation_rate = 0.0;
  double mean_abs_error = 0.0;
  double kl = 0.0;  // mean KL per score token
};

struct TrainState {
  ToyPolicy policy;
  ToyPolicy reference;
  std::size_t step = 0;
  StepReport last;

  static TrainState initial(ToyPolicy policy) {
    TrainState s;
    s.reference = policy;
    s.policy = std::move(policy);
    return s;
  }
};

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, TrainState state)
      : std::runtime_error(what), state_(std::move(state)) {}
  const TrainState& state() const { return state_; }

 private:
  TrainState state_;
};

// Samples G outputs for one input, parses and scores them. When `members`
// is given, it receives the sampled outputs with their rewards.
inline GroupBatch sample_group(const ToyPolicy& policy, const TrainingExample& example,
                               const OptimizerConfig& cfg, std::uint64_t seed,
                               std::vector<Rollout>* members = nullptr) {
  const auto& schema = policy.schema();
  const PromptConfig& config = *example.config;
  if (members) members->assign(cfg.group_size, Rollout{});
  std::vector<GroupSample> samples;
  samples.reserve(cfg.group_size);
  for (std::size_t i = 0; i < cfg.group_size; ++i) {
    auto output = sample(policy, example.input(), derive_seed(seed, i),
                         FaultInjection{cfg.fault_probability});
    auto parsed = parse_tokens(output.tokens, schema, config);
    auto reward = sample_reward(parsed, example.gold, config, cfg.reward);
    if (members) {
      auto& m = (*members)[i];
      m.old_log_probs.resize(output.decisions.size());
      for (std::size_t d = 0; d < output.decisions.size(); ++d) {
        m.old_log_probs[d] = output.decisions[d].log_prob;
      }
      m.output = std::move(output);
      m.reward = reward;
      m.valid = parsed.is_valid;
    }
    samples.push_back({std::move(parsed), std::move(reward)});
  }
  return GroupBatch::build(std::move(samples), cfg.epsilon);
}

inline TokenAdvantages group_advantages(const GroupBatch& batch, const PromptConfig& config,
                                        const OptimizerConfig& cfg) {
  if (cfg.mode != AdvantageMode::kTapo) return shared_advantages(batch);
  std::vector<RewardBreakdown> breakdowns;
  for (const auto& s : batch.samples) breakdowns.push_back(s.reward);
  const auto local = local_trait_rewards(breakdowns, config, cfg.reward.delta, cfg.epsilon);
  return token_advantages(batch, local, cfg.credit);
}

inline RolloutGroup make_rollout_group(const ToyPolicy& policy, const TrainingExample& example,
                                       const OptimizerConfig& cfg, std::uint64_t seed) {
  RolloutGroup group;
  group.example = &example;
  const auto batch = sample_group(policy, example, cfg, seed, &group.members);
  auto adv = group_advantages(batch, *example.config, cfg);
  for (std::size_t i = 0; i < cfg.group_size; ++i) {
    group.members[i].advantages = std::move(adv.values[i]);
  }
  return group;
}

struct ObjectiveValue {
  double objective = 0.0;
  double surrogate = 0.0;
  double kl = 0.0;             // mean KL per score token
};

// Objective J over fixed rollouts, and optionally its exact gradient.
inline ObjectiveValue evaluate_objective(const ToyPolicy& current, const ToyPolicy& reference,
                                         std::span<const RolloutGroup> groups,
                                         const OptimizerConfig& cfg,
                                         std::vector<double>* grad) {
  if (grad != nullptr) grad->assign(current.num_parameters(), 0.0);
  ObjectiveValue out;
  if (groups.empty()) return out;
  const double lo = 1.0 - cfg.clip_ratio;
  const double hi = 1.0 + cfg.clip_ratio;
  double kl_total = 0.0;
  std::size_t kl_count = 0;
  std::vector<double> z_cur;
  std::vector<double> z_ref;
  std::vector<double> dz;
  for (const auto& group : groups) {
    const auto& ex = *group.example;
    const PolicyInput in = ex.input();
    const auto& heads = current.heads(*ex.config);
    const auto& ref_heads = reference.heads(*ex.config);
    const double group_weight =
        1.0 / (static_cast<double>(groups.size()) * static_cast<double>(group.members.size()));
    for (const auto& m : group.members) {
      const auto& out_seq = m.output;
      const std::size_t len = out_seq.tokens.size();
      require(m.advantages.size() == len, "objective: advantages misaligned with tokens");
      const double w = group_weight / static_cast<double>(std::max<std::size_t>(len, 1));
      const auto prev = decision_contexts(current, in, out_seq);

      // Structural tokens: rho = 1, no gradient.
      std::vector<bool> is_score(len, false);
      for (const auto& d : out_seq.decisions) {
        if (d.token_index != ScoreDecision::kDropped) is_score[d.token_index] = true;
      }
      double sample_obj = 0.0;
      double sample_surr = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        if (!is_score[t]) sample_surr += m.advantages[t];
      }

      for (std::size_t k = 0; k < out_seq.decisions.size(); ++k) {
        const auto& d = out_seq.decisions[k];
        const auto& head = heads[k];
        z_cur.resize(head.num_scores);
        z_ref.resize(head.num_scores);
        current.logits(head, in.features, prev[k], z_cur);
        reference.logits(ref_heads[k], in.features, prev[k], z_ref);
        dz.assign(head.num_scores, 0.0);

        if (d.token_index != ScoreDecision::kDropped) {
          const double a = m.advantages[d.token_index];
          const double lp = log_softmax_at(z_cur, d.choice);
          const double rho = std::exp(lp - m.old_log_probs[k]);
          const double clipped = std::clamp(rho, lo, hi);
          sample_surr += std::min(rho * a, clipped * a);
          const bool active = a >= 0 ? rho < hi : rho > lo;
          if (active && grad != nullptr) {
            // d(rho a)/dz = rho a (onehot - p)
            std::vector<double> p = z_cur;
            softmax_inplace(p);
            for (std::size_t j = 0; j < p.size(); ++j) dz[j] -= rho * a * p[j];
            dz[d.choice] += rho * a;
          }
        }

        const double kl = categorical_kl(z_cur, z_ref);
        kl_total += kl;
        ++kl_count;
        sample_obj -= cfg.kl_coeff * kl;
        if (cfg.kl_coeff != 0.0 && grad != nullptr) {
          std::vector<double> p = z_cur;
          softmax_inplace(p);
          for (std::size_t j = 0; j < p.size(); ++j) {
            const double diff = log_softmax_at(z_cur, j) - log_softmax_at(z_ref, j);
            dz[j] -= cfg.kl_coeff * p[j] * (diff - kl);
          }
        }
        if (grad != nullptr) current.add_logit_gradient(head, in.features, prev[k], dz, w, *grad);
      }
      sample_obj += sample_surr;
      out.objective += w * sample_obj;
      out.surrogate += w * sample_surr;
    }
  }
  out.kl = kl_count == 0 ? 0.0 : kl_total / static_cast<double>(kl_count);
  return out;
}

struct StepResult {
  StepReport report;
  std::vector<RolloutGroup> groups;
};

namespace detail {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t workers = std::min(threads, n);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace detail

// One update on a batch of inputs. Rollout seeds depend only on
// (cfg.seed, state.step, position in batch, group member).
inline StepResult train_step(TrainState& state, std::span<const TrainingExample* const> batch,
                             const OptimizerConfig& cfg) {
  StepResult result;
  result.groups.resize(batch.size());
  detail::parallel_for(batch.size(), cfg.threads, [&](std::size_t b) {
    result.groups[b] = make_rollout_group(state.policy, *batch[b], cfg,
                                          derive_seed(cfg.seed, 0x5eed, state.step, b));
  });

  std::vector<double> grad;
  ObjectiveValue obj;
  for (std::size_t pass = 0; pass < cfg.inner_passes; ++pass) {
    obj = evaluate_objective(state.policy, state.reference, result.groups, cfg, &grad);
    if (!std::isfinite(obj.objective) || !detail::all_finite(grad)) {
      throw TrainingAborted("non-finite objective or gradient at step " +
                                std::to_string(state.step),
                            state);
    }
    auto params = state.policy.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] += cfg.learning_rate * grad[i];
  }

  auto& r = result.report;
  r.step = state.step;
  std::size_t samples = 0;
  std::size_t invalid = 0;
  double err_sum = 0.0;
  std::size_t err_count = 0;
  for (const auto& g : result.groups) {
    for (const auto& m : g.members) {
      ++samples;
      r.mean_sample_reward += m.reward.sample;
      r.mean_global += m.reward.global;
      r.mean_relation += m.reward.relation;
      if (!m.valid) ++invalid;
      for (const auto& te : m.reward.per_trait_errors) {
        err_sum += te.error;
        ++err_count;
      }
    }
  }
  if (samples > 0) {
    const double n = static_cast<double>(samples);
    r.mean_sample_reward /= n;
    r.mean_global /= n;
    r.mean_relation /= n;
    r.format_violation_rate = static_cast<double>(invalid) / n;
  }
  r.mean_abs_error = err_count == 0 ? 0.0 : err_sum / static_cast<double>(err_count);
  r.kl = obj.kl;
  state.last = r;
  ++state.step;
  return result;
}

struct EvalMetrics {
  double mean_abs_error = 0.0;  // mean |normalized error| over essays and valid traits
  AggregateTables tables;
};

inline std::vector<ScoredRecord> predict(const ToyPolicy& policy,
                                         std::span<const TrainingExample> examples) {
  std::vector<ScoredRecord> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    out.push_back({ex.config->prompt_id(), 0, ex.gold, greedy(policy, ex.input())});
  }
  return out;
}

inline EvalMetrics evaluate_policy(const ToyPolicy& policy,
                                   std::span<const TrainingExample> examples,
                                   const DatasetConfig& dataset) {
  EvalMetrics m;
  if (examples.empty()) return m;
  const auto records = predict(policy, examples);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& config = *examples[i].config;
    for (const auto& vt : config.valid_traits()) {
      sum += std::abs(config.normalize(vt.index, records[i].pred[vt.index]) -
                      config.normalize(vt.index, records[i].gold[vt.index]));
      ++count;
    }
  }
  m.mean_abs_error = sum / static_cast<double>(count);
  m.tables = aggregate(records, dataset);
  return m;
}

struct EvalPoint {
  std::size_t step = 0;
  double mean_abs_error = 0.0;
  double trait_avg_qwk = 0.0;
  double prompt_avg_qwk = 0.0;
};

struct TrainResult {
  TrainState state;
  std::vector<StepReport> steps;
  std::vector<EvalPoint> evals;
};

// Epochs of seeded shuffles over `train_set`, evaluating greedy predictions
// on `heldout` at step 0, every eval_interval steps, and at the end.
// `on_step`, if set, sees every step's rollouts.
inline TrainResult train(TrainState state, std::span<const TrainingExample> train_set,
                         std::span<const TrainingExample> heldout, const DatasetConfig& dataset,
                         const OptimizerConfig& cfg,
                         const std::function<void(const StepResult&)>& on_step = {}) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("train: empty training set");
  TrainResult result;
  auto record_eval = [&](const TrainState& s) {
    if (heldout.empty()) return;
    const auto m = evaluate_policy(s.policy, heldout, dataset);
    result.evals.push_back({s.step, m.mean_abs_error, m.tables.trait_average,
                            m.tables.prompt_average});
  };
  record_eval(state);

  std::vector<std::size_t> order(train_set.size());
  std::vector<const TrainingExample*> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xE90C, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    }
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&train_set[order[i]]);
      auto step = train_step(state, batch, cfg);
      result.steps.push_back(step.report);
      if (on_step) on_step(step);
      if (cfg.eval_interval > 0 && state.step % cfg.eval_interval == 0) record_eval(state);
    }
  }
  if (result.evals.empty() || result.evals.back().step != state.step) record_eval(state);
  result.state = std::move(state);
  return result;
}

inline void write_step_reports(std::ostream& out, std::span<const StepReport> steps) {
  out << "step,mean_sample_reward,mean_global,mean_relation,format_violation_rate,"
         "mean_abs_error,kl\n";
  char buf[256];
  for (const auto& s : steps) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.step,
                  s.mean_sample_reward, s.mean_global, s.mean_relation,
                  s.format_violation_rate, s.mean_abs_error, s.kl);
    out << buf;
  }
}

// Per-sample reward breakdowns of one step.
inline void write_reward_header(std::ostream& out) {
  out << "step,essay_id,sample_index,global,relation,format,sample\n";
}

inline void write_reward_rows(std::ostream& out, const StepResult& step) {
  char buf[160];
  for (const auto& g : step.groups) {
    for (std::size_t i = 0; i < g.members.size(); ++i) {
      const auto& r = g.members[i].reward;
      std::snprintf(buf, sizeof buf, ",%zu,%.17g,%.17g,%.17g,%.17g\n", i, r.global, r.relation,
                    r.format, r.sample);
      out << step.report.step << ',' << g.example->essay_id << buf;
    }
  }
}

inline void write_eval_points(std::ostream& out, std::span<const EvalPoint> evals) {
  out << "step,mean_abs_error,trait_avg_qwk,prompt_avg_qwk\n";
  char buf[160];
  for (const auto& e : evals) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e.step, e.mean_abs_error,
                  e.trait_avg_qwk, e.prompt_avg_qwk);
    out << buf;
  }
}

}  // namespace tapo

#endif  // TAPO_TRAINER_HPP_
