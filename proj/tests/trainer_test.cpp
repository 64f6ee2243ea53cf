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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "tapo/synthetic.hpp"
#include "tapo/trainer.hpp"

namespace tapo {
namespace {

using testing::asap;
using testing::small;

struct Data {
  SyntheticCorpus corpus;
  std::vector<TrainingExample> examples;
};

Data synthetic(const DatasetConfig& d, std::size_t n, std::uint64_t seed) {
  Data out;
  out.corpus = generate_synthetic(SyntheticTask{}, d, n, seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = out.corpus.records[i];
    out.examples.push_back({r.essay_id, &d.at(r.prompt_id), out.corpus.features[i], r.gold});
  }
  return out;
}

std::vector<const TrainingExample*> pointers(const std::vector<TrainingExample>& v,
                                             std::size_t n) {
  std::vector<const TrainingExample*> out;
  for (std::size_t i = 0; i < n && i < v.size(); ++i) out.push_back(&v[i]);
  return out;
}

void randomize(ToyPolicy& p, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : p.parameters()) v = n(rng);
}

std::vector<double> params(const ToyPolicy& p) {
  return {p.parameters().begin(), p.parameters().end()};
}

TEST(TrainStep, ZeroLearningRateKeepsParameters) {
  const auto data = synthetic(asap(), 64, 1);
  std::mt19937_64 rng(1);
  ToyPolicy policy(asap(), synthetic_feature_dim(asap().schema));
  randomize(policy, rng, 0.5);
  OptimizerConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  const auto before = params(policy);
  const auto result = train(TrainState::initial(policy), data.examples, {}, asap(), cfg);
  EXPECT_EQ(params(result.state.policy), before);
  EXPECT_EQ(result.state.step, 8u);
}

// G = 1 groups carry zero advantage; only the KL term acts.
TEST(TrainStep, ZeroAdvantageIsKlOnly) {
  const auto data = synthetic(asap(), 16, 2);
  const auto batch = pointers(data.examples, 8);
  OptimizerConfig cfg;
  cfg.group_size = 1;
  cfg.learning_rate = 0.5;
  ToyPolicy policy(asap(), synthetic_feature_dim(asap().schema));
  std::mt19937_64 rng(2);
  randomize(policy, rng, 0.3);

  auto same = TrainState::initial(policy);
  const auto before = params(same.policy);
  const auto step = train_step(same, batch, cfg);
  EXPECT_EQ(params(same.policy), before);
  EXPECT_EQ(step.report.kl, 0.0);
  for (const auto& g : step.groups) {
    for (const auto& m : g.members) {
      for (const double a : m.advantages) EXPECT_EQ(a, 0.0);
    }
  }

  auto moved = TrainState::initial(policy);
  randomize(moved.policy, rng, 0.3);
  std::vector<RolloutGroup> groups;
  for (const auto* ex : batch) groups.push_back(make_rollout_group(moved.policy, *ex, cfg, rng()));
  double last = evaluate_objective(moved.policy, moved.reference, groups, cfg, nullptr).kl;
  for (int k = 0; k < 5; ++k) {
    std::vector<double> grad;
    evaluate_objective(moved.policy, moved.reference, groups, cfg, &grad);
    auto p = moved.policy.parameters();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += cfg.learning_rate * grad[i];
    const double kl = evaluate_objective(moved.policy, moved.reference, groups, cfg, nullptr).kl;
    EXPECT_LT(kl, last);
    last = kl;
  }
  EXPECT_EQ(params(moved.reference), before);
}

TEST(TrainStep, IdenticalRewardsAreNoOp) {
  const auto data = synthetic(asap(), 8, 3);
  ToyPolicy policy(asap(), synthetic_feature_dim(asap().schema));
  for (const auto& b : policy.blocks()) {
    if (b.name.rfind("bias/", 0) == 0) policy.parameters()[b.offset] = 800.0;
  }
  auto state = TrainState::initial(policy);
  const auto before = params(state.policy);
  OptimizerConfig cfg;
  const auto step = train_step(state, pointers(data.examples, 8), cfg);
  EXPECT_EQ(params(state.policy), before);
  for (const auto& g : step.groups) {
    for (std::size_t i = 1; i < g.members.size(); ++i) {
      EXPECT_EQ(g.members[i].reward.sample, g.members[0].reward.sample);
    }
  }
}

// Objective over fixed rollouts, ratio 1 at sampling time.
struct ObjectiveInstance {
  Data data;
  ToyPolicy current;
  ToyPolicy reference;
  std::vector<RolloutGroup> groups;
  OptimizerConfig cfg;
};

ObjectiveInstance objective_instance(std::uint64_t seed, AdvantageMode mode, double kl_coeff) {
  std::mt19937_64 rng(seed);
  const auto& d = seed % 2 == 0 ? asap() : small();
  ObjectiveInstance o{synthetic(d, 4, seed), ToyPolicy(d, synthetic_feature_dim(d.schema)), {},
                      {}, {}};
  randomize(o.current, rng, 0.7);
  o.reference = o.current;
  randomize(o.reference, rng, 0.7);
  o.cfg.mode = mode;
  o.cfg.kl_coeff = kl_coeff;
  o.cfg.fault_probability = seed % 3 == 0 ? 0.5 : 0.0;
  for (std::size_t b = 0; b < 2; ++b) {
    o.groups.push_back(make_rollout_group(o.current, o.data.examples[b], o.cfg, rng()));
  }
  return o;
}

TEST(Objective, FiniteDifferencesAtUnitRatio) {
  const double h = 1e-5;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto o = objective_instance(seed, seed % 4 == 1 ? AdvantageMode::kGrpoShared : AdvantageMode::kTapo,
                                0.1);
    std::vector<double> grad;
    evaluate_objective(o.current, o.reference, o.groups, o.cfg, &grad);
    auto p = o.current.parameters();
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (grad[i] == 0.0 && o.current.blocks().size() > 40 && i % 7 != 0) continue;
      const double keep = p[i];
      p[i] = keep + h;
      const double up = evaluate_objective(o.current, o.reference, o.groups, o.cfg, nullptr).objective;
      p[i] = keep - h;
      const double down =
          evaluate_objective(o.current, o.reference, o.groups, o.cfg, nullptr).objective;
      p[i] = keep;
      const double fd = (up - down) / (2 * h);
      diff = std::max(diff, std::abs(fd - grad[i]));
      scale = std::max({scale, std::abs(fd), std::abs(grad[i])});
    }
    ASSERT_GT(scale, 0.0);
    ASSERT_LT(diff / scale, 1e-4) << "seed " << seed;
  }
}

// Shared advantages, no KL, ratio 1: the gradient is the score-function
// estimator sum_i A_i / |o_i| * grad log pi(o_i), averaged over groups.
TEST(Objective, ScoreFunctionIdentity) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto o = objective_instance(seed, AdvantageMode::kGrpoShared, 0.0);
    std::vector<double> grad;
    const auto v = evaluate_objective(o.current, o.reference, o.groups, o.cfg, &grad);
    std::vector<double> expect(grad.size(), 0.0);
    double surrogate = 0.0;
    for (const auto& g : o.groups) {
      for (const auto& m : g.members) {
        const double a = m.advantages.empty() ? 0.0 : m.advantages[0];
        const double w = 1.0 / (o.groups.size() * g.members.size() * m.output.tokens.size());
        surrogate += w * a * static_cast<double>(m.output.tokens.size());
        // Dropped decisions carry no token and so no surrogate term.
        auto kept = m.output;
        const auto full = grad_log_prob(o.current, g.example->input(), kept);
        bool all_kept = true;
        for (const auto& d : m.output.decisions) all_kept = all_kept && d.token_index != ScoreDecision::kDropped;
        if (!all_kept) continue;
        for (std::size_t i = 0; i < full.size(); ++i) expect[i] += w * a * full[i];
      }
    }
    if (o.cfg.fault_probability > 0.0) continue;
    EXPECT_NEAR(v.surrogate, surrogate, 1e-12);
    for (std::size_t i = 0; i < grad.size(); ++i) ASSERT_NEAR(grad[i], expect[i], 1e-12);
  }
}

TEST(Objective, KlNonNegativeAndZeroAtReference) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto o = objective_instance(seed, AdvantageMode::kTapo, 0.1);
    EXPECT_GT(evaluate_objective(o.current, o.reference, o.groups, o.cfg, nullptr).kl, 0.0);
    EXPECT_EQ(evaluate_objective(o.current, o.current, o.groups, o.cfg, nullptr).kl, 0.0);
  }
}

TEST(TrainStep, ReductionToSharedAdvantage) {
  const auto data = synthetic(asap(), 32, 4);
  const auto batch = pointers(data.examples, 8);
  OptimizerConfig tapo;
  tapo.credit.lambda_loc = 0.0;
  tapo.credit.clip_max = std::numeric_limits<double>::infinity();
  OptimizerConfig grpo = tapo;
  grpo.mode = AdvantageMode::kGrpoShared;
  ToyPolicy policy(asap(), synthetic_feature_dim(asap().schema));
  auto a = TrainState::initial(policy);
  auto b = TrainState::initial(policy);
  for (int k = 0; k < 4; ++k) {
    train_step(a, batch, tapo);
    train_step(b, batch, grpo);
    for (std::size_t i = 0; i < policy.num_parameters(); ++i) {
      ASSERT_NEAR(a.policy.parameters()[i], b.policy.parameters()[i], 1e-9);
    }
  }
}

TEST(Train, ReductionFullRunBitwise) {
  const auto train_set = synthetic(asap(), 200, 5);
  const auto heldout = synthetic(asap(), 50, 6);
  OptimizerConfig tapo;
  tapo.credit.lambda_loc = 0.0;
  tapo.credit.clip_max = std::numeric_limits<double>::infinity();
  tapo.eval_interval = 5;
  OptimizerConfig grpo = tapo;
  grpo.mode = AdvantageMode::kGrpoShared;
  const ToyPolicy policy(asap(), synthetic_feature_dim(asap().schema));
  const auto ra = train(TrainState::initial(policy), train_set.examples, heldout.examples, asap(), tapo);
  const auto rb = train(TrainState::initial(policy), train_set.examples, heldout.examples, asap(), grpo);
  std::ostringstream sa, sb, ea, eb;
  write_step_reports(sa, ra.steps);
  write_step_reports(sb, rb.steps);
  write_eval_points(ea, ra.evals);
  write_eval_points(eb, rb.evals);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(ea.str(), eb.str());
  EXPECT_EQ(params(ra.state.policy), params(rb.state.policy));
}

TEST(Advantages, RewardShiftInvariant) {
  const auto data = synthetic(asap(), 8, 7);
  ToyPolicy policy(asap(), synthetic_feature_dim(asap().schema));
  std::mt19937_64 rng(7);
  randomize(policy, rng, 0.5);
  OptimizerConfig cfg;
  for (const auto& ex : data.examples) {
    auto batch = sample_group(policy, ex, cfg, rng());
    std::vector<GroupSample> shifted = batch.samples;
    for (auto& s : shifted) {
      s.reward.sample += 3.5;
      s.reward.global += 3.5;
    }
    const auto moved = GroupBatch::build(shifted, cfg.epsilon);
    for (const auto mode : {AdvantageMode::kTapo, AdvantageMode::kGrpoShared}) {
      cfg.mode = mode;
      const auto a = group_advantages(batch, *ex.config, cfg);
      const auto b = group_advantages(moved, *ex.config, cfg);
      for (std::size_t i = 0; i < a.values.size(); ++i) {
        for (std::size_t t = 0; t < a.values[i].size(); ++t) {
          ASSERT_NEAR(a.values[i][t], b.values[i][t], 1e-9);
        }
      }
    }
  }
}

TEST(Train, DeterministicPerSeed) {
  const auto train_set = synthetic(asap(), 160, 8);
  const auto heldout = synthetic(asap(), 40, 9);
  OptimizerConfig cfg;
  cfg.eval_interval = 4;
  cfg.fault_probability = 0.2;
  const ToyPolicy policy(asap(), synthetic_feature_dim(asap().schema));
  const auto a = train(TrainState::initial(policy), train_set.examples, heldout.examples, asap(), cfg);
  const auto b = train(TrainState::initial(policy), train_set.examples, heldout.examples, asap(), cfg);
  std::ostringstream sa, sb;
  write_step_reports(sa, a.steps);
  write_eval_points(sa, a.evals);
  write_step_reports(sb, b.steps);
  write_eval_points(sb, b.evals);
  EXPECT_EQ(sa.str(), sb.str());
  cfg.seed = 1;
  const auto c = train(TrainState::initial(policy), train_set.examples, heldout.examples, asap(), cfg);
  EXPECT_NE(params(a.state.policy), params(c.state.policy));
  for (const auto& s : a.steps) {
    EXPECT_TRUE(std::isfinite(s.mean_sample_reward) && std::isfinite(s.kl));
    EXPECT_GE(s.kl, 0.0);
  }
  EXPECT_EQ(a.steps.front().kl, 0.0);
  EXPECT_GT(a.steps.front().format_violation_rate, 0.0);
}

TEST(Train, ErrorDecreasesFromInitialization) {
  const auto train_set = synthetic(asap(), 800, 10);
  const auto heldout = synthetic(asap(), 200, 11);
  OptimizerConfig cfg;
  cfg.eval_interval = 25;
  const ToyPolicy policy(asap(), synthetic_feature_dim(asap().schema));
  const auto r = train(TrainState::initial(policy), train_set.examples, heldout.examples, asap(), cfg);
  ASSERT_GE(r.evals.size(), 3u);
  EXPECT_EQ(r.evals.front().step, 0u);
  for (std::size_t i = 1; i < r.evals.size(); ++i) {
    EXPECT_LT(r.evals[i].mean_abs_error, r.evals.front().mean_abs_error) << r.evals[i].step;
  }
  EXPECT_LT(r.evals.back().mean_abs_error, 0.75 * r.evals.front().mean_abs_error);
  EXPECT_GT(r.evals.back().trait_avg_qwk, 0.2);
}

TEST(Train, NonFiniteAborts) {
  const auto data = synthetic(asap(), 16, 12);
  ToyPolicy policy(asap(), synthetic_feature_dim(asap().schema));
  policy.parameters()[0] = std::numeric_limits<double>::quiet_NaN();
  OptimizerConfig cfg;
  cfg.epochs = 1;
  // Make sure the poisoned head is used.
  std::vector<TrainingExample> set;
  for (const auto& e : data.examples) {
    if (e.config->prompt_id() == asap().prompts[0].prompt_id()) set.push_back(e);
  }
  ASSERT_FALSE(set.empty());
  try {
    train(TrainState::initial(policy), set, {}, asap(), cfg);
    FAIL() << "expected an abort";
  } catch (const TrainingAborted& e) {
    EXPECT_EQ(e.state().step, 0u);
  }
}

TEST(OptimizerConfigTest, Validation) {
  OptimizerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.clip_ratio = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = OptimizerConfig{};
  c.kl_coeff = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = OptimizerConfig{};
  c.learning_rate = std::numeric_limits<double>::infinity();
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_mode("grpo-shared"), AdvantageMode::kGrpoShared);
  EXPECT_THROW(parse_mode("ppo"), ConfigError);
}

}  // namespace
}  // namespace tapo
