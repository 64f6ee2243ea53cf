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

#include "fixtures.hpp"
#include "tapo/parser.hpp"
#include "tapo/reward.hpp"

namespace tapo {
namespace {

const TraitSchema& schema2() {
  static const TraitSchema s({"A", "B"});
  return s;
}

ScoreVector sv(std::vector<double> v) { return ScoreVector(std::move(v)); }

TEST(Huber, HandValues) {
  EXPECT_EQ(huber(0.0, 0.1), 0.0);
  EXPECT_EQ(huber(0.5, 0.1), 0.045);
  EXPECT_EQ(huber(-0.5, 0.1), 0.045);
  // 0.05 is not a binary fraction: half the correctly rounded square of the
  // stored 0.05 is one ulp above the double nearest 0.00125.
  EXPECT_EQ(huber(0.05, 0.1), std::nextafter(0.00125, 1.0));
  // Binary fractions are exact.
  EXPECT_EQ(huber(0.0625, 0.125), 0.001953125);
  EXPECT_EQ(huber(0.5, 0.125), 0.0546875);
}

TEST(Huber, ContinuousAndMonotone) {
  for (const double d : {0.1, 0.25, 1.0}) {
    EXPECT_EQ(huber(d, d), 0.5 * d * d);
    EXPECT_EQ(huber(std::nextafter(d, 0.0), d), 0.5 * std::nextafter(d, 0.0) * std::nextafter(d, 0.0));
    EXPECT_NEAR(huber(std::nextafter(d, 1.0), d), huber(d, d), 1e-12);
    double prev = -1.0;
    for (int k = 0; k <= 2000; ++k) {
      const double v = huber(k * 1e-3, d);
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(GlobalReward, HandValues) {
  const RewardConfig rc;
  const PromptConfig one("p", schema2(), {{0, {0, 4}}});
  EXPECT_EQ(global_reward(sv({4, kNaN}), sv({4, kNaN}), one, rc).value, 0.0);
  const auto g = global_reward(sv({2, kNaN}), sv({4, kNaN}), one, rc);
  EXPECT_NEAR(g.value, -0.3635, 1e-15);
  ASSERT_EQ(g.errors.size(), 1u);
  EXPECT_EQ(g.errors[0].error, 0.5);

  const PromptConfig two("p", schema2(), {{0, {0, 4}}, {1, {0, 4}}});
  EXPECT_NEAR(global_reward(sv({4, 2}), sv({4, 4}), two, rc).value, -0.18175, 1e-15);
}

TEST(GlobalReward, UnusablePredictionHasUnitError) {
  const RewardConfig rc;
  const PromptConfig one("p", schema2(), {{0, {0, 4}}});
  const double unit = -(rc.alpha * huber(1.0, rc.delta) + rc.beta);
  for (const auto& v : {TraitValue{ValueKind::kAbsent, kNaN}, TraitValue{ValueKind::kMalformed, kNaN},
                        TraitValue{ValueKind::kNaN, kNaN}, TraitValue::of(5), TraitValue::of(2.5)}) {
    const std::vector<TraitValue> pred = {v, TraitValue::of(kNaN)};
    const auto g = global_reward(pred, sv({4, kNaN}), one, rc);
    EXPECT_EQ(g.value, unit);
    EXPECT_FALSE(g.errors[0].usable);
  }
}

TEST(RelationReward, HandValues) {
  const PromptConfig p("p", schema2(), {{0, {0, 10}}, {1, {0, 10}}});
  EXPECT_EQ(relation_reward(sv({9, 1}), sv({8, 2}), p), 0.0);
  EXPECT_NEAR(relation_reward(sv({3, 7}), sv({8, 2}), p), -0.4, 1e-15);
  EXPECT_EQ(relation_reward(sv({3, 7}), sv({5, 5}), p), 0.0);
  EXPECT_EQ(relation_reward(sv({5, 5}), sv({8, 2}), p), 0.0);  // predicted tie
  const auto pairs = relation_pairs(to_trait_values(sv({3, 7})), sv({8, 2}), p);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].direction, 1);
  EXPECT_NEAR(pairs[0].predicted_gap, -0.4, 1e-15);
}

TEST(RelationReward, UnusablePredictionsLeavePairs) {
  const PromptConfig p("p", schema2(), {{0, {0, 10}}, {1, {0, 10}}});
  EXPECT_EQ(relation_reward(sv({kNaN, 7}), sv({8, 2}), p), 0.0);
  EXPECT_EQ(relation_pairs(to_trait_values(sv({11, 7})), sv({8, 2}), p).size(), 0u);
}

TEST(FormatReward, Values) {
  const auto& d = testing::small();
  const auto& s1 = d.at("S1");
  EXPECT_EQ(format_reward(parse("A: 0, B: 1, C: 4", d.schema, s1)), 0.0);
  EXPECT_EQ(format_reward(parse("A: 0, B: 1", d.schema, s1)), -1.0);
  EXPECT_EQ(format_reward(parse("A: 0, B: 9, C: 4", d.schema, s1)), -1.0);
}

TEST(SampleReward, Composition) {
  const RewardConfig rc;
  const PromptConfig one("p", schema2(), {{0, {0, 4}}});
  const auto exact = sample_reward(parse("A: 4, B: NaN", schema2(), one), sv({4, kNaN}), one, rc);
  EXPECT_EQ(exact.global, 0.0);
  EXPECT_EQ(exact.relation, 0.0);
  EXPECT_EQ(exact.format, 0.0);
  EXPECT_EQ(exact.sample, 0.0);

  const auto half = sample_reward(parse("A: 2, B: NaN", schema2(), one), sv({4, kNaN}), one, rc);
  EXPECT_NEAR(half.sample, -0.3635, 1e-15);
  EXPECT_EQ(half.relation, 0.0);
  EXPECT_EQ(half.format, 0.0);

  // Number on the inapplicable trait: invalid, A recovered with e = 1.
  const auto bad = sample_reward(parse("A: 0, B: 3", schema2(), one), sv({4, kNaN}), one, rc);
  EXPECT_EQ(bad.format, -1.0);
  EXPECT_EQ(bad.per_trait_errors[0].error, 1.0);
  EXPECT_TRUE(bad.per_trait_errors[0].usable);
  EXPECT_NEAR(bad.global, -(0.3 * 0.095 + 0.7), 1e-15);
  EXPECT_NEAR(bad.sample - bad.global - rc.lambda_rel * bad.relation, -0.1, 1e-15);
}

TEST(RewardConfig, Validation) {
  RewardConfig rc;
  rc.delta = 0.0;
  EXPECT_THROW(rc.validate(), ConfigError);
  rc = RewardConfig{};
  rc.beta = -1;
  EXPECT_THROW(rc.validate(), ConfigError);
  EXPECT_NO_THROW(RewardConfig{}.validate());
}

// Random prompts with 2..5 traits over random ranges, random predictions
// including off-grid and missing entries.
struct RandomInstance {
  TraitSchema schema;
  PromptConfig config;
  ScoreVector gold;
  std::vector<TraitValue> pred;
};

RandomInstance random_instance(std::mt19937_64& rng, int shift = 0) {
  const std::size_t k = 2 + rng() % 4;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < k; ++j) names.push_back("T" + std::to_string(j));
  RandomInstance r{TraitSchema(names), {}, ScoreVector::all_nan(k), {}};
  std::vector<PromptConfig::ValidTrait> valid;
  for (std::size_t j = 0; j < k; ++j) {
    const int lo = static_cast<int>(rng() % 5);
    valid.push_back({j, {lo + shift, lo + shift + 1 + static_cast<int>(rng() % 8)}});
  }
  r.config = PromptConfig("p", r.schema, valid);
  r.pred.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    const auto range = valid[j].range;
    r.gold[j] = range.lower + static_cast<double>(rng() % static_cast<unsigned>(range.upper - range.lower + 1));
    const auto roll = rng() % 10;
    if (roll == 0) {
      r.pred[j] = TraitValue{ValueKind::kMalformed, kNaN};
    } else {
      r.pred[j] = TraitValue::of(range.lower + static_cast<double>(rng() % static_cast<unsigned>(range.upper - range.lower + 1)));
    }
  }
  return r;
}

TEST(RewardProperty, TermsNonPositiveAndCompose) {
  std::mt19937_64 rng(17);
  const RewardConfig rc;
  for (int n = 0; n < 5000; ++n) {
    auto inst = random_instance(rng);
    ScoreVector pv = ScoreVector::all_nan(inst.pred.size());
    for (std::size_t j = 0; j < pv.size(); ++j) pv[j] = inst.pred[j].number;
    const auto parsed = parse(serialize(pv, inst.schema), inst.schema, inst.config);
    const auto b = sample_reward(parsed, inst.gold, inst.config, rc);
    ASSERT_LE(b.global, 0.0);
    ASSERT_LE(b.relation, 0.0);
    ASSERT_TRUE(b.format == 0.0 || b.format == -1.0);
    ASSERT_EQ(b.sample, b.global + rc.lambda_rel * b.relation + rc.lambda_fmt * b.format);
    ASSERT_EQ(b.sample == 0.0, parsed.is_valid && to_score_vector(parsed) == inst.gold);
  }
}

TEST(RewardProperty, RangeShiftInvariance) {
  const RewardConfig rc;
  for (int shift : {-7, 3, 40}) {
    std::mt19937_64 a(23);
    std::mt19937_64 b(23);
    for (int n = 0; n < 2000; ++n) {
      const auto base = random_instance(a);
      const auto moved = random_instance(b, shift);
      ASSERT_EQ(moved.gold[0], base.gold[0] + shift);
      ASSERT_NEAR(global_reward(base.pred, base.gold, base.config, rc).value,
                  global_reward(moved.pred, moved.gold, moved.config, rc).value, 1e-12);
      ASSERT_NEAR(relation_reward(base.pred, base.gold, base.config),
                  relation_reward(moved.pred, moved.gold, moved.config), 1e-12);
    }
  }
}

// R_rel = 0 exactly when no usable strict gold pair is reversed.
TEST(RewardProperty, RelationSign) {
  std::mt19937_64 rng(29);
  for (int n = 0; n < 10000; ++n) {
    const auto inst = random_instance(rng);
    const auto& c = inst.config;
    bool reversed = false;
    for (TraitIndex a = 0; a < inst.pred.size(); ++a) {
      for (TraitIndex b = a + 1; b < inst.pred.size(); ++b) {
        if (inst.pred[a].kind != ValueKind::kNumber || inst.pred[b].kind != ValueKind::kNumber) {
          continue;
        }
        const double ga = c.normalize(a, inst.gold[a]);
        const double gb = c.normalize(b, inst.gold[b]);
        const double pa = c.normalize(a, inst.pred[a].number);
        const double pb = c.normalize(b, inst.pred[b].number);
        if ((ga > gb && pa < pb) || (ga < gb && pa > pb)) reversed = true;
      }
    }
    const double r = relation_reward(inst.pred, inst.gold, c);
    ASSERT_EQ(r == 0.0, !reversed);
    ASSERT_EQ(r < 0.0, reversed);
  }
}

}  // namespace
}  // namespace tapo
