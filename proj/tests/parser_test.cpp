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

#include <random>

#include "fixtures.hpp"
#include "tapo/parser.hpp"

namespace tapo {
namespace {

using testing::asap;
using testing::small;

// Schema A,B,C. S1: all valid. S2: A in [0,3], C in [2,4], B inapplicable.
const PromptConfig& s1() { return small().at("S1"); }
const PromptConfig& s2() { return small().at("S2"); }

bool valid_text(std::string_view text, const PromptConfig& config) {
  return parse(text, small().schema, config).is_valid;
}

TEST(Serialize, Prompt3Gold) {
  const auto& d = asap();
  ScoreVector gold = ScoreVector::all_nan(d.schema.size());
  gold[*d.schema.index_of("Overall")] = 2;
  gold[*d.schema.index_of("Content")] = 2;
  gold[*d.schema.index_of("PromptAdherence")] = 1;
  gold[*d.schema.index_of("Narrativity")] = 2;
  gold[*d.schema.index_of("Language")] = 1;
  const std::string text = serialize(gold, d.schema);
  EXPECT_EQ(text,
            "Overall: 2, Content: 2, PromptAdherence: 1, Language: 1, Narrativity: 2, "
            "Organization: NaN, Conventions: NaN, WordChoice: NaN, SentenceFluency: NaN, "
            "Style: NaN, Voice: NaN");
  const auto parsed = parse(text, d.schema, d.at("3"));
  EXPECT_TRUE(parsed.is_valid);
  EXPECT_EQ(to_score_vector(parsed), gold);
}

TEST(Serialize, AllNaN) {
  const auto v = ScoreVector::all_nan(3);
  EXPECT_EQ(serialize(v, small().schema), "A: NaN, B: NaN, C: NaN");
  const auto parsed = parse(serialize(v, small().schema), small().schema, s2());
  EXPECT_FALSE(parsed.is_valid);
  EXPECT_EQ(to_score_vector(parsed), v);
}

TEST(Parse, CanonicalIsValid) {
  EXPECT_TRUE(valid_text("A: 0, B: 1, C: 4", s1()));
  EXPECT_TRUE(valid_text("A: 3, B: NaN, C: 2", s2()));
  EXPECT_TRUE(valid_text("A:3,B:NaN,C:2", s2()));
  EXPECT_TRUE(valid_text("  A : 3 ,\n B : NaN , C : 2 ", s2()));
}

// One representative per rule violation on the 3-trait schema.
TEST(Parse, ViolationClasses) {
  struct Case {
    const char* what;
    const char* text;
    const PromptConfig* config;
  };
  const Case cases[] = {
      {"missing trait", "A: 0, B: 1", &s1()},
      {"missing first trait", "B: 1, C: 4", &s1()},
      {"missing inapplicable trait", "A: 3, C: 2", &s2()},
      {"duplicate trait", "A: 0, A: 1, B: 1, C: 4", &s1()},
      {"duplicate trait at end", "A: 0, B: 1, C: 4, C: 4", &s1()},
      {"wrong order", "B: 1, A: 0, C: 4", &s1()},
      {"wrong order at end", "A: 0, C: 4, B: 1", &s1()},
      {"out of range high", "A: 5, B: 1, C: 4", &s1()},
      {"out of range low", "A: 0, B: 0, C: 4", &s1()},
      {"negative", "A: -1, B: 1, C: 4", &s1()},
      {"off grid", "A: 0.5, B: 1, C: 4", &s1()},
      {"numeric on inapplicable trait", "A: 3, B: 1, C: 2", &s2()},
      {"NaN on valid trait", "A: NaN, B: 1, C: 4", &s1()},
      {"NaN on valid trait (S2)", "A: 3, B: NaN, C: NaN", &s2()},
      {"malformed value", "A: x, B: 1, C: 4", &s1()},
      {"empty value", "A: , B: 1, C: 4", &s1()},
      {"missing colon", "A 0, B: 1, C: 4", &s1()},
      {"missing separator", "A: 0 B: 1, C: 4", &s1()},
      {"trailing separator", "A: 0, B: 1, C: 4,", &s1()},
      {"trailing garbage", "A: 0, B: 1, C: 4 ok", &s1()},
      {"leading garbage", "scores A: 0, B: 1, C: 4", &s1()},
      {"unknown trait", "A: 0, B: 1, D: 4, C: 4", &s1()},
      {"empty text", "", &s1()},
  };
  for (const auto& c : cases) EXPECT_FALSE(valid_text(c.text, *c.config)) << c.what;
}

TEST(Parse, DuplicateFirstOccurrenceWins) {
  const auto p = parse("A: 1, A: 2, B: 1, C: 4", small().schema, s1());
  EXPECT_FALSE(p.is_valid);
  EXPECT_EQ(p.values[0].number, 1.0);
  EXPECT_EQ(p.token_spans[0]->begin, 2u);
}

TEST(Parse, ValueKinds) {
  const auto p = parse("A: x, C: NaN", small().schema, s1());
  EXPECT_EQ(p.values[0].kind, ValueKind::kMalformed);
  EXPECT_EQ(p.values[1].kind, ValueKind::kAbsent);
  EXPECT_EQ(p.values[2].kind, ValueKind::kNaN);
  EXPECT_FALSE(p.token_spans[1].has_value());
  EXPECT_FALSE(p.usable_score(0, s1()).has_value());
}

TEST(Parse, NumericSyntax) {
  EXPECT_EQ(parse_number("4"), 4.0);
  EXPECT_EQ(parse_number("+4"), 4.0);
  EXPECT_EQ(parse_number("-2.50"), -2.5);
  for (const char* bad : {"", "4.", ".5", "1e2", "4x", "--1", "NaN", "inf"}) {
    EXPECT_FALSE(parse_number(bad).has_value()) << bad;
  }
}

TEST(Parse, SpansPointAtValueTokens) {
  const auto p = parse("A: 0, B: 1, C: 4", small().schema, s1());
  ASSERT_TRUE(p.is_valid);
  for (TraitIndex t = 0; t < 3; ++t) {
    const auto span = *p.token_spans[t];
    EXPECT_EQ(span.end, span.begin + 1);
    EXPECT_EQ(p.tokens[span.last()], format_score(to_score_vector(p)[t]));
    EXPECT_EQ(p.tokens[span.begin - 2], small().schema.name(t));
  }
}

// Random vectors over every config, including half-point scales.
TEST(ParseProperty, RoundTripAndSpans) {
  std::mt19937_64 rng(5);
  for (const auto* d : {&asap(), &small(), &testing::feedback()}) {
    for (int n = 0; n < 500; ++n) {
      const auto& cfg = d->prompts[rng() % d->prompts.size()];
      const auto v = testing::random_scores(cfg, d->schema.size(), rng);
      const auto p = parse(serialize(v, d->schema), d->schema, cfg);
      ASSERT_TRUE(p.is_valid) << serialize(v, d->schema);
      ASSERT_EQ(to_score_vector(p), v);
      ASSERT_EQ(p.tokens, serialize_tokens(v, d->schema));
      for (TraitIndex t = 1; t < d->schema.size(); ++t) {
        ASSERT_LE(p.token_spans[t - 1]->end, p.token_spans[t]->begin);
      }
    }
  }
}

// Random token soup: never throws, spans stay disjoint and in bounds.
TEST(ParseProperty, ArbitraryInput) {
  std::mt19937_64 rng(9);
  const std::vector<std::string> vocab = {"A", "B", "C", ":", ",", "0", "1", "4", "NaN", "x",
                                          "2.5", "-1", "D"};
  for (int n = 0; n < 5000; ++n) {
    std::vector<std::string> toks(rng() % 16);
    for (auto& t : toks) t = vocab[rng() % vocab.size()];
    ParsedOutput p;
    ASSERT_NO_THROW(p = parse_tokens(toks, small().schema, s1()));
    std::vector<TokenSpan> spans;
    for (const auto& s : p.token_spans) {
      if (s) {
        ASSERT_LE(s->end, toks.size());
        spans.push_back(*s);
      }
    }
    for (std::size_t i = 0; i < spans.size(); ++i) {
      for (std::size_t j = i + 1; j < spans.size(); ++j) {
        ASSERT_TRUE(spans[i].end <= spans[j].begin || spans[j].end <= spans[i].begin);
      }
    }
    if (p.is_valid) {
      ASSERT_EQ(p.tokens, serialize_tokens(to_score_vector(p), small().schema));
    }
  }
  EXPECT_NO_THROW(parse("\x01\xff::,,  \n\t", small().schema, s1()));
}

}  // namespace
}  // namespace tapo
