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

#ifndef TAPO_PARSER_HPP_
#define TAPO_PARSER_HPP_

// Structured output grammar:
//
//   output := pair ("," pair)*
//   pair   := TRAIT ":" VALUE
//   VALUE  := NUMBER | "NaN"
//   NUMBER := [+-]? DIGITS ("." DIGITS)?
//
// Surface text is the token stream joined with ": " and ", ", e.g.
// "Overall: 8, Content: 4, Voice: NaN". Each trait name, ":", value and ","
// is exactly one token; the policy emits this same stream.

#include <cctype>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tapo/schema.hpp"

namespace tapo {

enum class ValueKind { kAbsent, kMalformed, kNaN, kNumber };

struct TraitValue {
  ValueKind kind = ValueKind::kAbsent;
  double number = kNaN;

  static TraitValue of(double v) {
    return std::isnan(v) ? TraitValue{ValueKind::kNaN, kNaN} : TraitValue{ValueKind::kNumber, v};
  }
};

// Half-open token index range [begin, end).
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t last() const { return end - 1; }
  bool operator==(const TokenSpan&) const = default;
};

struct ParsedOutput {
  std::vector<std::string> tokens;
  std::vector<TraitValue> values;                     // per schema trait
  std::vector<std::optional<TokenSpan>> token_spans;  // per schema trait
  bool is_valid = false;

  // The numeric prediction for a valid trait, when it is on the score grid.
  std::optional<double> usable_score(TraitIndex t, const PromptConfig& config) const {
    const auto& v = values[t];
    if (v.kind != ValueKind::kNumber || !config.accepts(t, v.number)) return std::nullopt;
    return v.number;
  }
};

inline std::vector<TraitValue> to_trait_values(const ScoreVector& scores) {
  std::vector<TraitValue> out;
  out.reserve(scores.size());
  for (const double v : scores.values) out.push_back(TraitValue::of(v));
  return out;
}

inline bool is_punct_token(std::string_view tok) { return tok == ":" || tok == ","; }

inline std::vector<std::string> serialize_tokens(const ScoreVector& scores,
                                                 const TraitSchema& schema) {
  std::vector<std::string> tokens;
  tokens.reserve(schema.size() * 4);
  for (TraitIndex t = 0; t < schema.size(); ++t) {
    if (t > 0) tokens.emplace_back(",");
    tokens.push_back(schema.name(t));
    tokens.emplace_back(":");
    tokens.push_back(format_score(scores[t]));
  }
  return tokens;
}

inline std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && !is_punct_token(tokens[i])) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

inline std::string serialize(const ScoreVector& scores, const TraitSchema& schema) {
  return join_tokens(serialize_tokens(scores, schema));
}

// Splits text into identifier, number, ":" and "," tokens; whitespace
// separates tokens and any other byte becomes a one-byte token.
inline std::vector<std::string> tokenize(std::string_view text) {
  auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  auto is_ident_start = [](char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
  };
  auto is_ident = [&](char c) { return is_ident_start(c) || is_digit(c); };
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (is_ident_start(c)) {
      while (j < text.size() && is_ident(text[j])) ++j;
    } else if (is_digit(c) ||
               ((c == '+' || c == '-') && j < text.size() && is_digit(text[j]))) {
      while (j < text.size() && is_digit(text[j])) ++j;
      if (j + 1 < text.size() && text[j] == '.' && is_digit(text[j + 1])) {
        ++j;
        while (j < text.size() && is_digit(text[j])) ++j;
      }
    }
    tokens.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return tokens;
}

// Never throws on malformed streams. The first mention of a trait supplies
// its value; any duplicate, gap, reordering, stray token or bad value clears
// is_valid.
inline ParsedOutput parse_tokens(std::vector<std::string> tokens, const TraitSchema& schema,
                                 const PromptConfig& config) {
  ParsedOutput out;
  out.values.assign(schema.size(), TraitValue{});
  out.token_spans.assign(schema.size(), std::nullopt);
  bool structure_ok = true;
  std::vector<TraitIndex> mentions;

  const std::size_t n = tokens.size();
  std::size_t i = 0;
  while (i < n) {
    const auto trait = schema.index_of(tokens[i]);
    if (trait && i + 2 < n && tokens[i + 1] == ":") {
      const std::string& tok = tokens[i + 2];
      TraitValue value{ValueKind::kMalformed, kNaN};
      if (tok == kNaNToken) {
        value = {ValueKind::kNaN, kNaN};
      } else if (const auto num = parse_number(tok)) {
        value = {ValueKind::kNumber, *num};
      }
      mentions.push_back(*trait);
      if (out.values[*trait].kind == ValueKind::kAbsent) {
        out.values[*trait] = value;
        out.token_spans[*trait] = TokenSpan{i + 2, i + 3};
      }
      i += 3;
      if (i < n) {
        if (tokens[i] == "," && i + 1 < n) {
          ++i;
        } else {
          structure_ok = false;
          if (tokens[i] == ",") ++i;
        }
      }
    } else {
      structure_ok = false;
      ++i;
    }
  }

  bool valid = structure_ok && mentions.size() == schema.size();
  for (std::size_t k = 0; valid && k < mentions.size(); ++k) {
    if (mentions[k] != k) valid = false;
  }
  for (TraitIndex t = 0; valid && t < schema.size(); ++t) {
    const auto& v = out.values[t];
    if (config.is_valid(t)) {
      valid = v.kind == ValueKind::kNumber && config.accepts(t, v.number);
    } else {
      valid = v.kind == ValueKind::kNaN;
    }
  }
  out.is_valid = valid;
  out.tokens = std::move(tokens);
  return out;
}

inline ParsedOutput parse(std::string_view text, const TraitSchema& schema,
                          const PromptConfig& config) {
  return parse_tokens(tokenize(text), schema, config);
}

// Numeric values as a ScoreVector; absent or malformed entries become NaN.
inline ScoreVector to_score_vector(const ParsedOutput& parsed) {
  ScoreVector out = ScoreVector::all_nan(parsed.values.size());
  for (std::size_t t = 0; t < parsed.values.size(); ++t) {
    if (parsed.values[t].kind == ValueKind::kNumber) out[t] = parsed.values[t].number;
  }
  return out;
}

}  // namespace tapo

#endif  // TAPO_PARSER_HPP_
