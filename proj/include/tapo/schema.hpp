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

#ifndef TAPO_SCHEMA_HPP_
#define TAPO_SCHEMA_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tapo/csv.hpp"
#include "tapo/error.hpp"

namespace tapo {

using TraitIndex = std::size_t;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr std::string_view kNaNToken = "NaN";

// Dataset-wide ordered trait set. The order is the generation order.
class TraitSchema {
 public:
  TraitSchema() = default;
  explicit TraitSchema(std::vector<std::string> traits)
      : traits_(std::move(traits)) {
    if (traits_.empty()) throw ConfigError("trait schema is empty");
    std::unordered_set<std::string> seen;
    for (const auto& t : traits_) {
      if (t.empty()) throw ConfigError("trait schema has an empty identifier");
      if (!seen.insert(t).second) {
        throw ConfigError("duplicate trait identifier '" + t + "'");
      }
    }
  }

  std::size_t size() const { return traits_.size(); }
  const std::string& name(TraitIndex i) const { return traits_.at(i); }
  const std::vector<std::string>& traits() const { return traits_; }

  std::optional<TraitIndex> index_of(std::string_view name) const {
    const auto it = std::find(traits_.begin(), traits_.end(), name);
    if (it == traits_.end()) return std::nullopt;
    return static_cast<TraitIndex>(it - traits_.begin());
  }

  bool operator==(const TraitSchema&) const = default;

 private:
  std::vector<std::string> traits_;
};

// Inclusive integer score range [lower, upper].
struct ScoreRange {
  int lower = 0;
  int upper = 0;

  double width() const { return static_cast<double>(upper - lower); }
  bool contains(double v) const { return v >= lower && v <= upper; }
  bool operator==(const ScoreRange&) const = default;
};

inline double normalize_score(double value, ScoreRange range) {
  if (!(value >= range.lower && value <= range.upper)) {
    std::ostringstream msg;
    msg << "score " << value << " outside range [" << range.lower << ","
        << range.upper << "]";
    throw RangeError(msg.str());
  }
  return (value - range.lower) / range.width();
}

// Shortest round-trip decimal form; integral scores print without a point.
inline std::string format_score(double value) {
  if (std::isnan(value)) return std::string(kNaNToken);
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

// Accepts `[+-]?digits(.digits)?`; anything else yields nullopt.
inline std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::size_t i = 0;
  if (s[0] == '+' || s[0] == '-') i = 1;
  const std::size_t int_begin = i;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
  if (i == int_begin) return std::nullopt;
  if (i < s.size() && s[i] == '.') {
    const std::size_t frac_begin = ++i;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
    if (i == frac_begin) return std::nullopt;
  }
  if (i != s.size()) return std::nullopt;
  const std::string_view digits = s[0] == '+' ? s.substr(1) : s;
  double v = 0.0;
  const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (res.ec != std::errc() || res.ptr != digits.data() + digits.size()) {
    return std::nullopt;
  }
  return v;
}

// One value per schema trait; NaN marks an inapplicable trait.
struct ScoreVector {
  std::vector<double> values;

  ScoreVector() = default;
  explicit ScoreVector(std::vector<double> v) : values(std::move(v)) {}
  static ScoreVector all_nan(std::size_t n) {
    return ScoreVector(std::vector<double>(n, kNaN));
  }

  std::size_t size() const { return values.size(); }
  double operator[](TraitIndex i) const { return values[i]; }
  double& operator[](TraitIndex i) { return values[i]; }
  bool is_nan(TraitIndex i) const { return std::isnan(values[i]); }

  // NaN compares equal to NaN here.
  friend bool operator==(const ScoreVector& a, const ScoreVector& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (std::isnan(a.values[i]) != std::isnan(b.values[i])) return false;
      if (!std::isnan(a.values[i]) && a.values[i] != b.values[i]) return false;
    }
    return true;
  }
};

// A writing task: its applicable traits (in schema order), their ranges, the
// score grid step, and the texts used for the enhanced input.
class PromptConfig {
 public:
  struct ValidTrait {
    TraitIndex index;
    ScoreRange range;
  };

  PromptConfig() = default;
  PromptConfig(std::string prompt_id, const TraitSchema& schema,
               std::vector<ValidTrait> valid_traits, double score_step = 1.0,
               std::string prompt_text = {},
               std::map<std::string, std::string> trait_descriptions = {})
      : prompt_id_(std::move(prompt_id)),
        schema_size_(schema.size()),
        valid_(std::move(valid_traits)),
        slot_(schema.size(), kNoSlot),
        step_(score_step),
        prompt_text_(std::move(prompt_text)),
        descriptions_(std::move(trait_descriptions)) {
    if (valid_.empty()) {
      throw ConfigError("prompt " + prompt_id_ + ": no valid traits");
    }
    if (!(step_ > 0.0) || !std::isfinite(step_)) {
      throw ConfigError("prompt " + prompt_id_ + ": score_step must be positive");
    }
    std::sort(valid_.begin(), valid_.end(),
              [](const ValidTrait& a, const ValidTrait& b) { return a.index < b.index; });
    for (std::size_t k = 0; k < valid_.size(); ++k) {
      const auto& vt = valid_[k];
      if (vt.index >= schema_size_) {
        throw ConfigError("prompt " + prompt_id_ + ": trait index out of schema");
      }
      if (slot_[vt.index] != kNoSlot) {
        throw ConfigError("prompt " + prompt_id_ + ": trait '" +
                          schema.name(vt.index) + "' listed twice");
      }
      slot_[vt.index] = k;
      if (!(vt.range.lower < vt.range.upper)) {
        throw ConfigError("prompt " + prompt_id_ + ": trait '" +
                          schema.name(vt.index) + "' needs lower < upper");
      }
      const double steps = vt.range.width() / step_;
      if (std::abs(steps - std::round(steps)) > 1e-9) {
        throw ConfigError("prompt " + prompt_id_ + ": range of '" +
                          schema.name(vt.index) + "' not divisible by score_step");
      }
    }
  }

  const std::string& prompt_id() const { return prompt_id_; }
  std::size_t schema_size() const { return schema_size_; }
  const std::vector<ValidTrait>& valid_traits() const { return valid_; }
  std::size_t num_valid() const { return valid_.size(); }
  double score_step() const { return step_; }
  const std::string& prompt_text() const { return prompt_text_; }
  const std::map<std::string, std::string>& trait_descriptions() const {
    return descriptions_;
  }

  bool is_valid(TraitIndex t) const { return t < schema_size_ && slot_[t] != kNoSlot; }

  // Position of `t` within valid_traits(), if applicable.
  std::optional<std::size_t> slot(TraitIndex t) const {
    if (!is_valid(t)) return std::nullopt;
    return slot_[t];
  }

  ScoreRange range(TraitIndex t) const {
    if (!is_valid(t)) throw ContractViolation("range() on inapplicable trait");
    return valid_[slot_[t]].range;
  }

  std::size_t num_scores(TraitIndex t) const {
    return static_cast<std::size_t>(std::llround(range(t).width() / step_)) + 1;
  }

  double score_at(TraitIndex t, std::size_t k) const {
    return range(t).lower + static_cast<double>(k) * step_;
  }

  // Grid index of `value` for trait `t`; nullopt when off-grid or out of range.
  std::optional<std::size_t> score_index(TraitIndex t, double value) const {
    if (!is_valid(t) || !std::isfinite(value)) return std::nullopt;
    const ScoreRange r = range(t);
    if (!r.contains(value)) return std::nullopt;
    const double k = (value - r.lower) / step_;
    const double kr = std::round(k);
    if (std::abs(k - kr) > 1e-9) return std::nullopt;
    return static_cast<std::size_t>(kr);
  }

  bool accepts(TraitIndex t, double value) const {
    return score_index(t, value).has_value();
  }

  double normalize(TraitIndex t, double value) const {
    return normalize_score(value, range(t));
  }

  // Throws RangeError unless `scores` is numeric-on-grid exactly on the valid
  // traits and NaN elsewhere.
  void check_scores(const ScoreVector& scores, const TraitSchema& schema) const {
    if (scores.size() != schema_size_) {
      throw RangeError("score vector has " + std::to_string(scores.size()) +
                       " entries, schema has " + std::to_string(schema_size_));
    }
    for (TraitIndex t = 0; t < schema_size_; ++t) {
      if (is_valid(t)) {
        if (scores.is_nan(t)) {
          throw RangeError("trait '" + schema.name(t) + "' is NaN but valid for prompt " +
                           prompt_id_);
        }
        if (!accepts(t, scores[t])) {
          const ScoreRange r = range(t);
          throw RangeError("trait '" + schema.name(t) + "' score " +
                           format_score(scores[t]) + " outside range [" +
                           std::to_string(r.lower) + "," + std::to_string(r.upper) +
                           "] (step " + format_score(step_) + ")");
        }
      } else if (!scores.is_nan(t)) {
        throw RangeError("trait '" + schema.name(t) + "' is not valid for prompt " +
                         prompt_id_ + " and must be NaN");
      }
    }
  }

 private:
  static constexpr std::size_t kNoSlot = std::numeric_limits<std::size_t>::max();

  std::string prompt_id_;
  std::size_t schema_size_ = 0;
  std::vector<ValidTrait> valid_;
  std::vector<std::size_t> slot_;
  double step_ = 1.0;
  std::string prompt_text_;
  std::map<std::string, std::string> descriptions_;
};

// Schema plus every prompt configuration of one dataset.
struct DatasetConfig {
  TraitSchema schema;
  std::vector<PromptConfig> prompts;

  const PromptConfig* find(std::string_view prompt_id) const {
    for (const auto& p : prompts) {
      if (p.prompt_id() == prompt_id) return &p;
    }
    return nullptr;
  }

  const PromptConfig& at(std::string_view prompt_id) const {
    const auto* p = find(prompt_id);
    if (p == nullptr) throw ConfigError("unknown prompt_id '" + std::string(prompt_id) + "'");
    return *p;
  }
};

// Prompt config document:
//   {"traits": [...], "prompts": [{"prompt_id", "valid_traits", "ranges",
//    "step", "prompt_text", "trait_descriptions"}, ...]}
inline DatasetConfig parse_dataset_config(const nlohmann::json& doc) {
  DatasetConfig out;
  try {
    out.schema = TraitSchema(doc.at("traits").get<std::vector<std::string>>());
    for (const auto& p : doc.at("prompts")) {
      const auto id = p.at("prompt_id").is_string()
                          ? p.at("prompt_id").get<std::string>()
                          : p.at("prompt_id").dump();
      std::vector<PromptConfig::ValidTrait> valid;
      const auto& ranges = p.at("ranges");
      for (const auto& name : p.at("valid_traits").get<std::vector<std::string>>()) {
        const auto idx = out.schema.index_of(name);
        if (!idx) throw ConfigError("prompt " + id + ": unknown trait '" + name + "'");
        if (!ranges.contains(name)) {
          throw ConfigError("prompt " + id + ": missing range for '" + name + "'");
        }
        const auto r = ranges.at(name).get<std::vector<int>>();
        if (r.size() != 2) throw ConfigError("prompt " + id + ": range must be [l,u]");
        valid.push_back({*idx, ScoreRange{r[0], r[1]}});
      }
      std::map<std::string, std::string> descriptions;
      if (p.contains("trait_descriptions")) {
        descriptions = p.at("trait_descriptions").get<std::map<std::string, std::string>>();
      }
      out.prompts.emplace_back(id, out.schema, std::move(valid), p.value("step", 1.0),
                               p.value("prompt_text", std::string{}),
                               std::move(descriptions));
      if (std::count_if(out.prompts.begin(), out.prompts.end(),
                        [&](const PromptConfig& c) { return c.prompt_id() == id; }) > 1) {
        throw ConfigError("duplicate prompt_id '" + id + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("prompt config: ") + e.what());
  }
  if (out.prompts.empty()) throw ConfigError("prompt config lists no prompts");
  return out;
}

inline DatasetConfig load_dataset_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open prompt config '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("prompt config '" + path + "': " + e.what());
  }
  return parse_dataset_config(doc);
}

inline nlohmann::json to_json(const DatasetConfig& dataset) {
  nlohmann::json doc;
  doc["traits"] = dataset.schema.traits();
  doc["prompts"] = nlohmann::json::array();
  for (const auto& p : dataset.prompts) {
    nlohmann::json entry;
    entry["prompt_id"] = p.prompt_id();
    nlohmann::json names = nlohmann::json::array();
    nlohmann::json ranges = nlohmann::json::object();
    for (const auto& vt : p.valid_traits()) {
      const auto& name = dataset.schema.name(vt.index);
      names.push_back(name);
      ranges[name] = {vt.range.lower, vt.range.upper};
    }
    entry["valid_traits"] = names;
    entry["ranges"] = ranges;
    entry["step"] = p.score_step();
    entry["prompt_text"] = p.prompt_text();
    entry["trait_descriptions"] = p.trait_descriptions();
    doc["prompts"].push_back(entry);
  }
  return doc;
}

struct EssayRecord {
  std::string essay_id;
  std::string prompt_id;
  std::string essay_text;
  ScoreVector gold;

  bool operator==(const EssayRecord&) const = default;
};

// Corpus CSV: essay_id,prompt_id,essay_text,<trait_1>,...,<trait_K>.
inline std::vector<EssayRecord> read_corpus(std::istream& in, const DatasetConfig& dataset) {
  const auto& schema = dataset.schema;
  std::vector<csv::Row> rows;
  try {
    rows = csv::read(in);
  } catch (const IngestError& e) {
    throw IngestError(std::string("corpus: ") + e.what());
  }
  if (rows.empty()) throw IngestError("corpus: missing header");
  std::vector<std::string> expected = {"essay_id", "prompt_id", "essay_text"};
  expected.insert(expected.end(), schema.traits().begin(), schema.traits().end());
  if (rows[0] != expected) {
    throw IngestError("corpus: header must be essay_id,prompt_id,essay_text followed by the "
                      "schema traits in order");
  }
  std::vector<EssayRecord> records;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;  // blank line
    const std::string where = "corpus row " + std::to_string(r);
    if (row.size() != expected.size()) {
      throw IngestError(where + ": expected " + std::to_string(expected.size()) +
                        " fields, got " + std::to_string(row.size()));
    }
    const PromptConfig* config = dataset.find(row[1]);
    if (config == nullptr) {
      throw IngestError(where + " (essay " + row[0] + "): unknown prompt_id '" + row[1] + "'");
    }
    EssayRecord rec{row[0], row[1], row[2], ScoreVector::all_nan(schema.size())};
    for (TraitIndex t = 0; t < schema.size(); ++t) {
      const std::string& cell = row[3 + t];
      if (cell.empty() || cell == kNaNToken) continue;
      const auto v = parse_number(cell);
      if (!v) {
        throw IngestError(where + " (essay " + row[0] + "): malformed score '" + cell +
                          "' for trait '" + schema.name(t) + "'");
      }
      rec.gold[t] = *v;
    }
    try {
      config->check_scores(rec.gold, schema);
    } catch (const RangeError& e) {
      throw IngestError(where + " (essay " + row[0] + "): " + e.what());
    }
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<EssayRecord> load_corpus(const std::string& path,
                                            const DatasetConfig& dataset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open corpus '" + path + "'");
  return read_corpus(in, dataset);
}

inline void write_corpus(std::ostream& out, std::span<const EssayRecord> records,
                         const TraitSchema& schema) {
  csv::Row header = {"essay_id", "prompt_id", "essay_text"};
  header.insert(header.end(), schema.traits().begin(), schema.traits().end());
  csv::write_row(out, header);
  for (const auto& rec : records) {
    csv::Row row = {rec.essay_id, rec.prompt_id, rec.essay_text};
    for (TraitIndex t = 0; t < schema.size(); ++t) row.push_back(format_score(rec.gold[t]));
    csv::write_row(out, row);
  }
}

// Prompt text block, one description block per valid trait in schema order,
// then the essay.
inline std::string build_enhanced_prompt(const TraitSchema& schema, const PromptConfig& config,
                                         std::string_view essay_text) {
  std::string out;
  out += "Prompt:\n";
  out += config.prompt_text();
  out += "\n\nTrait descriptions:\n";
  for (const auto& vt : config.valid_traits()) {
    const auto& name = schema.name(vt.index);
    const auto it = config.trait_descriptions().find(name);
    if (it == config.trait_descriptions().end() || it->second.empty()) {
      throw ConfigError("prompt " + config.prompt_id() + ": missing description for trait '" +
                        name + "'");
    }
    out += name;
    out += ": ";
    out += it->second;
    out += '\n';
  }
  out += "\nEssay:\n";
  out += essay_text;
  out += '\n';
  return out;
}

}  // namespace tapo

#endif  // TAPO_SCHEMA_HPP_
