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

#ifndef TAPO_EVAL_HPP_
#define TAPO_EVAL_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tapo/csv.hpp"
#include "tapo/schema.hpp"

namespace tapo {

struct QwkResult {
  double value = 0.0;
  bool degenerate = false;  // expected-disagreement denominator was zero
};

// Quadratic weighted kappa over categories 0..num_categories-1:
//   1 - sum(w O) / sum(w E),  w_ij = (i-j)^2 / (N-1)^2,
// with E the outer product of the marginals scaled to the same total. Both
// sums are integers after scaling by (N-1)^2 and the total, so they are
// accumulated exactly and divided once.
inline QwkResult qwk_detail(std::span<const int> gold, std::span<const int> pred,
                            int num_categories) {
  require(gold.size() == pred.size(), "qwk: length mismatch");
  require(!gold.empty(), "qwk: empty input");
  require(num_categories >= 1, "qwk: need at least one category");
  std::int64_t observed = 0;  // sum_k (g_k - p_k)^2
  std::int64_t sum_g = 0, sum_p = 0, sq_g = 0, sq_p = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    require(gold[i] >= 0 && gold[i] < num_categories && pred[i] >= 0 &&
                pred[i] < num_categories,
            "qwk: score index outside [0, N-1]");
    const std::int64_t g = gold[i], p = pred[i];
    observed += (g - p) * (g - p);
    sum_g += g;
    sum_p += p;
    sq_g += g * g;
    sq_p += p * p;
  }
  const auto n = static_cast<std::int64_t>(gold.size());
  // sum_{k,l} (g_k - p_l)^2 = total * sum(w E) * (N-1)^2
  const std::int64_t expected = n * sq_g + n * sq_p - 2 * sum_g * sum_p;
  if (expected == 0) {
    const bool identical = std::equal(gold.begin(), gold.end(), pred.begin());
    return {identical ? 1.0 : 0.0, true};
  }
  return {1.0 - static_cast<double>(n * observed) / static_cast<double>(expected), false};
}

inline double qwk(std::span<const int> gold, std::span<const int> pred, int num_categories) {
  return qwk_detail(gold, pred, num_categories).value;
}

// One test essay with its gold and predicted score vectors.
struct ScoredRecord {
  std::string prompt_id;
  std::size_t fold = 0;
  ScoreVector gold;
  ScoreVector pred;
};

enum class FoldPooling {
  kPerFold,  // QWK per fold, averaged over folds
  kPooled,   // QWK over all folds' predictions at once
};

struct AggregateTables {
  // Cell QWK keyed by (prompt_id, trait).
  std::map<std::pair<std::string, TraitIndex>, double> cells;
  std::vector<std::pair<TraitIndex, double>> trait_wise;      // schema order
  std::vector<std::pair<std::string, double>> prompt_wise;     // config order
  double trait_average = 0.0;
  double prompt_average = 0.0;
  std::vector<std::string> warnings;
};

inline AggregateTables aggregate(std::span<const ScoredRecord> records,
                                 const DatasetConfig& dataset,
                                 FoldPooling pooling = FoldPooling::kPerFold) {
  const auto& schema = dataset.schema;
  AggregateTables out;
  // (prompt, trait) -> fold -> (gold indices, pred indices)
  std::map<std::pair<std::string, TraitIndex>,
           std::map<std::size_t, std::pair<std::vector<int>, std::vector<int>>>>
      buckets;
  for (const auto& rec : records) {
    const auto& config = dataset.at(rec.prompt_id);
    const std::size_t fold = pooling == FoldPooling::kPooled ? 0 : rec.fold;
    for (const auto& vt : config.valid_traits()) {
      const auto g = config.score_index(vt.index, rec.gold[vt.index]);
      const auto p = config.score_index(vt.index, rec.pred[vt.index]);
      require(g.has_value(), "aggregate: gold score off the grid for prompt " + rec.prompt_id);
      require(p.has_value(), "aggregate: predicted score off the grid for prompt " +
                                 rec.prompt_id + ", trait " + schema.name(vt.index));
      auto& bucket = buckets[{rec.prompt_id, vt.index}][fold];
      bucket.first.push_back(static_cast<int>(*g));
      bucket.second.push_back(static_cast<int>(*p));
    }
  }
  for (const auto& [key, folds] : buckets) {
    const auto& config = dataset.at(key.first);
    const int n = static_cast<int>(config.num_scores(key.second));
    double sum = 0.0;
    for (const auto& [fold, gp] : folds) {
      const auto r = qwk_detail(gp.first, gp.second, n);
      if (r.degenerate) {
        out.warnings.push_back("constant gold and prediction in prompt " + key.first +
                               ", trait " + schema.name(key.second) + ", fold " +
                               std::to_string(fold));
      }
      sum += r.value;
    }
    out.cells[key] = sum / static_cast<double>(folds.size());
  }

  double trait_sum = 0.0;
  for (TraitIndex t = 0; t < schema.size(); ++t) {
    double s = 0.0;
    std::size_t count = 0;
    for (const auto& [key, v] : out.cells) {
      if (key.second == t) {
        s += v;
        ++count;
      }
    }
    if (count == 0) {
      out.warnings.push_back("trait " + schema.name(t) + " has no annotated prompt; omitted");
      continue;
    }
    out.trait_wise.emplace_back(t, s / static_cast<double>(count));
    trait_sum += out.trait_wise.back().second;
  }
  if (!out.trait_wise.empty()) {
    out.trait_average = trait_sum / static_cast<double>(out.trait_wise.size());
  }

  double prompt_sum = 0.0;
  for (const auto& config : dataset.prompts) {
    double s = 0.0;
    std::size_t count = 0;
    for (const auto& vt : config.valid_traits()) {
      const auto it = out.cells.find({config.prompt_id(), vt.index});
      if (it == out.cells.end()) continue;
      s += it->second;
      ++count;
    }
    if (count == 0) continue;
    out.prompt_wise.emplace_back(config.prompt_id(), s / static_cast<double>(count));
    prompt_sum += out.prompt_wise.back().second;
  }
  if (!out.prompt_wise.empty()) {
    out.prompt_average = prompt_sum / static_cast<double>(out.prompt_wise.size());
  }
  return out;
}

// Rows = runs, columns = traits + Avg. Traits omitted from a run are blank.
inline void write_trait_table(
    std::ostream& out, const TraitSchema& schema,
    std::span<const std::pair<std::string, AggregateTables>> runs) {
  csv::Row header = {"run"};
  header.insert(header.end(), schema.traits().begin(), schema.traits().end());
  header.emplace_back("Avg");
  csv::write_row(out, header);
  for (const auto& [name, tables] : runs) {
    csv::Row row(schema.size() + 2);
    row[0] = name;
    for (const auto& [t, v] : tables.trait_wise) row[1 + t] = format_score(v);
    row.back() = format_score(tables.trait_average);
    csv::write_row(out, row);
  }
}

// Rows = runs, columns = prompts + Avg.
inline void write_prompt_table(
    std::ostream& out, const DatasetConfig& dataset,
    std::span<const std::pair<std::string, AggregateTables>> runs) {
  csv::Row header = {"run"};
  for (const auto& p : dataset.prompts) header.push_back(p.prompt_id());
  header.emplace_back("Avg");
  csv::write_row(out, header);
  for (const auto& [name, tables] : runs) {
    csv::Row row(dataset.prompts.size() + 2);
    row[0] = name;
    for (const auto& [id, v] : tables.prompt_wise) {
      for (std::size_t p = 0; p < dataset.prompts.size(); ++p) {
        if (dataset.prompts[p].prompt_id() == id) row[1 + p] = format_score(v);
      }
    }
    row.back() = format_score(tables.prompt_average);
    csv::write_row(out, row);
  }
}

struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> assignments;  // essay_id -> fold

  std::size_t fold_of(const std::string& essay_id) const {
    const auto it = assignments.find(essay_id);
    require(it != assignments.end(), "fold plan has no essay '" + essay_id + "'");
    return it->second;
  }
};

// Stratified by prompt: each prompt's essays are shuffled and dealt to folds
// round-robin, continuing the deal across prompts, so per-prompt fold sizes
// differ by at most one.
inline FoldPlan make_folds(std::span<const EssayRecord> corpus, std::size_t k,
                           std::uint64_t seed) {
  if (corpus.empty()) throw ConfigError("make_folds: empty corpus");
  if (k == 0) throw ConfigError("make_folds: k must be positive");
  std::map<std::string, std::vector<std::string>> by_prompt;
  std::vector<std::string> prompt_order;
  for (const auto& rec : corpus) {
    auto [it, inserted] = by_prompt.try_emplace(rec.prompt_id);
    if (inserted) prompt_order.push_back(rec.prompt_id);
    it->second.push_back(rec.essay_id);
  }
  FoldPlan plan{k, seed, {}};
  std::mt19937_64 rng(seed);
  std::size_t next = 0;
  for (const auto& prompt : prompt_order) {
    auto& ids = by_prompt[prompt];
    if (k > ids.size()) {
      throw ConfigError("make_folds: k=" + std::to_string(k) + " exceeds the " +
                        std::to_string(ids.size()) + " essays of prompt " + prompt);
    }
    for (std::size_t i = ids.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng() % i);
      std::swap(ids[i - 1], ids[j]);
    }
    for (const auto& id : ids) {
      if (!plan.assignments.emplace(id, next % k).second) {
        throw ConfigError("make_folds: duplicate essay_id '" + id + "'");
      }
      ++next;
    }
  }
  return plan;
}

inline void write_folds(std::ostream& out, std::span<const EssayRecord> corpus,
                        const FoldPlan& plan) {
  csv::write_row(out, {"essay_id", "fold"});
  for (const auto& rec : corpus) {
    csv::write_row(out, {rec.essay_id, std::to_string(plan.fold_of(rec.essay_id))});
  }
}

}  // namespace tapo

#endif  // TAPO_EVAL_HPP_
