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

#ifndef TAPO_TOOLS_COMMANDS_HPP_
#define TAPO_TOOLS_COMMANDS_HPP_

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "reward_reference.hpp"
#include "run_config.hpp"
#include "tapo/credit.hpp"
#include "tapo/parser.hpp"
#include "tapo/reward.hpp"
#include "tapo/trainer.hpp"

namespace tapo::tools {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline TrainResult run_training(const RunConfig& c, const DatasetConfig& dataset,
                                const PreparedData& data,
                                const std::function<void(const StepResult&)>& on_step = {}) {
  ToyPolicy policy(dataset, data.feature_dim, c.conditioning);
  return train(TrainState::initial(std::move(policy)), data.train, data.heldout, dataset,
               c.optimizer, on_step);
}

inline std::vector<std::string> run_inputs(const RunConfig& c) {
  std::vector<std::string> in = {c.prompts};
  if (c.corpus != kSyntheticCorpus) in.push_back(c.corpus);
  if (!c.features.empty()) in.push_back(c.features);
  return in;
}

// ---- train ----

inline int cmd_train(const RunConfig& c, const std::string& command_line) {
  const auto dataset = load_dataset_config(c.prompts);
  const auto data = prepare_data(c, dataset);
  const fs::path out = c.out;
  fs::create_directories(out);
  Manifest manifest{command_line, to_json(c), c.optimizer.seed, run_inputs(c), {}};
  const fs::path rewards = out / "rewards.csv";
  auto reward_log = open_output(rewards);
  write_reward_header(reward_log);
  TrainResult result;
  try {
    result = run_training(c, dataset, data,
                          [&](const StepResult& s) { write_reward_rows(reward_log, s); });
  } catch (const TrainingAborted& e) {
    const fs::path dump = out / "abort_state.txt";
    auto f = open_output(dump);
    f << "# aborted at step " << e.state().step << ": " << e.what() << '\n';
    write_checkpoint(f, e.state().policy);
    reward_log.close();
    manifest.outputs = {dump.string(), rewards.string()};
    manifest.write((out / "manifest.json").string());
    std::cerr << "training aborted: " << e.what() << "\nstate dumped to " << dump.string()
              << '\n';
    return kExitFailure;
  }
  const fs::path ckpt = out / "checkpoint.txt";
  const fs::path steps = out / "steps.csv";
  const fs::path evals = out / "evals.csv";
  {
    auto f = open_output(ckpt);
    write_checkpoint(f, result.state.policy);
  }
  {
    auto f = open_output(steps);
    write_step_reports(f, result.steps);
  }
  {
    auto f = open_output(evals);
    write_eval_points(f, result.evals);
  }
  reward_log.close();
  manifest.outputs = {ckpt.string(), steps.string(), evals.string(), rewards.string()};
  manifest.write((out / "manifest.json").string());
  if (!result.evals.empty()) {
    const auto& first = result.evals.front();
    const auto& last = result.evals.back();
    std::cout << "mode " << to_string(c.optimizer.mode) << ", " << result.steps.size()
              << " steps; held-out mean |error| " << first.mean_abs_error << " -> "
              << last.mean_abs_error << ", trait-avg QWK " << last.trait_avg_qwk << '\n';
  }
  std::cout << "wrote " << out.string() << '\n';
  return kExitOk;
}

// ---- evaluate ----

inline int cmd_evaluate(const RunConfig& c, const std::string& checkpoint, bool all_essays,
                        FoldPooling pooling, const std::string& command_line) {
  const auto dataset = load_dataset_config(c.prompts);
  const auto data = prepare_data(c, dataset);
  std::ifstream in(checkpoint);
  if (!in) throw ConfigError("cannot open checkpoint '" + checkpoint + "'");
  const auto policy = load_checkpoint(in, dataset);
  if (policy.feature_dim() != data.feature_dim) {
    throw ConfigError("checkpoint feature_dim does not match the data");
  }
  std::vector<TrainingExample> examples = data.heldout;
  if (all_essays) examples.insert(examples.end(), data.train.begin(), data.train.end());
  if (examples.empty()) throw ConfigError("evaluate: no essays to score");
  auto records = predict(policy, examples);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto it = data.folds.find(examples[i].essay_id);
    if (it != data.folds.end()) records[i].fold = it->second;
  }
  const auto tables = aggregate(records, dataset, pooling);
  for (const auto& w : tables.warnings) std::cerr << "warning: " << w << '\n';
  const auto metrics = evaluate_policy(policy, examples, dataset);

  const fs::path out = c.out;
  fs::create_directories(out);
  const std::vector<std::pair<std::string, AggregateTables>> runs = {{"checkpoint", tables}};
  const fs::path trait_path = out / "trait_table.csv";
  const fs::path prompt_path = out / "prompt_table.csv";
  const fs::path pred_path = out / "predictions.csv";
  {
    auto f = open_output(trait_path);
    write_trait_table(f, dataset.schema, runs);
  }
  {
    auto f = open_output(prompt_path);
    write_prompt_table(f, dataset, runs);
  }
  {
    auto f = open_output(pred_path);
    std::vector<EssayRecord> scored;
    for (std::size_t i = 0; i < records.size(); ++i) {
      scored.push_back({examples[i].essay_id, records[i].prompt_id, "", records[i].pred});
    }
    write_corpus(f, scored, dataset.schema);
  }
  Manifest manifest{command_line, to_json(c), c.optimizer.seed, run_inputs(c),
                    {trait_path.string(), prompt_path.string(), pred_path.string()}};
  manifest.inputs.push_back(checkpoint);
  manifest.write((out / "manifest.json").string());
  std::cout << "essays " << examples.size() << ", mean |error| " << metrics.mean_abs_error
            << ", trait-avg QWK " << tables.trait_average << ", prompt-avg QWK "
            << tables.prompt_average << '\n';
  return kExitOk;
}

// ---- compare ----

struct CompareRow {
  double lambda_loc = 0.0;
  std::uint64_t seed = 0;
  EvalPoint baseline;
  EvalPoint candidate;
};

struct CompareSummary {
  double lambda_loc = 0.0;
  std::size_t seeds = 0;
  std::size_t candidate_wins = 0;  // seeds with candidate error <= baseline error
  double baseline_error = 0.0;
  double candidate_error = 0.0;
  double delta_error = 0.0;
  double delta_trait_qwk = 0.0;
  double delta_prompt_qwk = 0.0;
};

struct CompareReport {
  AdvantageMode baseline_mode = AdvantageMode::kGrpoShared;
  AdvantageMode candidate_mode = AdvantageMode::kTapo;
  std::vector<CompareRow> rows;
  std::vector<CompareSummary> summaries;  // one per lambda_loc
  std::vector<std::pair<std::string, AggregateTables>> tables;
};

// Both modes share every setting except the mode (and, for the candidate,
// the swept lambda_loc). Baseline runs are reused across sweep values when
// the baseline mode ignores lambda_loc.
inline CompareReport run_compare(const RunConfig& base, std::span<const std::uint64_t> seeds,
                                 std::span<const double> lambdas, AdvantageMode baseline_mode,
                                 AdvantageMode candidate_mode) {
  if (seeds.empty()) throw ConfigError("compare: at least one seed is required");
  if (lambdas.empty()) throw ConfigError("compare: at least one lambda_loc is required");
  const auto dataset = load_dataset_config(base.prompts);
  CompareReport report;
  report.baseline_mode = baseline_mode;
  report.candidate_mode = candidate_mode;

  struct Outcome {
    EvalPoint point;
    AggregateTables tables;
  };
  auto run_one = [&](const RunConfig& c, const PreparedData& data) {
    const auto result = run_training(c, dataset, data);
    const auto metrics = evaluate_policy(result.state.policy, data.heldout, dataset);
    Outcome o;
    o.point = {result.state.step, metrics.mean_abs_error, metrics.tables.trait_average,
               metrics.tables.prompt_average};
    o.tables = metrics.tables;
    return o;
  };
  auto label = [](AdvantageMode m, double lambda, std::uint64_t seed, bool uses_lambda) {
    std::string s = to_string(m);
    if (uses_lambda) s += "/lambda_loc=" + format_score(lambda);
    return s + "/seed=" + std::to_string(seed);
  };

  const bool baseline_uses_lambda = baseline_mode == AdvantageMode::kTapo;
  const bool candidate_uses_lambda = candidate_mode == AdvantageMode::kTapo;
  std::vector<std::optional<Outcome>> cached(seeds.size());
  for (const double lambda : lambdas) {
    CompareSummary sum;
    sum.lambda_loc = lambda;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      RunConfig c = base;
      c.optimizer.seed = seeds[s];
      c.optimizer.credit.lambda_loc = lambda;
      const auto data = prepare_data(c, dataset);
      if (data.heldout.empty()) throw ConfigError("compare: held-out split is empty");
      c.optimizer.mode = baseline_mode;
      if (baseline_uses_lambda || !cached[s]) {
        cached[s] = run_one(c, data);
        report.tables.emplace_back(label(baseline_mode, lambda, seeds[s], baseline_uses_lambda),
                                   cached[s]->tables);
      }
      c.optimizer.mode = candidate_mode;
      const Outcome cand = run_one(c, data);
      report.tables.emplace_back(label(candidate_mode, lambda, seeds[s], candidate_uses_lambda),
                                 cand.tables);
      CompareRow row{lambda, seeds[s], cached[s]->point, cand.point};
      sum.baseline_error += row.baseline.mean_abs_error;
      sum.candidate_error += row.candidate.mean_abs_error;
      sum.delta_trait_qwk += row.candidate.trait_avg_qwk - row.baseline.trait_avg_qwk;
      sum.delta_prompt_qwk += row.candidate.prompt_avg_qwk - row.baseline.prompt_avg_qwk;
      if (row.candidate.mean_abs_error <= row.baseline.mean_abs_error) ++sum.candidate_wins;
      report.rows.push_back(row);
    }
    const double n = static_cast<double>(seeds.size());
    sum.seeds = seeds.size();
    sum.baseline_error /= n;
    sum.candidate_error /= n;
    sum.delta_error = sum.candidate_error - sum.baseline_error;
    sum.delta_trait_qwk /= n;
    sum.delta_prompt_qwk /= n;
    report.summaries.push_back(sum);
  }
  return report;
}

inline void write_compare_rows(std::ostream& out, const CompareReport& r) {
  out << "lambda_loc,seed,baseline_mean_abs_error,candidate_mean_abs_error,delta_mean_abs_error,"
         "baseline_trait_qwk,candidate_trait_qwk,delta_trait_qwk,baseline_prompt_qwk,"
         "candidate_prompt_qwk,delta_prompt_qwk\n";
  for (const auto& row : r.rows) {
    const auto& b = row.baseline;
    const auto& c = row.candidate;
    out << format_score(row.lambda_loc) << ',' << row.seed << ',' << fmt17(b.mean_abs_error) << ','
        << fmt17(c.mean_abs_error) << ',' << fmt17(c.mean_abs_error - b.mean_abs_error) << ','
        << fmt17(b.trait_avg_qwk) << ',' << fmt17(c.trait_avg_qwk) << ','
        << fmt17(c.trait_avg_qwk - b.trait_avg_qwk) << ',' << fmt17(b.prompt_avg_qwk) << ','
        << fmt17(c.prompt_avg_qwk) << ',' << fmt17(c.prompt_avg_qwk - b.prompt_avg_qwk) << '\n';
  }
}

inline void write_compare_summary(std::ostream& out, const CompareReport& r) {
  out << "lambda_loc,seeds,candidate_wins,mean_baseline_abs_error,mean_candidate_abs_error,"
         "mean_delta_abs_error,mean_delta_trait_qwk,mean_delta_prompt_qwk\n";
  for (const auto& s : r.summaries) {
    out << format_score(s.lambda_loc) << ',' << s.seeds << ',' << s.candidate_wins << ','
        << fmt17(s.baseline_error) << ',' << fmt17(s.candidate_error) << ','
        << fmt17(s.delta_error) << ',' << fmt17(s.delta_trait_qwk) << ','
        << fmt17(s.delta_prompt_qwk) << '\n';
  }
}

inline int cmd_compare(const RunConfig& c, std::span<const std::uint64_t> seeds,
                       std::span<const double> lambdas, AdvantageMode baseline_mode,
                       AdvantageMode candidate_mode, const std::string& command_line) {
  const auto report = run_compare(c, seeds, lambdas, baseline_mode, candidate_mode);
  const auto dataset = load_dataset_config(c.prompts);
  const fs::path out = c.out;
  fs::create_directories(out);
  const fs::path rows = out / "compare_seeds.csv";
  const fs::path summary = out / "compare_summary.csv";
  const fs::path traits = out / "trait_table.csv";
  const fs::path prompts = out / "prompt_table.csv";
  {
    auto f = open_output(rows);
    write_compare_rows(f, report);
  }
  {
    auto f = open_output(summary);
    write_compare_summary(f, report);
  }
  {
    auto f = open_output(traits);
    write_trait_table(f, dataset.schema, report.tables);
  }
  {
    auto f = open_output(prompts);
    write_prompt_table(f, dataset, report.tables);
  }
  auto cfg = to_json(c);
  cfg["compare"] = {{"seeds", std::vector<std::uint64_t>(seeds.begin(), seeds.end())},
                    {"lambda_loc_sweep", std::vector<double>(lambdas.begin(), lambdas.end())},
                    {"baseline_mode", to_string(baseline_mode)},
                    {"candidate_mode", to_string(candidate_mode)}};
  Manifest manifest{command_line, cfg, c.optimizer.seed, run_inputs(c),
                    {rows.string(), summary.string(), traits.string(), prompts.string()}};
  manifest.write((out / "manifest.json").string());
  write_compare_summary(std::cout, report);
  return kExitOk;
}

// ---- reward-check ----

struct RewardCheckResult {
  std::size_t cases = 0;
  double max_discrepancy = 0.0;
  std::size_t empty_relation_cases = 0;  // cases whose gold scores are all equal
  std::size_t empty_relation_violations = 0;
};

namespace detail {

// Calls fn(values) for every combination of per-slot candidate values.
template <typename Fn>
void for_each_product(const std::vector<std::vector<double>>& choices, Fn&& fn) {
  std::vector<std::size_t> idx(choices.size(), 0);
  std::vector<double> cur(choices.size());
  while (true) {
    for (std::size_t i = 0; i < choices.size(); ++i) cur[i] = choices[i][idx[i]];
    fn(cur);
    std::size_t i = 0;
    for (; i < choices.size(); ++i) {
      if (++idx[i] < choices[i].size()) break;
      idx[i] = 0;
    }
    if (i == choices.size()) return;
  }
}

}  // namespace detail

// For every prompt, every on-grid gold vector is paired with every
// prediction vector drawn from {grid values, upper + 1, NaN} per valid
// trait. Each pair is rendered three ways: canonical, with the last pair
// dropped, and (when the prompt has inapplicable traits) with a number on an
// inapplicable trait. The token pipeline is compared against the direct
// reference on all four reward terms.
inline RewardCheckResult reward_check(const DatasetConfig& dataset, const RewardConfig& rc,
                                      const reference::Weights& ref_weights) {
  const auto& schema = dataset.schema;
  RewardCheckResult res;
  for (const auto& config : dataset.prompts) {
    const auto& valid = config.valid_traits();
    std::vector<std::vector<double>> gold_choices;
    std::vector<std::vector<double>> pred_choices;
    for (const auto& vt : valid) {
      std::vector<double> grid;
      for (std::size_t k = 0; k < config.num_scores(vt.index); ++k) {
        grid.push_back(config.score_at(vt.index, k));
      }
      gold_choices.push_back(grid);
      grid.push_back(vt.range.upper + 1.0);
      grid.push_back(kNaN);
      pred_choices.push_back(grid);
    }
    const bool has_invalid = valid.size() < schema.size();
    detail::for_each_product(gold_choices, [&](const std::vector<double>& gv) {
      ScoreVector gold = ScoreVector::all_nan(schema.size());
      for (std::size_t j = 0; j < valid.size(); ++j) gold[valid[j].index] = gv[j];
      const bool gold_all_equal = std::all_of(valid.begin(), valid.end(), [&](const auto& vt) {
        return config.normalize(vt.index, gold[vt.index]) ==
               config.normalize(valid[0].index, gold[valid[0].index]);
      });
      detail::for_each_product(pred_choices, [&](const std::vector<double>& pv) {
        ScoreVector pred = ScoreVector::all_nan(schema.size());
        for (std::size_t j = 0; j < valid.size(); ++j) pred[valid[j].index] = pv[j];
        const auto canonical = serialize_tokens(pred, schema);
        const int variants = schema.size() < 2 ? 1 : has_invalid ? 3 : 2;
        for (int variant = 0; variant < variants; ++variant) {
          auto tokens = canonical;
          std::vector<reference::TraitCase> cases;
          for (std::size_t j = 0; j < valid.size(); ++j) {
            const auto r = valid[j].range;
            cases.push_back({r.lower, r.upper, config.score_step(), gv[j], pv[j]});
          }
          bool structure_ok = true;
          if (variant == 1) {
            tokens.resize(tokens.size() - 4);  // drop the final ", TRAIT : VALUE"
            structure_ok = false;
            const TraitIndex last = static_cast<TraitIndex>(schema.size() - 1);
            if (config.is_valid(last)) cases.back().pred = kNaN;
          } else if (variant == 2) {
            for (TraitIndex t = 0; t < schema.size(); ++t) {
              if (!config.is_valid(t)) {
                tokens[4 * t + 2] = format_score(config.score_at(valid[0].index, 0));
                break;
              }
            }
            structure_ok = false;
          }
          const auto parsed = parse_tokens(tokens, schema, config);
          const auto got = sample_reward(parsed, gold, config, rc);
          const auto want = reference::direct_reward(cases, structure_ok, ref_weights);
          const double d = std::max({std::abs(got.global - want.global),
                                     std::abs(got.relation - want.relation),
                                     std::abs(got.format - want.format),
                                     std::abs(got.sample - want.sample)});
          res.max_discrepancy = std::max(res.max_discrepancy, std::isnan(d) ? 1e300 : d);
          ++res.cases;
          if (gold_all_equal) {
            ++res.empty_relation_cases;
            if (got.relation != 0.0) ++res.empty_relation_violations;
          }
        }
      });
    });
  }
  return res;
}

inline constexpr double kRewardCheckTolerance = 1e-12;

inline int cmd_reward_check(const std::string& prompts, const RewardConfig& rc,
                            bool inject_mismatch, std::ostream& out) {
  const auto dataset = load_dataset_config(prompts);
  if (dataset.schema.size() > 3) throw ConfigError("reward-check: schema has more than 3 traits");
  for (const auto& p : dataset.prompts) {
    for (const auto& vt : p.valid_traits()) {
      if (p.num_scores(vt.index) > 5) {
        throw ConfigError("reward-check: prompt " + p.prompt_id() + " has a trait with more "
                          "than 5 score values");
      }
    }
  }
  rc.validate();
  reference::Weights w{rc.alpha, rc.beta, rc.delta, rc.lambda_rel, rc.lambda_fmt};
  if (inject_mismatch) w.alpha += 1e-3;
  const auto res = reward_check(dataset, rc, w);
  out << "cases " << res.cases << '\n'
      << "max_abs_discrepancy " << fmt17(res.max_discrepancy) << '\n'
      << "all_equal_gold_cases " << res.empty_relation_cases << ", nonzero relation "
      << res.empty_relation_violations << '\n';
  const bool ok = res.max_discrepancy <= kRewardCheckTolerance &&
                  res.empty_relation_violations == 0;
  out << (ok ? "OK" : "MISMATCH") << '\n';
  return ok ? kExitOk : kExitFailure;
}

// ---- credit-dump ----

struct CreditDump {
  GroupBatch batch;
  TokenAdvantages tapo;
  TokenAdvantages shared;
};

inline CreditDump credit_dump(const ToyPolicy& policy, const TrainingExample& example,
                              const OptimizerConfig& cfg, std::uint64_t seed) {
  CreditDump d;
  d.batch = sample_group(policy, example, cfg, seed);
  OptimizerConfig tapo = cfg;
  tapo.mode = AdvantageMode::kTapo;
  d.tapo = group_advantages(d.batch, *example.config, tapo);
  d.shared = shared_advantages(d.batch);
  return d;
}

inline int cmd_credit_dump(const RunConfig& c, const std::string& checkpoint,
                           const std::string& essay_id, const std::string& command_line) {
  const auto dataset = load_dataset_config(c.prompts);
  const auto data = prepare_data(c, dataset);
  ToyPolicy policy(dataset, data.feature_dim, c.conditioning);
  if (!checkpoint.empty()) {
    std::ifstream in(checkpoint);
    if (!in) throw ConfigError("cannot open checkpoint '" + checkpoint + "'");
    policy = load_checkpoint(in, dataset);
    if (policy.feature_dim() != data.feature_dim) {
      throw ConfigError("checkpoint feature_dim does not match the data");
    }
  }
  const TrainingExample* ex = nullptr;
  for (const auto* split : {&data.heldout, &data.train}) {
    for (const auto& e : *split) {
      if (!ex && (essay_id.empty() || e.essay_id == essay_id)) ex = &e;
    }
  }
  if (!ex) throw ConfigError("credit-dump: essay '" + essay_id + "' not found");
  const std::uint64_t seed = derive_seed(c.optimizer.seed, 0xC4ED);
  const auto d = credit_dump(policy, *ex, c.optimizer, seed);

  const fs::path out = c.out;
  fs::create_directories(out);
  const fs::path tapo_path = out / "credit_tapo.csv";
  const fs::path grpo_path = out / "credit_grpo-shared.csv";
  {
    auto f = open_output(tapo_path);
    write_credit_dump_header(f);
    write_credit_dump_rows(f, d.batch, d.tapo, dataset.schema);
  }
  {
    auto f = open_output(grpo_path);
    write_credit_dump_header(f);
    write_credit_dump_rows(f, d.batch, d.shared, dataset.schema);
  }
  Manifest manifest{command_line, to_json(c), c.optimizer.seed, run_inputs(c),
                    {tapo_path.string(), grpo_path.string()}};
  if (!checkpoint.empty()) manifest.inputs.push_back(checkpoint);
  manifest.write((out / "manifest.json").string());
  std::cout << "essay " << ex->essay_id << ", group of " << d.batch.group_size() << "; wrote "
            << tapo_path.string() << " and " << grpo_path.string() << '\n';
  return kExitOk;
}

// ---- gen-synthetic / make-folds ----

inline int cmd_gen_synthetic(const RunConfig& c, std::size_t n, const std::string& command_line) {
  const auto dataset = load_dataset_config(c.prompts);
  const auto syn = generate_synthetic(c.synthetic, dataset, n, synthetic_data_seed(c.optimizer.seed));
  const fs::path out = c.out;
  fs::create_directories(out);
  const fs::path corpus = out / "corpus.csv";
  const fs::path features = out / "features.csv";
  {
    auto f = open_output(corpus);
    write_corpus(f, syn.records, dataset.schema);
  }
  {
    auto f = open_output(features);
    write_features(f, syn.records, syn.features);
  }
  auto cfg = to_json(c);
  cfg["n"] = n;
  Manifest manifest{command_line, cfg, c.optimizer.seed, {c.prompts},
                    {corpus.string(), features.string()}};
  manifest.write((out / "manifest.json").string());
  std::cout << "wrote " << n << " essays to " << corpus.string() << '\n';
  return kExitOk;
}

inline int cmd_make_folds(const RunConfig& c, const std::string& command_line) {
  if (c.corpus.empty() || c.corpus == kSyntheticCorpus) {
    throw ConfigError("make-folds: 'corpus' must name a CSV file");
  }
  const auto dataset = load_dataset_config(c.prompts);
  const auto records = load_corpus(c.corpus, dataset);
  const auto plan = make_folds(records, c.folds, c.optimizer.seed);
  const fs::path out = c.out;
  fs::create_directories(out);
  const fs::path folds = out / "folds.csv";
  {
    auto f = open_output(folds);
    write_folds(f, records, plan);
  }
  Manifest manifest{command_line, to_json(c), c.optimizer.seed, run_inputs(c), {folds.string()}};
  manifest.write((out / "manifest.json").string());
  std::cout << "wrote " << folds.string() << '\n';
  return kExitOk;
}

}  // namespace tapo::tools

#endif  // TAPO_TOOLS_COMMANDS_HPP_
