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

#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

using tapo::tools::RunConfig;

// Run-config flags of one subcommand. Values start at the built-in defaults
// so --help can show them; only flags given on the command line override
// the config file.
class RunOptions {
 public:
  explicit RunOptions(CLI::App* app) : app_(app) {
    app->add_option("--config", config_path_, "Run config JSON (or a run manifest)");
    bind("--prompts", d_.prompts, "Dataset config JSON", [](RunConfig& c, auto& v) { c.prompts = v; });
    bind("--corpus", d_.corpus, "Corpus CSV path, or 'synthetic'",
         [](RunConfig& c, auto& v) { c.corpus = v; });
    bind("--features", d_.features, "Features CSV for a CSV corpus (default: text features)",
         [](RunConfig& c, auto& v) { c.features = v; });
    bind("--out", d_.out, "Output directory", [](RunConfig& c, auto& v) { c.out = v; });
    bind("--seed", d_.optimizer.seed, "Root seed",
         [](RunConfig& c, auto& v) { c.optimizer.seed = v; });
    bind("--threads", d_.optimizer.threads, "Rollout threads; results do not depend on the count",
         [](RunConfig& c, auto& v) { c.optimizer.threads = v; });
    bind("--mode", mode_, "Advantage mode: tapo or grpo-shared",
         [](RunConfig& c, auto& v) { c.optimizer.mode = tapo::parse_mode(v); });
    bind("--synthetic-train", d_.synthetic_train, "Synthetic training essays",
         [](RunConfig& c, auto& v) { c.synthetic_train = v; });
    bind("--synthetic-heldout", d_.synthetic_heldout, "Synthetic held-out essays",
         [](RunConfig& c, auto& v) { c.synthetic_heldout = v; });
    bind("--trait-noise", d_.synthetic.trait_noise, "Synthetic per-trait noise scale",
         [](RunConfig& c, auto& v) { c.synthetic.trait_noise = v; });
    bind("--folds", d_.folds, "Cross-validation folds for a CSV corpus",
         [](RunConfig& c, auto& v) { c.folds = v; });
    bind("--heldout-fold", d_.heldout_fold, "Fold used as the held-out split",
         [](RunConfig& c, auto& v) { c.heldout_fold = v; });
    bind("--conditioning", d_.conditioning, "Condition each trait on the previous score",
         [](RunConfig& c, auto& v) { c.conditioning = v; });
    auto& o = d_.optimizer;
    bind("--group-size", o.group_size, "Samples per input (G)",
         [](RunConfig& c, auto& v) { c.optimizer.group_size = v; });
    bind("--epochs", o.epochs, "Training epochs", [](RunConfig& c, auto& v) { c.optimizer.epochs = v; });
    bind("--batch-size", o.batch_size, "Inputs per update",
         [](RunConfig& c, auto& v) { c.optimizer.batch_size = v; });
    bind("--learning-rate", o.learning_rate, "Gradient ascent step size",
         [](RunConfig& c, auto& v) { c.optimizer.learning_rate = v; });
    bind("--clip-ratio", o.clip_ratio, "Surrogate clip epsilon",
         [](RunConfig& c, auto& v) { c.optimizer.clip_ratio = v; });
    bind("--kl-coeff", o.kl_coeff, "KL coefficient toward the reference policy",
         [](RunConfig& c, auto& v) { c.optimizer.kl_coeff = v; });
    bind("--lambda-loc", o.credit.lambda_loc, "Local trait reward weight",
         [](RunConfig& c, auto& v) { c.optimizer.credit.lambda_loc = v; });
    bind("--clip-max", o.credit.clip_max, "Token advantage clip bound (inf disables)",
         [](RunConfig& c, auto& v) { c.optimizer.credit.clip_max = v; });
    bind("--outer-norm", outer_norm_, "Token advantage renormalization: per-position or joint",
         [](RunConfig& c, auto& v) { c.optimizer.credit.outer_norm = tapo::tools::parse_norm(v); });
    bind("--eval-interval", o.eval_interval, "Steps between held-out evaluations",
         [](RunConfig& c, auto& v) { c.optimizer.eval_interval = v; });
    bind("--inner-passes", o.inner_passes, "Optimization passes per sampled batch",
         [](RunConfig& c, auto& v) { c.optimizer.inner_passes = v; });
    bind("--fault-probability", o.fault_probability, "Probability of corrupting a sample",
         [](RunConfig& c, auto& v) { c.optimizer.fault_probability = v; });
    auto& r = o.reward;
    bind("--alpha", r.alpha, "Huber weight", [](RunConfig& c, auto& v) { c.optimizer.reward.alpha = v; });
    bind("--beta", r.beta, "Absolute error weight",
         [](RunConfig& c, auto& v) { c.optimizer.reward.beta = v; });
    bind("--delta", r.delta, "Huber threshold", [](RunConfig& c, auto& v) { c.optimizer.reward.delta = v; });
    bind("--lambda-rel", r.lambda_rel, "Relation reward weight",
         [](RunConfig& c, auto& v) { c.optimizer.reward.lambda_rel = v; });
    bind("--lambda-fmt", r.lambda_fmt, "Format reward weight",
         [](RunConfig& c, auto& v) { c.optimizer.reward.lambda_fmt = v; });
  }

  RunConfig resolve() const {
    RunConfig c = config_path_.empty()
                      ? RunConfig{}
                      : tapo::tools::run_config_from_json(tapo::tools::read_json_file(config_path_));
    for (const auto& [opt, apply] : overrides_) {
      if (opt->count() > 0) apply(c);
    }
    c.optimizer.validate();
    return c;
  }

  const RunConfig& defaults() const { return d_; }

 private:
  template <typename T, typename Fn>
  void bind(const std::string& flag, T& var, const std::string& help, Fn fn) {
    CLI::Option* opt = app_->add_option(flag, var, help)->capture_default_str();
    overrides_.emplace_back(opt, [&var, fn](RunConfig& c) { fn(c, var); });
  }

  CLI::App* app_;
  std::string config_path_;
  RunConfig d_;
  std::string mode_ = tapo::to_string(d_.optimizer.mode);
  std::string outer_norm_ = tapo::tools::norm_name(d_.optimizer.credit.outer_norm);
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> overrides_;
};

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i > 0) s += ' ';
    s += argv[i];
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  namespace tt = tapo::tools;
  CLI::App app{"Trait-aware policy optimization for multi-trait essay scoring"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tt::kToolVersion);

  std::vector<std::unique_ptr<RunOptions>> opts;
  auto with_run_options = [&](CLI::App* sub) {
    opts.push_back(std::make_unique<RunOptions>(sub));
    return opts.back().get();
  };

  auto* train = app.add_subcommand("train", "Train a policy; writes checkpoint, step reports, manifest");
  auto* train_opts = with_run_options(train);

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint; writes QWK tables");
  auto* eval_opts = with_run_options(evaluate);
  std::string eval_checkpoint;
  bool eval_all = false;
  bool eval_pooled = false;
  evaluate->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required();
  evaluate->add_flag("--all", eval_all, "Score training essays as well as the held-out split");
  evaluate->add_flag("--pooled", eval_pooled, "Pool folds before QWK instead of averaging per fold");

  auto* compare = app.add_subcommand("compare", "Paired runs of two advantage modes over seeds");
  auto* compare_opts = with_run_options(compare);
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<double> sweep;
  std::string baseline_mode = "grpo-shared";
  std::string candidate_mode = "tapo";
  compare->add_option("--seeds", seeds, "Seeds, one paired run each")->capture_default_str();
  compare->add_option("--lambda-loc-sweep", sweep,
                      "lambda_loc values for the candidate (default: the configured value)");
  compare->add_option("--baseline-mode", baseline_mode, "Baseline advantage mode")
      ->capture_default_str();
  compare->add_option("--candidate-mode", candidate_mode, "Candidate advantage mode")
      ->capture_default_str();

  auto* reward_check = app.add_subcommand(
      "reward-check", "Exhaustive reward check against a direct reference implementation");
  std::string rc_prompts = TAPO_DATA_DIR "/small_schema.json";
  tapo::RewardConfig rc;
  bool inject = false;
  reward_check->add_option("--prompts", rc_prompts, "Small dataset config (<= 3 traits, <= 5 values)")
      ->capture_default_str();
  reward_check->add_option("--alpha", rc.alpha, "Huber weight")->capture_default_str();
  reward_check->add_option("--beta", rc.beta, "Absolute error weight")->capture_default_str();
  reward_check->add_option("--delta", rc.delta, "Huber threshold")->capture_default_str();
  reward_check->add_option("--lambda-rel", rc.lambda_rel, "Relation reward weight")
      ->capture_default_str();
  reward_check->add_option("--lambda-fmt", rc.lambda_fmt, "Format reward weight")
      ->capture_default_str();
  reward_check->add_flag("--inject-mismatch", inject,
                         "Perturb the reference weights (negative control; must fail)");

  auto* credit = app.add_subcommand("credit-dump", "Token credit of one sampled group, both modes");
  auto* credit_opts = with_run_options(credit);
  std::string credit_checkpoint;
  std::string credit_essay;
  credit->add_option("--checkpoint", credit_checkpoint, "Checkpoint file (default: untrained policy)");
  credit->add_option("--essay-id", credit_essay, "Essay to sample (default: first held-out essay)");

  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic corpus and its features");
  auto* gen_opts = with_run_options(gen);
  std::size_t gen_n = 1000;
  gen->add_option("-n,--count", gen_n, "Number of essays")->capture_default_str();

  auto* folds = app.add_subcommand("make-folds", "Write a stratified fold assignment");
  auto* folds_opts = with_run_options(folds);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? tt::kExitOk : tt::kExitUsage;
  }

  const std::string command_line = join_args(argc, argv);
  try {
    if (*train) return tt::cmd_train(train_opts->resolve(), command_line);
    if (*evaluate) {
      return tt::cmd_evaluate(eval_opts->resolve(), eval_checkpoint, eval_all,
                              eval_pooled ? tapo::FoldPooling::kPooled : tapo::FoldPooling::kPerFold,
                              command_line);
    }
    if (*compare) {
      const RunConfig c = compare_opts->resolve();
      if (sweep.empty()) sweep.push_back(c.optimizer.credit.lambda_loc);
      return tt::cmd_compare(c, seeds, sweep, tapo::parse_mode(baseline_mode),
                             tapo::parse_mode(candidate_mode), command_line);
    }
    if (*reward_check) return tt::cmd_reward_check(rc_prompts, rc, inject, std::cout);
    if (*credit) {
      return tt::cmd_credit_dump(credit_opts->resolve(), credit_checkpoint, credit_essay,
                                 command_line);
    }
    if (*gen) return tt::cmd_gen_synthetic(gen_opts->resolve(), gen_n, command_line);
    if (*folds) return tt::cmd_make_folds(folds_opts->resolve(), command_line);
  } catch (const tapo::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return tt::kExitUsage;
  } catch (const tapo::IngestError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return tt::kExitUsage;
  } catch (const tapo::RangeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return tt::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return tt::kExitFailure;
  }
  return tt::kExitFailure;
}
