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

#ifndef TAPO_TESTS_FIXTURES_HPP_
#define TAPO_TESTS_FIXTURES_HPP_

#include <random>
#include <string>

#include "tapo/schema.hpp"

namespace tapo::testing {

inline const DatasetConfig& asap() {
  static const DatasetConfig d = load_dataset_config(TAPO_DATA_DIR "/asap_prompts.json");
  return d;
}

inline const DatasetConfig& small() {
  static const DatasetConfig d = load_dataset_config(TAPO_DATA_DIR "/small_schema.json");
  return d;
}

inline const DatasetConfig& feedback() {
  static const DatasetConfig d = load_dataset_config(TAPO_DATA_DIR "/feedback_prompts.json");
  return d;
}

// Uniform on-grid gold vector for `config`.
inline ScoreVector random_scores(const PromptConfig& config, std::size_t schema_size,
                                 std::mt19937_64& rng) {
  ScoreVector v = ScoreVector::all_nan(schema_size);
  for (const auto& vt : config.valid_traits()) {
    std::uniform_int_distribution<std::size_t> pick(0, config.num_scores(vt.index) - 1);
    v[vt.index] = config.score_at(vt.index, pick(rng));
  }
  return v;
}

}  // namespace tapo::testing

#endif  // TAPO_TESTS_FIXTURES_HPP_
