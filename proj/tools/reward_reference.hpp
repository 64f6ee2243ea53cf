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

#ifndef TAPO_TOOLS_REWARD_REFERENCE_HPP_
#define TAPO_TOOLS_REWARD_REFERENCE_HPP_

// Direct, self-contained reward evaluation used as the brute-force reference
// for the library's parser + reward pipeline. Works on plain per-trait
// arrays of the valid traits only and shares no code with tapo/reward.hpp.

#include <cmath>
#include <vector>

namespace tapo::reference {

struct Weights {
  double alpha = 0.3;
  double beta = 0.7;
  double delta = 0.1;
  double lambda_rel = 0.2;
  double lambda_fmt = 0.1;
};

struct Terms {
  double global = 0.0;
  double relation = 0.0;
  double format = 0.0;
  double sample = 0.0;
};

// One valid trait: its integer range and step, the gold score, and the
// predicted value (NaN when the prediction is missing).
struct TraitCase {
  int lower = 0;
  int upper = 0;
  double step = 1.0;
  double gold = 0.0;
  double pred = 0.0;
};

inline bool on_grid(const TraitCase& c) {
  if (std::isnan(c.pred) || c.pred < c.lower || c.pred > c.upper) return false;
  const double k = (c.pred - c.lower) / c.step;
  return std::abs(k - std::round(k)) <= 1e-9;
}

inline double piecewise_huber(double e, double d) {
  const double a = e < 0 ? -e : e;
  return a <= d ? 0.5 * a * a : d * (a - 0.5 * d);
}

// `structure_ok`: every trait present once in order and inapplicable traits
// marked NaN. Validity additionally needs every valid prediction on grid.
inline Terms direct_reward(const std::vector<TraitCase>& traits, bool structure_ok,
                           const Weights& w) {
  Terms t;
  const std::size_t n = traits.size();
  std::vector<double> g(n);
  std::vector<double> p(n);
  std::vector<bool> ok(n);
  bool all_ok = structure_ok;
  double penalty = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto& c = traits[j];
    const double width = static_cast<double>(c.upper - c.lower);
    g[j] = (c.gold - c.lower) / width;
    ok[j] = on_grid(c);
    all_ok = all_ok && ok[j];
    double e = 1.0;
    if (ok[j]) {
      p[j] = (c.pred - c.lower) / width;
      e = std::abs(p[j] - g[j]);
    }
    penalty += w.alpha * piecewise_huber(e, w.delta) + w.beta * e;
  }
  t.global = -penalty / static_cast<double>(n);

  double hinge = 0.0;
  int pairs = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (!(g[a] != g[b]) || !ok[a] || !ok[b]) continue;
      const double m = g[a] > g[b] ? 1.0 : -1.0;
      const double v = -m * (p[a] - p[b]);
      hinge += v > 0 ? v : 0.0;
      ++pairs;
    }
  }
  t.relation = pairs == 0 ? 0.0 : -hinge / pairs;
  t.format = all_ok ? 0.0 : -1.0;
  t.sample = t.global + w.lambda_rel * t.relation + w.lambda_fmt * t.format;
  return t;
}

}  // namespace tapo::reference

#endif  // TAPO_TOOLS_REWARD_REFERENCE_HPP_
