// Copyright 2026 The Pragmachine Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pragmachine/color.hpp"
#include "pragmachine/matrix.hpp"
#include "pragmachine/parallel.hpp"
#include "pragmachine/vocab.hpp"

namespace pragmachine::corpus {

enum class SplitTag { kTrain, kVal, kTest };
std::string_view split_name(SplitTag s);
std::optional<SplitTag> parse_split(std::string_view name);

// One game round (C, m*, u, m-hat*).
struct Round {
  color::Context context;
  std::size_t target_index = 0;
  std::size_t utterance_id = 0;
  std::size_t listener_choice = 0;
  // Condition used for reporting: the ingested label when present,
  // otherwise the computed one.
  color::Condition condition = color::Condition::kFar;
  color::Condition computed_condition = color::Condition::kFar;
  std::string game_id;
  std::size_t round_index = 0;
  SplitTag split = SplitTag::kTrain;

  bool operator==(const Round&) const = default;
};

struct LoadStats {
  std::size_t records = 0;
  std::size_t dropped_out_of_vocabulary = 0;
  bool had_split_tags = false;
};

// JSON Lines, one record per line:
//   {"game_id": str, "colors": [c1, c2, c3], "target": int,
//    "utterance": str, "choice": int, "split": "train|val|test"?,
//    "condition": "far|split|close"?, "round_index": int?}
// Colors are "#rrggbb", [r, g, b], or {"luv": [l, u, v]}. Utterances are
// normalized (including `variants`); rounds whose utterance is outside the
// vocabulary are dropped and counted.
std::vector<Round> load_corpus(const std::string& path, const Vocabulary& vocab,
                               double threshold = color::kDefaultThreshold,
                               LoadStats* stats = nullptr,
                               const VariantMap& variants = {});
// Colors written as {"luv": [...]} so the file reloads bit-exactly.
void save_corpus(const std::vector<Round>& rounds, const Vocabulary& vocab,
                 const std::string& path);
std::string round_to_json_line(const Round& r, const Vocabulary& vocab);

// Assigns split tags by game: games (in first-appearance order) are
// shuffled with `seed` and cut by largest-remainder counts. Ratios must be
// nonnegative and sum to 1. Throws UsageError if there are fewer games than
// splits with positive ratio.
std::vector<Round> split_corpus(std::vector<Round> rounds,
                                const std::array<double, 3>& ratios,
                                std::uint64_t seed);

std::vector<Round> filter_split(const std::vector<Round>& rounds, SplitTag s);

// Ground-truth prototype of a vocabulary term in the synthetic generator.
struct Prototype {
  std::string text;
  color::ColorLuv center;
  double scale = 30.0;
};

// Named color terms with prototypes computed from their standard RGB values,
// in descending assumed frequency.
struct NamedColorTerm {
  std::string_view text;
  std::string_view hex;
  double scale;
};
std::span<const NamedColorTerm> default_color_terms();
std::vector<Prototype> default_prototypes();
// Zipf log-frequencies over the default terms: log_freq(rank r) = -s log(r+1).
Vocabulary default_vocabulary(double zipf_exponent = 1.0);

struct SyntheticConfig {
  std::size_t n_games = 500;
  std::size_t rounds_per_game = 40;
  double speaker_alpha = 3.0;
  double noise_eps = 0.05;
  double threshold = color::kDefaultThreshold;
  // Ground-truth lexicon values are floored at this value.
  double lexicon_floor = 1e-3;
  std::uint64_t seed = 0;
  int max_tries = 10000;
};

// L-hat(u, m) = max(exp(-d(m, proto(u))^2 / (2 scale(u)^2)), floor);
// meaning-major (|C| x |U|).
Matrix ground_truth_lexicon(const color::Context& ctx,
                            const std::vector<Prototype>& prototypes,
                            double floor);

// Synthetic reference games. Per round: a condition uniform over the three,
// a uniform target slot, a sampled context; the simulated speaker is the AM
// s1 at speaker_alpha over L-hat (replaced by a uniform utterance with
// probability noise_eps); the simulated listener picks argmax l1(.|u).
// Each game draws from its own stream derived from (seed, game index), so
// the kParallel path is bit-identical to kSerial.
std::vector<Round> generate_synthetic(const SyntheticConfig& cfg,
                                      const Vocabulary& vocab,
                                      const std::vector<Prototype>& prototypes,
                                      const CostTable& costs,
                                      ExecPolicy policy = ExecPolicy::kParallel);

}  // namespace pragmachine::corpus
