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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pragmachine/corpus.hpp"
#include "pragmachine/gdprag.hpp"
#include "pragmachine/lexicon.hpp"
#include "pragmachine/parallel.hpp"
#include "pragmachine/rsa.hpp"

namespace pragmachine::eval {

enum class Model { kBase, kSslAm, kSslGd, kSl };
std::string_view model_name(Model m);
// Accepts "base", "am", "gd", "sl" and the long forms "ssl-am", "ssl-gd".
std::optional<Model> parse_model(std::string_view name);
std::vector<Model> parse_model_list(std::string_view csv);

struct Artifacts {
  const lexicon::LexiconParams* ssl = nullptr;
  const lexicon::LexiconParams* sl = nullptr;
  const corpus::CostTable* costs = nullptr;
};

struct EvalConfig {
  rsa::RsaConfig am;
  gd::GdConfig gd;
  // Per-context GD seeds derive from this and the context's lexicon values.
  std::uint64_t seed = 0;
  ExecPolicy policy = ExecPolicy::kParallel;
};

// Listener and speaker a model builds for one context.
struct Agents {
  rsa::ConditionalMatrix listener;
  rsa::ConditionalMatrix speaker;
  std::vector<rsa::ObjectiveReport> trace;
};
Agents build_agents(Model model, const color::Context& ctx,
                    const Artifacts& artifacts, const EvalConfig& cfg);

struct RoundOutcome {
  Model model = Model::kBase;
  std::string game_id;
  std::size_t round_index = 0;
  color::Condition condition = color::Condition::kFar;
  corpus::SplitTag split = corpus::SplitTag::kTrain;
  bool listener_err = false;
  bool listener_match = false;
  bool speaker_match = false;
  bool listener_tie = false;
  bool speaker_tie = false;
  bool operator==(const RoundOutcome&) const = default;
};

RoundOutcome evaluate_round(Model model, const corpus::Round& round,
                            const Artifacts& artifacts, const EvalConfig& cfg);

// Empty optional fields mean "all", i.e. an overall row.
struct Bucket {
  Model model = Model::kBase;
  std::optional<color::Condition> condition;
  std::optional<corpus::SplitTag> split;
  std::size_t n_rounds = 0;
  std::size_t listener_errors = 0;
  std::size_t listener_matches = 0;
  std::size_t speaker_matches = 0;

  // Null when n_rounds is 0.
  std::optional<double> listener_error_rate() const;
  std::optional<double> listener_accuracy() const;
  std::optional<double> listener_match_rate() const;
  std::optional<double> speaker_match_rate() const;
  bool operator==(const Bucket&) const = default;
};

struct EvalReport {
  std::vector<Bucket> buckets;
  std::size_t listener_ties = 0;
  std::size_t speaker_ties = 0;

  const Bucket* find(Model model, std::optional<color::Condition> condition,
                     std::optional<corpus::SplitTag> split) const;
  bool operator==(const EvalReport&) const = default;
};

// Buckets for every model x {far, split, close, all} x {present splits, all},
// in that order. Counts are reduced in round order.
EvalReport aggregate(const std::vector<RoundOutcome>& outcomes);

struct EvalResult {
  EvalReport report;
  // Model-major, then corpus order.
  std::vector<RoundOutcome> rounds;
};

// Throws DataError("missing artifact: <model> lexicon") when a model's
// lexicon is absent.
EvalResult evaluate(const std::vector<Model>& models,
                    const std::vector<corpus::Round>& rounds,
                    const Artifacts& artifacts, const EvalConfig& cfg);

// Mean and sample standard deviation of a rate across seeds.
struct SeedStat {
  Model model = Model::kBase;
  std::optional<color::Condition> condition;
  std::size_t seeds = 0;
  double mean_error_rate = 0.0;
  double sd_error_rate = 0.0;
};
// Uses each report's all-split rows.
std::vector<SeedStat> summarize_seeds(const std::vector<EvalReport>& reports);

std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);

// Summary JSON at `summary_path`, per-round CSV
// `game_id,round_idx,condition,model,listener_err,listener_match,speaker_match`
// at `per_round_path`.
void emit_report(const EvalResult& result, const std::string& summary_path,
                 const std::string& per_round_path);
EvalReport load_report(const std::string& summary_path);
// Rounds read back from the CSV; split is not stored and comes back as train.
std::vector<RoundOutcome> load_per_round_csv(const std::string& path);

}  // namespace pragmachine::eval
