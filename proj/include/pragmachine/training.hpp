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
#include "pragmachine/lexicon.hpp"

namespace pragmachine::training {

enum class Optimizer { kPlainGd, kAdaptiveMoments };
std::string_view optimizer_name(Optimizer o);
std::optional<Optimizer> parse_optimizer(std::string_view name);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 64;
  // Zero epochs returns the initial parameters untouched.
  int epochs = 50;
  int patience = 5;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::kAdaptiveMoments;
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_ll = 0.0;
  double val_ll = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainResult {
  lexicon::LexiconParams params;
  // Row 0 is the initial parameters; row k is after epoch k.
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

// log P_dec(u* | m*) with P_dec(u|m) ∝ L(u,m) exp(-kappa(u)) over the whole
// vocabulary. Accumulates d/dtheta into `grad` when given.
double decontextualized_log_lik(const lexicon::LexiconParams& p,
                                const corpus::Round& r,
                                std::span<const double> kappa,
                                lexicon::LexiconParams* grad = nullptr);
// log l1(m* | u*, C) through l0 -> s1 -> l1 at `alpha`, uniform prior.
double supervised_log_lik(const lexicon::LexiconParams& p,
                          const corpus::Round& r,
                          std::span<const double> kappa, double alpha,
                          lexicon::LexiconParams* grad = nullptr);

double mean_decontextualized_log_lik(const lexicon::LexiconParams& p,
                                     const std::vector<corpus::Round>& rounds,
                                     std::span<const double> kappa);
double mean_supervised_log_lik(const lexicon::LexiconParams& p,
                               const std::vector<corpus::Round>& rounds,
                               std::span<const double> kappa, double alpha);

// Mini-batch ascent with early stopping on validation log-likelihood. The
// returned parameters are the best-validation checkpoint. Throws
// NumericalError naming the epoch and batch on a non-finite loss.
TrainResult train_lexicon_decontextualized(
    const std::vector<corpus::Round>& train,
    const std::vector<corpus::Round>& val, const corpus::CostTable& costs,
    const lexicon::LexiconParams& p0, const TrainConfig& cfg);
TrainResult train_sl_supervised(const std::vector<corpus::Round>& train,
                                const std::vector<corpus::Round>& val,
                                const corpus::CostTable& costs,
                                const lexicon::LexiconParams& p0, double alpha,
                                const TrainConfig& cfg);

// CSV `epoch,train_ll,val_ll`.
void save_history_csv(const std::vector<EpochRecord>& history,
                      const std::string& path);
std::vector<EpochRecord> load_history_csv(const std::string& path);

// Flat parameter view: embeddings, score_weights, score_bias.
std::vector<double> flatten(const lexicon::LexiconParams& p);
void unflatten_into(std::span<const double> flat, lexicon::LexiconParams& p);

}  // namespace pragmachine::training
