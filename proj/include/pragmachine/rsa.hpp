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
#include <span>
#include <vector>

#include "pragmachine/matrix.hpp"

// Tabular RSA over a single context. Lexicons are meaning-major matrices
// (|M| x |U|, entry (m, u) = L(u, m)); costs are kappa(u) spans.
//
// Sign convention: the least-effort objective is
//   G_alpha[s, l] = H_s(U|M) + alpha * E_s[log l(M|U) - kappa(U)]
// and is maximized. (Some printings show a minus before alpha; the speaker
// update soft-maximizes alpha * (log l - kappa), which fixes the sign.)
// The rate-distortion objective
//   F_alpha[s, l] = I_s(M;U) - alpha * E_s[log l(M|U) - kappa(U)]
// is minimized. All quantities are in nats.
namespace pragmachine::rsa {

enum class Orientation { kSpeaker, kListener };

inline constexpr double kStochasticTolerance = 1e-12;

// Row-stochastic matrix. Speaker: rows are meanings, s(u|m) at (m, u).
// Listener: rows are utterances, l(m|u) at (u, m).
class ConditionalMatrix {
 public:
  ConditionalMatrix() = default;
  ConditionalMatrix(Orientation orientation, Matrix probs);

  Orientation orientation() const { return orientation_; }
  const Matrix& probs() const { return probs_; }
  std::size_t rows() const { return probs_.rows(); }
  std::size_t cols() const { return probs_.cols(); }
  std::size_t num_meanings() const {
    return orientation_ == Orientation::kSpeaker ? rows() : cols();
  }
  std::size_t num_utterances() const {
    return orientation_ == Orientation::kSpeaker ? cols() : rows();
  }
  std::span<const double> row(std::size_t r) const { return probs_.row(r); }
  // Probability with (meaning, utterance) indexing regardless of orientation.
  double at(std::size_t meaning, std::size_t utterance) const {
    return orientation_ == Orientation::kSpeaker ? probs_(meaning, utterance)
                                                 : probs_(utterance, meaning);
  }

  // Largest |row sum - 1|, and whether every entry is >= 0.
  double stochasticity_error() const;

  bool operator==(const ConditionalMatrix&) const = default;

 private:
  Orientation orientation_ = Orientation::kSpeaker;
  Matrix probs_;
};

struct Prior {
  std::vector<double> probs;
  static Prior uniform(std::size_t n);
};

struct RsaConfig {
  double alpha = 1.17;
  int t = 1;
  bool use_cost = true;
};

struct ObjectiveReport {
  double alpha = 0.0;
  double h_u_given_m = 0.0;
  double i_mu = 0.0;
  // E_s[log l(M|U) - kappa(U)], kappa included only when use_cost.
  double expected_utility = 0.0;
  double g_alpha = 0.0;
  double f_alpha = 0.0;

  bool operator==(const ObjectiveReport&) const = default;
};

// l0(m|u) ∝ L(u,m) P(m). Throws NumericalError "utterance with empty
// extension" when a row has no mass.
ConditionalMatrix literal_listener(const Matrix& lexicon, const Prior& prior);

// s0(u|m) ∝ L(u,m) exp(-kappa(u)).
ConditionalMatrix base_speaker(const Matrix& lexicon,
                               std::span<const double> kappa);

// s_t(u|m) ∝ exp(alpha (log l_{t-1}(m|u) - kappa(u))). Where l_{t-1} is
// exactly zero the weight is zero (alpha > 0). alpha = 0 gives uniform rows.
// Throws NumericalError "meaning unreachable" for an all-zero row.
ConditionalMatrix am_speaker_step(const ConditionalMatrix& listener,
                                  std::span<const double> kappa, double alpha);

// l_t(m|u) ∝ s_t(u|m) P(m). Utterances no meaning produces get the prior;
// their indices are appended to `undefined_rows` when given.
ConditionalMatrix am_listener_step(
    const ConditionalMatrix& speaker, const Prior& prior,
    std::vector<std::size_t>* undefined_rows = nullptr);

struct AmResult {
  ConditionalMatrix speaker;
  ConditionalMatrix listener;
  // One report per half-step: (s1, l0), (s1, l1), (s2, l1), ...
  std::vector<ObjectiveReport> trace;
};

// Alternates speaker and listener steps for cfg.t rounds starting from l0.
// Costs enter the speaker step and the objective only when cfg.use_cost.
AmResult run_am(const Matrix& lexicon, const Prior& prior,
                std::span<const double> kappa, const RsaConfig& cfg);

// Both objectives from one pass. 0 log 0 = 0; positive speaker mass on a
// zero listener entry yields expected_utility = -inf (not an error).
ObjectiveReport evaluate_objectives(const ConditionalMatrix& speaker,
                                    const ConditionalMatrix& listener,
                                    const Prior& prior,
                                    std::span<const double> kappa, double alpha,
                                    bool use_cost);
inline ObjectiveReport objective_le(const ConditionalMatrix& speaker,
                                    const ConditionalMatrix& listener,
                                    const Prior& prior,
                                    std::span<const double> kappa,
                                    double alpha, bool use_cost) {
  return evaluate_objectives(speaker, listener, prior, kappa, alpha, use_cost);
}
inline ObjectiveReport objective_rd(const ConditionalMatrix& speaker,
                                    const ConditionalMatrix& listener,
                                    const Prior& prior,
                                    std::span<const double> kappa,
                                    double alpha, bool use_cost) {
  return evaluate_objectives(speaker, listener, prior, kappa, alpha, use_cost);
}

// Speaker marginal S(u) = sum_m P(m) s(u|m).
std::vector<double> speaker_marginal(const ConditionalMatrix& speaker,
                                     const Prior& prior);

// Index of the largest entry; ties go to the lowest index. `tied` is set
// when another entry equals the maximum.
std::size_t argmax(std::span<const double> xs, bool* tied = nullptr);

}  // namespace pragmachine::rsa
