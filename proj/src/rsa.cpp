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

#include "pragmachine/rsa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pragmachine/error.hpp"

namespace pragmachine::rsa {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_prior(const Prior& prior, std::size_t meanings) {
  if (prior.probs.size() != meanings) {
    throw UsageError("prior has " + std::to_string(prior.probs.size()) +
                     " entries for " + std::to_string(meanings) + " meanings");
  }
}

void check_kappa(std::span<const double> kappa, std::size_t utterances) {
  if (kappa.size() != utterances) {
    throw UsageError("cost table has " + std::to_string(kappa.size()) +
                     " entries for " + std::to_string(utterances) +
                     " utterances");
  }
}

// Normalizes row r in place; returns false if the row had no mass.
bool normalize_row(std::span<double> row) {
  double total = 0.0;
  for (double v : row) total += v;
  if (!(total > 0.0) || !std::isfinite(total)) return false;
  for (double& v : row) v /= total;
  return true;
}

// Softmax of log-weights where -inf means exactly zero weight.
bool softmax_row(std::span<double> logw) {
  double hi = kNegInf;
  for (double v : logw) hi = std::max(hi, v);
  if (hi == kNegInf || !std::isfinite(hi)) return false;
  double total = 0.0;
  for (double& v : logw) {
    v = v == kNegInf ? 0.0 : std::exp(v - hi);
    total += v;
  }
  for (double& v : logw) v /= total;
  return true;
}

}  // namespace

ConditionalMatrix::ConditionalMatrix(Orientation orientation, Matrix probs)
    : orientation_(orientation), probs_(std::move(probs)) {}

double ConditionalMatrix::stochasticity_error() const {
  double worst = 0.0;
  for (std::size_t r = 0; r < rows(); ++r) {
    double total = 0.0;
    for (double v : row(r)) {
      if (!(v >= 0.0)) return std::numeric_limits<double>::infinity();
      total += v;
    }
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return worst;
}

Prior Prior::uniform(std::size_t n) {
  return {std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

ConditionalMatrix literal_listener(const Matrix& lexicon, const Prior& prior) {
  const std::size_t meanings = lexicon.rows();
  const std::size_t utterances = lexicon.cols();
  check_prior(prior, meanings);
  Matrix l(utterances, meanings);
  for (std::size_t u = 0; u < utterances; ++u) {
    for (std::size_t m = 0; m < meanings; ++m) {
      l(u, m) = lexicon(m, u) * prior.probs[m];
    }
    if (!normalize_row(l.row(u))) {
      throw NumericalError("utterance with empty extension (utterance " +
                           std::to_string(u) + ")");
    }
  }
  return {Orientation::kListener, std::move(l)};
}

ConditionalMatrix base_speaker(const Matrix& lexicon,
                               std::span<const double> kappa) {
  const std::size_t meanings = lexicon.rows();
  const std::size_t utterances = lexicon.cols();
  check_kappa(kappa, utterances);
  Matrix s(meanings, utterances);
  for (std::size_t m = 0; m < meanings; ++m) {
    for (std::size_t u = 0; u < utterances; ++u) {
      const double v = lexicon(m, u);
      s(m, u) = v > 0.0 ? std::log(v) - kappa[u] : kNegInf;
    }
    if (!softmax_row(s.row(m))) {
      throw NumericalError("meaning unreachable (meaning " + std::to_string(m) +
                           ")");
    }
  }
  return {Orientation::kSpeaker, std::move(s)};
}

ConditionalMatrix am_speaker_step(const ConditionalMatrix& listener,
                                  std::span<const double> kappa, double alpha) {
  if (listener.orientation() != Orientation::kListener) {
    throw UsageError("am_speaker_step expects a listener matrix");
  }
  if (!(alpha >= 0.0)) throw UsageError("alpha must be nonnegative");
  const std::size_t meanings = listener.num_meanings();
  const std::size_t utterances = listener.num_utterances();
  check_kappa(kappa, utterances);
  Matrix s(meanings, utterances);
  for (std::size_t m = 0; m < meanings; ++m) {
    for (std::size_t u = 0; u < utterances; ++u) {
      const double l = listener.at(m, u);
      if (alpha == 0.0) {
        s(m, u) = 0.0;
      } else {
        s(m, u) = l > 0.0 ? alpha * (std::log(l) - kappa[u]) : kNegInf;
      }
    }
    if (!softmax_row(s.row(m))) {
      throw NumericalError("meaning unreachable (meaning " + std::to_string(m) +
                           ")");
    }
  }
  return {Orientation::kSpeaker, std::move(s)};
}

ConditionalMatrix am_listener_step(const ConditionalMatrix& speaker,
                                   const Prior& prior,
                                   std::vector<std::size_t>* undefined_rows) {
  if (speaker.orientation() != Orientation::kSpeaker) {
    throw UsageError("am_listener_step expects a speaker matrix");
  }
  const std::size_t meanings = speaker.num_meanings();
  const std::size_t utterances = speaker.num_utterances();
  check_prior(prior, meanings);
  Matrix l(utterances, meanings);
  for (std::size_t u = 0; u < utterances; ++u) {
    for (std::size_t m = 0; m < meanings; ++m) {
      l(u, m) = speaker.at(m, u) * prior.probs[m];
    }
    if (!normalize_row(l.row(u))) {
      std::copy(prior.probs.begin(), prior.probs.end(), l.row(u).begin());
      if (undefined_rows) undefined_rows->push_back(u);
    }
  }
  return {Orientation::kListener, std::move(l)};
}

AmResult run_am(const Matrix& lexicon, const Prior& prior,
                std::span<const double> kappa, const RsaConfig& cfg) {
  if (cfg.t < 1) throw UsageError("AM depth t must be >= 1");
  check_kappa(kappa, lexicon.cols());
  const std::vector<double> zeros(kappa.size(), 0.0);
  const std::span<const double> step_cost =
      cfg.use_cost ? kappa : std::span<const double>(zeros);
  AmResult out;
  out.listener = literal_listener(lexicon, prior);
  for (int step = 0; step < cfg.t; ++step) {
    out.speaker = am_speaker_step(out.listener, step_cost, cfg.alpha);
    out.trace.push_back(evaluate_objectives(out.speaker, out.listener, prior,
                                            kappa, cfg.alpha, cfg.use_cost));
    out.listener = am_listener_step(out.speaker, prior);
    out.trace.push_back(evaluate_objectives(out.speaker, out.listener, prior,
                                            kappa, cfg.alpha, cfg.use_cost));
  }
  return out;
}

std::vector<double> speaker_marginal(const ConditionalMatrix& speaker,
                                     const Prior& prior) {
  std::vector<double> marginal(speaker.num_utterances(), 0.0);
  for (std::size_t m = 0; m < speaker.num_meanings(); ++m) {
    for (std::size_t u = 0; u < marginal.size(); ++u) {
      marginal[u] += prior.probs[m] * speaker.at(m, u);
    }
  }
  return marginal;
}

ObjectiveReport evaluate_objectives(const ConditionalMatrix& speaker,
                                    const ConditionalMatrix& listener,
                                    const Prior& prior,
                                    std::span<const double> kappa, double alpha,
                                    bool use_cost) {
  if (speaker.orientation() != Orientation::kSpeaker ||
      listener.orientation() != Orientation::kListener) {
    throw UsageError("objective expects (speaker, listener)");
  }
  const std::size_t meanings = speaker.num_meanings();
  const std::size_t utterances = speaker.num_utterances();
  if (listener.num_meanings() != meanings ||
      listener.num_utterances() != utterances) {
    throw UsageError("objective: speaker and listener shapes differ");
  }
  check_prior(prior, meanings);
  check_kappa(kappa, utterances);
  const std::vector<double> marginal = speaker_marginal(speaker, prior);

  double entropy = 0.0;
  double information = 0.0;
  double utility = 0.0;
  for (std::size_t m = 0; m < meanings; ++m) {
    const double pm = prior.probs[m];
    if (pm == 0.0) continue;
    for (std::size_t u = 0; u < utterances; ++u) {
      const double s = speaker.at(m, u);
      if (s == 0.0) continue;
      const double log_s = std::log(s);
      entropy -= pm * s * log_s;
      information += pm * s * (log_s - std::log(marginal[u]));
      const double l = listener.at(m, u);
      const double log_l = l > 0.0 ? std::log(l) : kNegInf;
      utility += pm * s * (log_l - (use_cost ? kappa[u] : 0.0));
    }
  }
  ObjectiveReport r;
  r.alpha = alpha;
  r.h_u_given_m = entropy;
  r.i_mu = information;
  r.expected_utility = utility;
  const double weighted = alpha == 0.0 ? 0.0 : alpha * utility;
  r.g_alpha = r.h_u_given_m + weighted;
  r.f_alpha = r.i_mu - weighted;
  return r;
}

std::size_t argmax(std::span<const double> xs, bool* tied) {
  std::size_t best = 0;
  bool tie = false;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] > xs[best]) {
      best = i;
      tie = false;
    } else if (xs[i] == xs[best]) {
      tie = true;
    }
  }
  if (tied) *tied = tie;
  return best;
}

}  // namespace pragmachine::rsa
