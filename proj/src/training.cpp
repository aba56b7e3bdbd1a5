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

#include "pragmachine/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pragmachine/error.hpp"
#include "pragmachine/parallel.hpp"
#include "pragmachine/random.hpp"

namespace pragmachine::training {

using corpus::Round;
using lexicon::kLogitClamp;
using lexicon::kNumFeatures;
using lexicon::LexiconParams;

std::string_view optimizer_name(Optimizer o) {
  return o == Optimizer::kPlainGd ? "plain-gd" : "adam";
}

std::optional<Optimizer> parse_optimizer(std::string_view name) {
  if (name == "plain-gd" || name == "gd") return Optimizer::kPlainGd;
  if (name == "adam" || name == "adaptive-moments") {
    return Optimizer::kAdaptiveMoments;
  }
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("--lr must be positive");
  if (batch_size < 1) throw UsageError("--batch-size must be positive");
  if (epochs < 0) throw UsageError("--epochs must be >= 0");
  if (patience < 1) throw UsageError("--patience must be >= 1");
}

namespace {

// Per-utterance feature weights (|U| x kNumFeatures) plus their gradient.
struct Workspace {
  const Matrix& weights;
  Matrix* d_weights;
};

struct Score {
  double value;   // L in (0, 1)
  double dlogit;  // dL/dlogit divided by L, i.e. d log L / d logit
};

Score score_at(const Matrix& w, std::size_t u,
               const lexicon::ColorFeatures& phi) {
  double z = 0.0;
  for (std::size_t k = 0; k < kNumFeatures; ++k) z += w(u, k) * phi[k];
  if (z > kLogitClamp || z < -kLogitClamp) {
    const double c = std::clamp(z, -kLogitClamp, kLogitClamp);
    return {lexicon::sigmoid(c), 0.0};
  }
  const double l = lexicon::sigmoid(z);
  return {l, 1.0 - l};
}

void add_feature_grad(Matrix& dw, std::size_t u,
                      const lexicon::ColorFeatures& phi, double g) {
  if (g == 0.0) return;
  for (std::size_t k = 0; k < kNumFeatures; ++k) dw(u, k) += g * phi[k];
}

double dec_example(const Workspace& ws, const Round& r,
                   std::span<const double> kappa) {
  const std::size_t n = ws.weights.rows();
  const auto phi = lexicon::color_features(r.context[r.target_index]);
  std::vector<double> logw(n);
  std::vector<double> dlog(n);
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t u = 0; u < n; ++u) {
    const Score s = score_at(ws.weights, u, phi);
    logw[u] = std::log(s.value) - kappa[u];
    dlog[u] = s.dlogit;
    hi = std::max(hi, logw[u]);
  }
  double total = 0.0;
  for (double v : logw) total += std::exp(v - hi);
  const double log_z = hi + std::log(total);
  const std::size_t star = r.utterance_id;
  if (ws.d_weights) {
    for (std::size_t u = 0; u < n; ++u) {
      const double p = std::exp(logw[u] - log_z);
      const double g = ((u == star ? 1.0 : 0.0) - p) * dlog[u];
      add_feature_grad(*ws.d_weights, u, phi, g);
    }
  }
  return logw[star] - log_z;
}

double sl_example(const Workspace& ws, const Round& r,
                  std::span<const double> kappa, double alpha) {
  const std::size_t n = ws.weights.rows();
  constexpr std::size_t kM = color::kContextSize;
  std::array<lexicon::ColorFeatures, kM> phi;
  for (std::size_t m = 0; m < kM; ++m) phi[m] = lexicon::color_features(r.context[m]);

  // log L(u, m), d log L / d logit, and log l0(m | u).
  Matrix log_lex(kM, n), dlog(kM, n), log_l0(kM, n);
  for (std::size_t u = 0; u < n; ++u) {
    double col = 0.0;
    for (std::size_t m = 0; m < kM; ++m) {
      const Score s = score_at(ws.weights, u, phi[m]);
      log_lex(m, u) = std::log(s.value);
      dlog(m, u) = s.dlogit;
      col += s.value;
    }
    const double log_col = std::log(col);
    for (std::size_t m = 0; m < kM; ++m) log_l0(m, u) = log_lex(m, u) - log_col;
  }
  // s1(u | m) ∝ exp(alpha (log l0 - kappa)).
  Matrix s1(kM, n);
  for (std::size_t m = 0; m < kM; ++m) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < n; ++u) {
      s1(m, u) = alpha * (log_l0(m, u) - kappa[u]);
      hi = std::max(hi, s1(m, u));
    }
    double total = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      s1(m, u) = std::exp(s1(m, u) - hi);
      total += s1(m, u);
    }
    for (std::size_t u = 0; u < n; ++u) s1(m, u) /= total;
  }
  const std::size_t ustar = r.utterance_id;
  const std::size_t mstar = r.target_index;
  double col = 0.0;
  for (std::size_t m = 0; m < kM; ++m) col += s1(m, ustar);
  std::array<double, kM> l1{};
  for (std::size_t m = 0; m < kM; ++m) l1[m] = s1(m, ustar) / col;
  const double ll = std::log(s1(mstar, ustar)) - std::log(col);

  if (ws.d_weights) {
    // d ll / d log l0(m, u) = alpha ([m=m*] - l1(m|u*)) ([u=u*] - s1(u|m)).
    Matrix da(kM, n);
    for (std::size_t m = 0; m < kM; ++m) {
      const double outer = alpha * ((m == mstar ? 1.0 : 0.0) - l1[m]);
      for (std::size_t u = 0; u < n; ++u) {
        da(m, u) = outer * ((u == ustar ? 1.0 : 0.0) - s1(m, u));
      }
    }
    for (std::size_t u = 0; u < n; ++u) {
      double sum = 0.0;
      for (std::size_t m = 0; m < kM; ++m) sum += da(m, u);
      for (std::size_t m = 0; m < kM; ++m) {
        const double l0 = std::exp(log_l0(m, u));
        const double dlog_lex = da(m, u) - l0 * sum;
        add_feature_grad(*ws.d_weights, u, phi[m], dlog_lex * dlog(m, u));
      }
    }
  }
  return ll;
}

void check_round(const Round& r, std::size_t vocab_size) {
  if (r.utterance_id >= vocab_size) {
    throw DataError("round utterance id " + std::to_string(r.utterance_id) +
                    " outside the lexicon vocabulary");
  }
}

template <typename Fn>
double mean_ll(const LexiconParams& p, const std::vector<Round>& rounds,
               Fn&& example) {
  if (rounds.empty()) return 0.0;
  const Matrix w = lexicon::utterance_weights(p);
  const Workspace ws{w, nullptr};
  const auto lls = map_indices<double>(
      rounds.size(), ExecPolicy::kParallel, [&](std::size_t i) {
        check_round(rounds[i], p.vocab_size());
        return example(ws, rounds[i]);
      });
  double total = 0.0;
  for (double v : lls) total += v;
  return total / static_cast<double>(rounds.size());
}

struct Adam {
  std::vector<double> m, v;
  long long t = 0;
};

template <typename Fn>
TrainResult train_loop(const std::vector<Round>& train,
                       const std::vector<Round>& val, const LexiconParams& p0,
                       const TrainConfig& cfg, std::string_view what,
                       Fn&& example) {
  cfg.validate();
  if (train.empty()) throw DataError(std::string(what) + ": no training rounds");
  p0.validate(p0.vocab_size());
  for (const auto& r : train) check_round(r, p0.vocab_size());

  // Validation falls back to the training set when no held-out rounds exist.
  const std::vector<Round>& held = val.empty() ? train : val;
  TrainResult result;
  result.params = p0;
  LexiconParams p = p0;
  result.history.push_back(
      {0, mean_ll(p, train, example), mean_ll(p, held, example)});
  double best_val = result.history.back().val_ll;
  int since_best = 0;

  std::vector<double> theta = flatten(p);
  Adam adam{std::vector<double>(theta.size()), std::vector<double>(theta.size())};
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "train-shuffle", static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<std::size_t>(order));
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const Matrix w = lexicon::utterance_weights(p);
      Matrix dw(w.rows(), w.cols());
      const Workspace ws{w, &dw};
      double loss = 0.0;
      for (std::size_t i = start; i < end; ++i) loss += example(ws, train[order[i]]);
      if (!std::isfinite(loss)) {
        throw NumericalError(std::string(what) + ": non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (double& g : dw.flat()) g *= scale;
      LexiconParams grad = lexicon::zeros_like(p);
      lexicon::backprop_utterance_weights(p, dw, grad);
      const std::vector<double> g = flatten(grad);
      if (cfg.optimizer == Optimizer::kPlainGd) {
        for (std::size_t k = 0; k < theta.size(); ++k) theta[k] += cfg.lr * g[k];
      } else {
        constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
        ++adam.t;
        const double c1 = 1.0 - std::pow(kB1, static_cast<double>(adam.t));
        const double c2 = 1.0 - std::pow(kB2, static_cast<double>(adam.t));
        for (std::size_t k = 0; k < theta.size(); ++k) {
          adam.m[k] = kB1 * adam.m[k] + (1.0 - kB1) * g[k];
          adam.v[k] = kB2 * adam.v[k] + (1.0 - kB2) * g[k] * g[k];
          theta[k] += cfg.lr * (adam.m[k] / c1) / (std::sqrt(adam.v[k] / c2) + kEps);
        }
      }
      unflatten_into(theta, p);
    }
    const EpochRecord rec{epoch, mean_ll(p, train, example),
                          mean_ll(p, held, example)};
    if (!std::isfinite(rec.train_ll) || !std::isfinite(rec.val_ll)) {
      throw NumericalError(std::string(what) + ": non-finite log-likelihood after epoch " +
                           std::to_string(epoch));
    }
    result.history.push_back(rec);
    if (rec.val_ll > best_val) {
      best_val = rec.val_ll;
      result.params = p;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

double with_grad(const LexiconParams& p, LexiconParams* grad,
                 const std::function<double(const Workspace&)>& fn) {
  const Matrix w = lexicon::utterance_weights(p);
  if (!grad) return fn(Workspace{w, nullptr});
  Matrix dw(w.rows(), w.cols());
  const double ll = fn(Workspace{w, &dw});
  lexicon::backprop_utterance_weights(p, dw, *grad);
  return ll;
}

}  // namespace

double decontextualized_log_lik(const LexiconParams& p, const Round& r,
                                std::span<const double> kappa,
                                LexiconParams* grad) {
  check_round(r, p.vocab_size());
  return with_grad(p, grad,
                   [&](const Workspace& ws) { return dec_example(ws, r, kappa); });
}

double supervised_log_lik(const LexiconParams& p, const Round& r,
                          std::span<const double> kappa, double alpha,
                          LexiconParams* grad) {
  check_round(r, p.vocab_size());
  return with_grad(p, grad, [&](const Workspace& ws) {
    return sl_example(ws, r, kappa, alpha);
  });
}

double mean_decontextualized_log_lik(const LexiconParams& p,
                                     const std::vector<Round>& rounds,
                                     std::span<const double> kappa) {
  return mean_ll(p, rounds, [&](const Workspace& ws, const Round& r) {
    return dec_example(ws, r, kappa);
  });
}

double mean_supervised_log_lik(const LexiconParams& p,
                               const std::vector<Round>& rounds,
                               std::span<const double> kappa, double alpha) {
  return mean_ll(p, rounds, [&](const Workspace& ws, const Round& r) {
    return sl_example(ws, r, kappa, alpha);
  });
}

TrainResult train_lexicon_decontextualized(const std::vector<Round>& train,
                                           const std::vector<Round>& val,
                                           const corpus::CostTable& costs,
                                           const LexiconParams& p0,
                                           const TrainConfig& cfg) {
  if (costs.kappa.size() != p0.vocab_size()) {
    throw UsageError("cost table does not match the lexicon vocabulary");
  }
  const std::span<const double> kappa = costs.view();
  return train_loop(train, val, p0, cfg, "decontextualized training",
                    [&](const Workspace& ws, const Round& r) {
                      return dec_example(ws, r, kappa);
                    });
}

TrainResult train_sl_supervised(const std::vector<Round>& train,
                                const std::vector<Round>& val,
                                const corpus::CostTable& costs,
                                const LexiconParams& p0, double alpha,
                                const TrainConfig& cfg) {
  if (costs.kappa.size() != p0.vocab_size()) {
    throw UsageError("cost table does not match the lexicon vocabulary");
  }
  if (!(alpha >= 0.0)) throw UsageError("--alpha must be >= 0");
  const std::span<const double> kappa = costs.view();
  return train_loop(train, val, p0, cfg, "supervised training",
                    [&](const Workspace& ws, const Round& r) {
                      return sl_example(ws, r, kappa, alpha);
                    });
}

void save_history_csv(const std::vector<EpochRecord>& history,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write history '" + path + "'");
  out << "epoch,train_ll,val_ll\n";
  char buf[96];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", h.epoch, h.train_ll,
                  h.val_ll);
    out << buf;
  }
  if (!out) throw DataError("write failed: '" + path + "'");
}

std::vector<EpochRecord> load_history_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open history '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_ll,val_ll") {
    throw DataError(path + ": bad history header");
  }
  std::vector<EpochRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    EpochRecord r;
    char c1 = 0, c2 = 0;
    std::istringstream is(line);
    if (!(is >> r.epoch >> c1 >> r.train_ll >> c2 >> r.val_ll) || c1 != ',' ||
        c2 != ',') {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad history row");
    }
    out.push_back(r);
  }
  return out;
}

std::vector<double> flatten(const LexiconParams& p) {
  std::vector<double> out;
  out.reserve(p.embeddings.flat().size() + p.score_weights.flat().size() +
              p.score_bias.size());
  for (double v : p.embeddings.flat()) out.push_back(v);
  for (double v : p.score_weights.flat()) out.push_back(v);
  for (double v : p.score_bias) out.push_back(v);
  return out;
}

void unflatten_into(std::span<const double> flat, LexiconParams& p) {
  auto e = p.embeddings.flat();
  auto w = p.score_weights.flat();
  if (flat.size() != e.size() + w.size() + p.score_bias.size()) {
    throw UsageError("flat parameter vector has the wrong length");
  }
  auto it = flat.begin();
  std::copy_n(it, e.size(), e.begin());
  it += static_cast<std::ptrdiff_t>(e.size());
  std::copy_n(it, w.size(), w.begin());
  it += static_cast<std::ptrdiff_t>(w.size());
  std::copy_n(it, p.score_bias.size(), p.score_bias.begin());
}

}  // namespace pragmachine::training
