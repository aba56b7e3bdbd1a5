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

#include "pragmachine/gdprag.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "pragmachine/error.hpp"
#include "pragmachine/random.hpp"

namespace pragmachine::gd {
namespace {

using rsa::ConditionalMatrix;
using rsa::Orientation;

void check_lexicon(const Matrix& lexicon) {
  for (double v : lexicon.flat()) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw UsageError("GD agents need a strictly positive finite lexicon");
    }
  }
}

void check_shapes(const GdParams& p, const Matrix& lexicon) {
  const std::size_t m = lexicon.rows();
  const std::size_t u = lexicon.cols();
  const auto& l = p.listener;
  const auto& s = p.speaker;
  const bool ok =
      l.f1_w.rows() == m && l.f1_w.cols() == m && l.f1_b.size() == m &&
      l.f2_w.rows() == m && l.f2_w.cols() == m * u && l.f2_b.size() == m &&
      s.g1_w.rows() == u && s.g1_w.cols() == u && s.g1_b.size() == u &&
      s.g2_w.rows() == u && s.g2_w.cols() == m * u && s.g2_b.size() == u;
  if (!ok) throw UsageError("GD parameter shapes do not match the lexicon");
}

// Row-wise log-softmax in place.
void log_softmax_rows(Matrix& z) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    const double hi = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double v : row) total += std::exp(v - hi);
    const double log_z = hi + std::log(total);
    for (double& v : row) v -= log_z;
  }
}

Matrix exp_of(const Matrix& log_p) {
  Matrix p(log_p.rows(), log_p.cols());
  for (std::size_t i = 0; i < p.size(); ++i) p.flat()[i] = std::exp(log_p.flat()[i]);
  return p;
}

// log l(m|u) as a |U| x |M| matrix.
Matrix listener_log_probs(const ListenerParams& p, const Matrix& lexicon) {
  const std::size_t meanings = lexicon.rows();
  const std::size_t utterances = lexicon.cols();
  const auto context = lexicon.flat();
  std::vector<double> f2(meanings);
  for (std::size_t m = 0; m < meanings; ++m) {
    double acc = p.f2_b[m];
    const auto w = p.f2_w.row(m);
    for (std::size_t k = 0; k < context.size(); ++k) acc += w[k] * context[k];
    f2[m] = acc;
  }
  Matrix z(utterances, meanings);
  for (std::size_t u = 0; u < utterances; ++u) {
    for (std::size_t m = 0; m < meanings; ++m) {
      double f1 = p.f1_b[m];
      for (std::size_t j = 0; j < meanings; ++j) {
        f1 += p.f1_w(m, j) * lexicon(j, u);
      }
      z(u, m) = f1 - f2[m] + std::log(lexicon(m, u));
    }
  }
  log_softmax_rows(z);
  return z;
}

// log s(u|m) as a |M| x |U| matrix.
Matrix speaker_log_probs(const SpeakerParams& p, const Matrix& lexicon,
                         std::span<const double> kappa, bool use_cost) {
  const std::size_t meanings = lexicon.rows();
  const std::size_t utterances = lexicon.cols();
  const auto context = lexicon.flat();
  std::vector<double> g2(utterances);
  for (std::size_t u = 0; u < utterances; ++u) {
    double acc = p.g2_b[u];
    const auto w = p.g2_w.row(u);
    for (std::size_t k = 0; k < context.size(); ++k) acc += w[k] * context[k];
    g2[u] = acc;
  }
  Matrix z(meanings, utterances);
  for (std::size_t m = 0; m < meanings; ++m) {
    const auto lex_m = lexicon.row(m);
    for (std::size_t u = 0; u < utterances; ++u) {
      double g1 = p.g1_b[u];
      const auto w = p.g1_w.row(u);
      for (std::size_t j = 0; j < utterances; ++j) g1 += w[j] * lex_m[j];
      z(m, u) = g1 - g2[u] + std::log(lexicon(m, u)) -
                (use_cost ? kappa[u] : 0.0);
    }
  }
  log_softmax_rows(z);
  return z;
}

// Gradients of the objective with respect to the readout logits.
struct LogitGradients {
  Matrix listener;  // |U| x |M|
  Matrix speaker;   // |M| x |U|
};

// Chains logit gradients through the affine encoders.
GdParams chain_to_params(const LogitGradients& d, const Matrix& lexicon) {
  const std::size_t meanings = lexicon.rows();
  const std::size_t utterances = lexicon.cols();
  const auto context = lexicon.flat();
  GdParams g = zero_params(meanings, utterances);

  for (std::size_t m = 0; m < meanings; ++m) {
    double column = 0.0;
    for (std::size_t u = 0; u < utterances; ++u) {
      const double dz = d.listener(u, m);
      column += dz;
      for (std::size_t j = 0; j < meanings; ++j) {
        g.listener.f1_w(m, j) += dz * lexicon(j, u);
      }
    }
    g.listener.f1_b[m] = column;
    g.listener.f2_b[m] = -column;
    auto w = g.listener.f2_w.row(m);
    for (std::size_t k = 0; k < context.size(); ++k) w[k] = -column * context[k];
  }

  for (std::size_t u = 0; u < utterances; ++u) {
    double column = 0.0;
    auto w1 = g.speaker.g1_w.row(u);
    for (std::size_t m = 0; m < meanings; ++m) {
      const double dz = d.speaker(m, u);
      column += dz;
      const auto lex_m = lexicon.row(m);
      for (std::size_t j = 0; j < utterances; ++j) w1[j] += dz * lex_m[j];
    }
    g.speaker.g1_b[u] = column;
    g.speaker.g2_b[u] = -column;
    auto w2 = g.speaker.g2_w.row(u);
    for (std::size_t k = 0; k < context.size(); ++k) w2[k] = -column * context[k];
  }
  return g;
}

// Softmax Jacobian: dObj/dz_i = p_i (a_i - sum_j p_j a_j) for a = dObj/dp.
void softmax_backward(std::span<const double> p, std::span<const double> a,
                      std::span<double> dz) {
  double mean = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) mean += p[i] * a[i];
  for (std::size_t i = 0; i < p.size(); ++i) dz[i] = p[i] * (a[i] - mean);
}

void check_finite(const GdParams& g) {
  auto finite = [](std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(),
                       [](double v) { return std::isfinite(v); });
  };
  const std::pair<const char*, std::span<const double>> blocks[] = {
      {"f1_w", g.listener.f1_w.flat()}, {"f1_b", g.listener.f1_b},
      {"f2_w", g.listener.f2_w.flat()}, {"f2_b", g.listener.f2_b},
      {"g1_w", g.speaker.g1_w.flat()},  {"g1_b", g.speaker.g1_b},
      {"g2_w", g.speaker.g2_w.flat()},  {"g2_b", g.speaker.g2_b}};
  for (const auto& [name, values] : blocks) {
    if (!finite(values)) {
      throw NumericalError(std::string("non-finite gradient in block ") + name);
    }
  }
}

struct Distributions {
  Matrix log_l;  // |U| x |M|
  Matrix l;
  Matrix log_s;  // |M| x |U|
  Matrix s;
};

Distributions distributions(const GdParams& p, const Matrix& lexicon,
                            std::span<const double> kappa, bool use_cost) {
  Distributions d;
  d.log_l = listener_log_probs(p.listener, lexicon);
  d.l = exp_of(d.log_l);
  d.log_s = speaker_log_probs(p.speaker, lexicon, kappa, use_cost);
  d.s = exp_of(d.log_s);
  return d;
}

}  // namespace

std::string_view objective_name(Objective o) {
  return o == Objective::kLe ? "le" : "rd";
}

std::optional<Objective> parse_objective(std::string_view name) {
  if (name == "le" || name == "LE") return Objective::kLe;
  if (name == "rd" || name == "RD") return Objective::kRd;
  return std::nullopt;
}

void GdConfig::validate() const {
  if (steps < 1) throw UsageError("GD steps must be >= 1");
  if (!(lr > 0.0)) throw UsageError("GD learning rate must be positive");
  if (!(alpha >= 0.0)) throw UsageError("alpha must be nonnegative");
  if (!(init_range >= 0.0)) throw UsageError("init range must be nonnegative");
}

GdParams zero_params(std::size_t meanings, std::size_t utterances) {
  GdParams p;
  p.listener.f1_w = Matrix(meanings, meanings);
  p.listener.f1_b.assign(meanings, 0.0);
  p.listener.f2_w = Matrix(meanings, meanings * utterances);
  p.listener.f2_b.assign(meanings, 0.0);
  p.speaker.g1_w = Matrix(utterances, utterances);
  p.speaker.g1_b.assign(utterances, 0.0);
  p.speaker.g2_w = Matrix(utterances, meanings * utterances);
  p.speaker.g2_b.assign(utterances, 0.0);
  return p;
}

GdParams init_gd_params(std::size_t meanings, std::size_t utterances,
                        std::uint64_t seed, double init_range) {
  if (utterances < 2) throw UsageError("GD agents need at least 2 utterances");
  GdParams p = zero_params(meanings, utterances);
  Rng rng(derive_seed(seed, "gd-init"));
  for (Matrix* w : {&p.listener.f1_w, &p.listener.f2_w, &p.speaker.g1_w,
                    &p.speaker.g2_w}) {
    for (double& v : w->flat()) v = rng.uniform(-init_range, init_range);
  }
  return p;
}

ConditionalMatrix gd_listener_dist(const ListenerParams& p,
                                   const Matrix& lexicon) {
  check_lexicon(lexicon);
  GdParams tmp;
  tmp.listener = p;
  tmp.speaker = zero_params(lexicon.rows(), lexicon.cols()).speaker;
  check_shapes(tmp, lexicon);
  return {Orientation::kListener, exp_of(listener_log_probs(p, lexicon))};
}

ConditionalMatrix gd_speaker_dist(const SpeakerParams& p, const Matrix& lexicon,
                                  std::span<const double> kappa,
                                  bool use_cost) {
  check_lexicon(lexicon);
  if (kappa.size() != lexicon.cols()) throw UsageError("cost table size mismatch");
  GdParams tmp;
  tmp.speaker = p;
  tmp.listener = zero_params(lexicon.rows(), lexicon.cols()).listener;
  check_shapes(tmp, lexicon);
  return {Orientation::kSpeaker,
          exp_of(speaker_log_probs(p, lexicon, kappa, use_cost))};
}

namespace {

void check_inputs(const GdParams& p, const Matrix& lexicon,
                  const rsa::Prior& prior, std::span<const double> kappa) {
  check_lexicon(lexicon);
  check_shapes(p, lexicon);
  if (prior.probs.size() != lexicon.rows()) throw UsageError("prior size mismatch");
  if (kappa.size() != lexicon.cols()) throw UsageError("cost table size mismatch");
}

// Listener logit gradient of G_alpha:
//   dG/dz_l(u,m) = alpha (P(m) s(u|m) - l(m|u) S(u)),
// the softmax form of alpha sum P(m) S(u|m) d log L(m|u).
Matrix listener_logit_grad_le(const Distributions& d, const rsa::Prior& prior,
                              double alpha) {
  const std::size_t utterances = d.l.rows();
  const std::size_t meanings = d.l.cols();
  Matrix dz(utterances, meanings);
  for (std::size_t u = 0; u < utterances; ++u) {
    double marginal = 0.0;
    for (std::size_t m = 0; m < meanings; ++m) {
      marginal += prior.probs[m] * d.s(m, u);
    }
    for (std::size_t m = 0; m < meanings; ++m) {
      dz(u, m) = alpha * (prior.probs[m] * d.s(m, u) - d.l(u, m) * marginal);
    }
  }
  return dz;
}

double utility(const Distributions& d, std::span<const double> kappa,
               bool use_cost, std::size_t m, std::size_t u) {
  return d.log_l(u, m) - (use_cost ? kappa[u] : 0.0);
}

}  // namespace

GdParams grad_le(const GdParams& p, const Matrix& lexicon,
                 const rsa::Prior& prior, std::span<const double> kappa,
                 double alpha, bool use_cost) {
  check_inputs(p, lexicon, prior, kappa);
  const Distributions d = distributions(p, lexicon, kappa, use_cost);
  const std::size_t meanings = lexicon.rows();
  const std::size_t utterances = lexicon.cols();

  LogitGradients lg;
  lg.listener = listener_logit_grad_le(d, prior, alpha);

  // dG/dS(u|m) = -P(m) (log S(u|m) - alpha (log L(m|u) - kappa(u)) + 1).
  lg.speaker = Matrix(meanings, utterances);
  std::vector<double> ds(utterances);
  for (std::size_t m = 0; m < meanings; ++m) {
    for (std::size_t u = 0; u < utterances; ++u) {
      ds[u] = -prior.probs[m] *
              (d.log_s(m, u) - alpha * utility(d, kappa, use_cost, m, u) + 1.0);
    }
    softmax_backward(d.s.row(m), ds, lg.speaker.row(m));
  }
  GdParams g = chain_to_params(lg, lexicon);
  check_finite(g);
  return g;
}

GdParams grad_rd(const GdParams& p, const Matrix& lexicon,
                 const rsa::Prior& prior, std::span<const double> kappa,
                 double alpha, bool use_cost) {
  check_inputs(p, lexicon, prior, kappa);
  const Distributions d = distributions(p, lexicon, kappa, use_cost);
  const std::size_t meanings = lexicon.rows();
  const std::size_t utterances = lexicon.cols();

  LogitGradients lg;
  // The RD listener term is the LE one with the sign flipped.
  lg.listener = listener_logit_grad_le(d, prior, alpha);
  for (double& v : lg.listener.flat()) v = -v;

  std::vector<double> marginal(utterances, 0.0);
  for (std::size_t m = 0; m < meanings; ++m) {
    for (std::size_t u = 0; u < utterances; ++u) {
      marginal[u] += prior.probs[m] * d.s(m, u);
    }
  }
  for (std::size_t u = 0; u < utterances; ++u) {
    if (!(marginal[u] > 0.0)) {
      throw NumericalError("zero speaker marginal for utterance " +
                           std::to_string(u));
    }
  }

  // dF/dS(u|m) = P(m) (log S(u|m)/S(u) - alpha (log L - kappa) + 1)
  //            - sum_{m',u'} P(m') S(u'|m') d log S(u') / dS(u|m),
  // where d log S(u') / dS(u|m) = [u = u'] P(m) / S(u).
  lg.speaker = Matrix(meanings, utterances);
  std::vector<double> ds(utterances);
  for (std::size_t m = 0; m < meanings; ++m) {
    const double pm = prior.probs[m];
    for (std::size_t u = 0; u < utterances; ++u) {
      const double bracket = d.log_s(m, u) - std::log(marginal[u]) -
                             alpha * utility(d, kappa, use_cost, m, u) + 1.0;
      // sum_m' P(m') S(u|m') equals S(u), so this is P(m) S(u) / S(u).
      const double marginal_term = marginal[u] * (pm / marginal[u]);
      ds[u] = pm * bracket - marginal_term;
    }
    softmax_backward(d.s.row(m), ds, lg.speaker.row(m));
  }
  GdParams g = chain_to_params(lg, lexicon);
  check_finite(g);
  return g;
}

double objective_value(Objective objective, const GdParams& p,
                       const Matrix& lexicon, const rsa::Prior& prior,
                       std::span<const double> kappa, double alpha,
                       bool use_cost) {
  check_inputs(p, lexicon, prior, kappa);
  const Distributions d = distributions(p, lexicon, kappa, use_cost);
  const auto r = rsa::evaluate_objectives(
      ConditionalMatrix(Orientation::kSpeaker, d.s),
      ConditionalMatrix(Orientation::kListener, d.l), prior, kappa, alpha,
      use_cost);
  return objective == Objective::kLe ? r.g_alpha : r.f_alpha;
}

namespace {

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void step_params(GdParams& p, const GdParams& g, double scale) {
  axpy(scale, g.listener.f1_w.flat(), p.listener.f1_w.flat());
  axpy(scale, g.listener.f1_b, p.listener.f1_b);
  axpy(scale, g.listener.f2_w.flat(), p.listener.f2_w.flat());
  axpy(scale, g.listener.f2_b, p.listener.f2_b);
  axpy(scale, g.speaker.g1_w.flat(), p.speaker.g1_w.flat());
  axpy(scale, g.speaker.g1_b, p.speaker.g1_b);
  axpy(scale, g.speaker.g2_w.flat(), p.speaker.g2_w.flat());
  axpy(scale, g.speaker.g2_b, p.speaker.g2_b);
}

}  // namespace

GdResult run_gd(const Matrix& lexicon, const rsa::Prior& prior,
                std::span<const double> kappa, const GdConfig& cfg,
                const GdParams* warm_params) {
  cfg.validate();
  GdParams p = warm_params ? *warm_params
                           : init_gd_params(lexicon.rows(), lexicon.cols(),
                                            cfg.seed, cfg.init_range);
  check_inputs(p, lexicon, prior, kappa);

  auto report = [&](const GdParams& params) {
    Distributions d = distributions(params, lexicon, kappa, cfg.use_cost);
    ConditionalMatrix s(Orientation::kSpeaker, std::move(d.s));
    ConditionalMatrix l(Orientation::kListener, std::move(d.l));
    auto r = rsa::evaluate_objectives(s, l, prior, kappa, cfg.alpha,
                                      cfg.use_cost);
    return std::tuple(std::move(s), std::move(l), r);
  };

  GdResult out;
  std::tie(out.speaker, out.listener, out.initial) = report(p);
  const double direction = cfg.objective == Objective::kLe ? 1.0 : -1.0;
  for (int step = 0; step < cfg.steps; ++step) {
    const GdParams g =
        cfg.objective == Objective::kLe
            ? grad_le(p, lexicon, prior, kappa, cfg.alpha, cfg.use_cost)
            : grad_rd(p, lexicon, prior, kappa, cfg.alpha, cfg.use_cost);
    step_params(p, g, direction * cfg.lr);
    rsa::ObjectiveReport r;
    std::tie(out.speaker, out.listener, r) = report(p);
    const double value = cfg.objective == Objective::kLe ? r.g_alpha : r.f_alpha;
    if (!std::isfinite(value)) {
      throw NumericalError("non-finite objective at GD step " +
                           std::to_string(step + 1));
    }
    out.trace.push_back(r);
  }
  out.params = std::move(p);
  return out;
}

std::uint64_t context_seed(std::uint64_t global_seed,
                           std::span<const double> context_values) {
  std::uint64_t h = fnv1a("context");
  for (double v : context_values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = splitmix64(h ^ bits);
  }
  return derive_seed(global_seed, "gd-context", h);
}

std::vector<double> flatten(const GdParams& p) {
  std::vector<double> out;
  for (std::span<const double> block :
       {p.listener.f1_w.flat(), std::span<const double>(p.listener.f1_b),
        p.listener.f2_w.flat(), std::span<const double>(p.listener.f2_b),
        p.speaker.g1_w.flat(), std::span<const double>(p.speaker.g1_b),
        p.speaker.g2_w.flat(), std::span<const double>(p.speaker.g2_b)}) {
    out.insert(out.end(), block.begin(), block.end());
  }
  return out;
}

GdParams unflatten(std::span<const double> flat, std::size_t meanings,
                   std::size_t utterances) {
  GdParams p = zero_params(meanings, utterances);
  std::size_t pos = 0;
  for (std::span<double> block :
       {p.listener.f1_w.flat(), std::span<double>(p.listener.f1_b),
        p.listener.f2_w.flat(), std::span<double>(p.listener.f2_b),
        p.speaker.g1_w.flat(), std::span<double>(p.speaker.g1_b),
        p.speaker.g2_w.flat(), std::span<double>(p.speaker.g2_b)}) {
    if (pos + block.size() > flat.size()) throw UsageError("flat vector too short");
    std::copy_n(flat.begin() + pos, block.size(), block.begin());
    pos += block.size();
  }
  if (pos != flat.size()) throw UsageError("flat vector too long");
  return p;
}

BlockLocation locate(std::size_t flat_index, std::size_t meanings,
                     std::size_t utterances) {
  const std::size_t mu = meanings * utterances;
  const std::pair<std::string_view, std::size_t> blocks[] = {
      {"f1_w", meanings * meanings},     {"f1_b", meanings},
      {"f2_w", meanings * mu},           {"f2_b", meanings},
      {"g1_w", utterances * utterances}, {"g1_b", utterances},
      {"g2_w", utterances * mu},         {"g2_b", utterances}};
  std::size_t start = 0;
  for (const auto& [name, size] : blocks) {
    if (flat_index < start + size) return {name, flat_index - start};
    start += size;
  }
  throw UsageError("flat index out of range");
}

namespace {

struct FdAccumulator {
  FdReport report;
  void add(std::size_t i, double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kFdFloor});
    double rel = std::abs(analytic - numeric) / denom;
    if (std::isnan(rel)) rel = std::numeric_limits<double>::infinity();
    ++report.evaluated;
    if (report.evaluated == 1 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic = analytic;
      report.numeric = numeric;
    }
  }
};

}  // namespace

FdReport finite_diff_check(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, std::span<const double> analytic, double h,
    const std::function<std::string(std::size_t)>& describe) {
  if (!(h > 0.0)) throw UsageError("finite-difference step must be positive");
  if (x.size() != analytic.size()) {
    throw UsageError("finite_diff_check: gradient size mismatch");
  }
  FdAccumulator acc;
  std::vector<double> probe(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    acc.add(i, analytic[i], (up - down) / (2.0 * h));
  }
  if (acc.report.evaluated > 0 && describe) {
    acc.report.worst_location = describe(acc.report.worst_index);
  }
  return acc.report;
}

long double objective_value_extended(Objective objective,
                                     std::span<const long double> flat,
                                     const Matrix& lexicon,
                                     const rsa::Prior& prior,
                                     std::span<const double> kappa,
                                     double alpha, bool use_cost) {
  using ld = long double;
  const std::size_t nm = lexicon.rows();
  const std::size_t nu = lexicon.cols();
  const std::size_t mu = nm * nu;
  if (flat.size() != flatten(zero_params(nm, nu)).size()) {
    throw UsageError("objective_value_extended: parameter size mismatch");
  }
  // Block offsets in flatten() order.
  const ld* f1w = flat.data();
  const ld* f1b = f1w + nm * nm;
  const ld* f2w = f1b + nm;
  const ld* f2b = f2w + nm * mu;
  const ld* g1w = f2b + nm;
  const ld* g1b = g1w + nu * nu;
  const ld* g2w = g1b + nu;
  const ld* g2b = g2w + nu * mu;
  const auto ctx = lexicon.flat();

  auto log_softmax = [](std::vector<ld>& z) {
    ld hi = z[0];
    for (ld v : z) hi = std::max(hi, v);
    ld total = 0.0L;
    for (ld v : z) total += std::exp(v - hi);
    const ld lz = hi + std::log(total);
    for (ld& v : z) v -= lz;
  };

  // log l(m|u), indexed [u][m].
  std::vector<ld> f2(nm);
  for (std::size_t m = 0; m < nm; ++m) {
    ld a = f2b[m];
    for (std::size_t k = 0; k < mu; ++k) a += f2w[m * mu + k] * ctx[k];
    f2[m] = a;
  }
  std::vector<std::vector<ld>> log_l(nu, std::vector<ld>(nm));
  for (std::size_t u = 0; u < nu; ++u) {
    for (std::size_t m = 0; m < nm; ++m) {
      ld a = f1b[m];
      for (std::size_t j = 0; j < nm; ++j) a += f1w[m * nm + j] * lexicon(j, u);
      log_l[u][m] = a - f2[m] + std::log(static_cast<ld>(lexicon(m, u)));
    }
    log_softmax(log_l[u]);
  }

  // log s(u|m), indexed [m][u].
  std::vector<ld> g2(nu);
  for (std::size_t u = 0; u < nu; ++u) {
    ld a = g2b[u];
    for (std::size_t k = 0; k < mu; ++k) a += g2w[u * mu + k] * ctx[k];
    g2[u] = a;
  }
  std::vector<std::vector<ld>> log_s(nm, std::vector<ld>(nu));
  for (std::size_t m = 0; m < nm; ++m) {
    for (std::size_t u = 0; u < nu; ++u) {
      ld a = g1b[u];
      for (std::size_t j = 0; j < nu; ++j) a += g1w[u * nu + j] * lexicon(m, j);
      log_s[m][u] = a - g2[u] + std::log(static_cast<ld>(lexicon(m, u))) -
                    (use_cost ? static_cast<ld>(kappa[u]) : 0.0L);
    }
    log_softmax(log_s[m]);
  }

  std::vector<ld> marginal(nu, 0.0L);
  for (std::size_t m = 0; m < nm; ++m)
    for (std::size_t u = 0; u < nu; ++u) marginal[u] += prior.probs[m] * std::exp(log_s[m][u]);

  ld entropy = 0.0L, information = 0.0L, utility = 0.0L;
  for (std::size_t m = 0; m < nm; ++m) {
    for (std::size_t u = 0; u < nu; ++u) {
      const ld w = prior.probs[m] * std::exp(log_s[m][u]);
      entropy -= w * log_s[m][u];
      information += w * (log_s[m][u] - std::log(marginal[u]));
      utility += w * (log_l[u][m] - (use_cost ? static_cast<ld>(kappa[u]) : 0.0L));
    }
  }
  return objective == Objective::kLe ? entropy + alpha * utility
                                     : information - alpha * utility;
}

FdReport check_gradients(Objective objective, const GdParams& p,
                         const Matrix& lexicon, const rsa::Prior& prior,
                         std::span<const double> kappa, double alpha,
                         bool use_cost, double h) {
  if (!(h > 0.0)) throw UsageError("finite-difference step must be positive");
  check_inputs(p, lexicon, prior, kappa);
  const std::size_t meanings = lexicon.rows();
  const std::size_t utterances = lexicon.cols();
  const GdParams g =
      objective == Objective::kLe
          ? grad_le(p, lexicon, prior, kappa, alpha, use_cost)
          : grad_rd(p, lexicon, prior, kappa, alpha, use_cost);
  const std::vector<double> x = flatten(p);
  const std::vector<double> analytic = flatten(g);
  std::vector<long double> probe(x.begin(), x.end());
  const long double step = h;
  FdAccumulator acc;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const long double up = objective_value_extended(objective, probe, lexicon, prior, kappa, alpha, use_cost);
    probe[i] = x[i] - step;
    const long double down = objective_value_extended(objective, probe, lexicon, prior, kappa, alpha, use_cost);
    probe[i] = x[i];
    acc.add(i, analytic[i], static_cast<double>((up - down) / (2.0L * step)));
  }
  const BlockLocation loc = locate(acc.report.worst_index, meanings, utterances);
  acc.report.worst_location = std::string(loc.block) + "[" + std::to_string(loc.offset) + "]";
  return acc.report;
}

AuditInstance random_audit_instance(std::size_t meanings,
                                    std::size_t utterances,
                                    std::uint64_t seed) {
  Rng rng(derive_seed(seed, "audit-instance"));
  AuditInstance inst;
  inst.lexicon = Matrix(meanings, utterances);
  for (double& v : inst.lexicon.flat()) v = rng.uniform(0.05, 0.95);
  inst.prior.probs.resize(meanings);
  double total = 0.0;
  for (double& v : inst.prior.probs) {
    v = rng.uniform(0.5, 1.5);
    total += v;
  }
  for (double& v : inst.prior.probs) v /= total;
  std::vector<double> log_freq(utterances);
  for (double& v : log_freq) v = rng.uniform(-3.0, 0.0);
  double log_z = -std::numeric_limits<double>::infinity();
  {
    const double hi = *std::max_element(log_freq.begin(), log_freq.end());
    double acc = 0.0;
    for (double v : log_freq) acc += std::exp(v - hi);
    log_z = hi + std::log(acc);
  }
  inst.kappa.resize(utterances);
  for (std::size_t u = 0; u < utterances; ++u) inst.kappa[u] = log_z - log_freq[u];
  inst.params = zero_params(meanings, utterances);
  std::vector<double> flat = flatten(inst.params);
  for (double& v : flat) v = rng.uniform(-0.5, 0.5);
  inst.params = unflatten(flat, meanings, utterances);
  return inst;
}

std::vector<FdReport> audit_gradients(Objective objective, std::size_t instances,
                                      std::size_t meanings, std::size_t utterances,
                                      std::uint64_t seed, double alpha,
                                      bool use_cost, double h, ExecPolicy policy) {
  return map_indices<FdReport>(instances, policy, [&](std::size_t i) {
    const std::uint64_t s = instances == 1 ? seed : derive_seed(seed, "gradcheck", i);
    const auto inst = random_audit_instance(meanings, utterances, s);
    return check_gradients(objective, inst.params, inst.lexicon, inst.prior, inst.kappa, alpha,
                           use_cost, h);
  });
}

}  // namespace pragmachine::gd
