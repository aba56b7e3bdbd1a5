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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pragmachine/matrix.hpp"
#include "pragmachine/parallel.hpp"
#include "pragmachine/rsa.hpp"

// Gradient-based pragmatic agents. Per context, a listener with encoders
// f1: R^|M| -> R^|M| (applied to L_u) and f2: R^{|M||U|} -> R^|M| (applied to
// L_C), and a speaker with g1: R^|U| -> R^|U| (applied to L_m) and
// g2: R^{|M||U|} -> R^|U| (applied to L_C). Each encoder is one affine layer.
//
//   l(m|u) ∝ exp(f1(L_u)_m - f2(L_C)_m + log L(u,m))
//   s(u|m) ∝ exp(g1(L_m)_u - g2(L_C)_u + log L(u,m) - kappa(u) [use_cost])
//
// The lexicon is frozen; only the encoder parameters move.
namespace pragmachine::gd {

struct ListenerParams {
  Matrix f1_w;  // |M| x |M|
  std::vector<double> f1_b;
  Matrix f2_w;  // |M| x |M||U|
  std::vector<double> f2_b;
  bool operator==(const ListenerParams&) const = default;
};

struct SpeakerParams {
  Matrix g1_w;  // |U| x |U|
  std::vector<double> g1_b;
  Matrix g2_w;  // |U| x |M||U|
  std::vector<double> g2_b;
  bool operator==(const SpeakerParams&) const = default;
};

struct GdParams {
  ListenerParams listener;
  SpeakerParams speaker;
  std::size_t num_meanings() const { return listener.f1_w.rows(); }
  std::size_t num_utterances() const { return speaker.g1_w.rows(); }
  bool operator==(const GdParams&) const = default;
};

enum class Objective { kLe, kRd };
std::string_view objective_name(Objective o);
std::optional<Objective> parse_objective(std::string_view name);

inline constexpr int kDefaultSteps = 9;
inline constexpr double kDefaultLearningRate = 0.357;
inline constexpr double kDefaultAlpha = 1.17;
inline constexpr double kDefaultInitRange = 0.01;

struct GdConfig {
  int steps = kDefaultSteps;
  double lr = kDefaultLearningRate;
  double alpha = kDefaultAlpha;
  Objective objective = Objective::kLe;
  double init_range = kDefaultInitRange;
  std::uint64_t seed = 0;
  bool use_cost = true;
  // Throws UsageError when steps < 1, lr <= 0, alpha < 0 or init_range < 0.
  void validate() const;
};

GdParams zero_params(std::size_t meanings, std::size_t utterances);
// Weights i.i.d. uniform(-init_range, init_range), biases exactly 0.
GdParams init_gd_params(std::size_t meanings, std::size_t utterances,
                        std::uint64_t seed,
                        double init_range = kDefaultInitRange);

rsa::ConditionalMatrix gd_listener_dist(const ListenerParams& p,
                                        const Matrix& lexicon);
rsa::ConditionalMatrix gd_speaker_dist(const SpeakerParams& p,
                                       const Matrix& lexicon,
                                       std::span<const double> kappa,
                                       bool use_cost);

// Gradient of G_alpha (to be ascended) with respect to every parameter.
GdParams grad_le(const GdParams& p, const Matrix& lexicon,
                 const rsa::Prior& prior, std::span<const double> kappa,
                 double alpha, bool use_cost);
// Gradient of F_alpha (to be descended) with respect to every parameter.
GdParams grad_rd(const GdParams& p, const Matrix& lexicon,
                 const rsa::Prior& prior, std::span<const double> kappa,
                 double alpha, bool use_cost);

// G_alpha for kLe, F_alpha for kRd, at the distributions p induces.
double objective_value(Objective objective, const GdParams& p,
                       const Matrix& lexicon, const rsa::Prior& prior,
                       std::span<const double> kappa, double alpha,
                       bool use_cost);

struct GdResult {
  rsa::ConditionalMatrix speaker;
  rsa::ConditionalMatrix listener;
  rsa::ObjectiveReport initial;
  // One report per step, after that step's update.
  std::vector<rsa::ObjectiveReport> trace;
  GdParams params;
};

// `steps` simultaneous plain-gradient updates of listener and speaker:
// ascent on G_alpha (kLe) or descent on F_alpha (kRd). Parameters come from
// init_gd_params(cfg.seed) unless `warm_params` is given. Throws
// NumericalError with the step index on a non-finite objective.
GdResult run_gd(const Matrix& lexicon, const rsa::Prior& prior,
                std::span<const double> kappa, const GdConfig& cfg,
                const GdParams* warm_params = nullptr);

// Seed for a context's re-initialized parameters.
std::uint64_t context_seed(std::uint64_t global_seed,
                           std::span<const double> context_values);

// Flat view in block order f1_w, f1_b, f2_w, f2_b, g1_w, g1_b, g2_w, g2_b.
std::vector<double> flatten(const GdParams& p);
GdParams unflatten(std::span<const double> flat, std::size_t meanings,
                   std::size_t utterances);
struct BlockLocation {
  std::string_view block;
  std::size_t offset = 0;
};
BlockLocation locate(std::size_t flat_index, std::size_t meanings,
                     std::size_t utterances);

// Relative error |a - n| / max(|a|, |n|, kFdFloor) per component.
inline constexpr double kFdFloor = 1e-6;

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::string worst_location;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t evaluated = 0;
};

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h against `analytic`
// for every component. `describe` names a component for the report.
FdReport finite_diff_check(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, std::span<const double> analytic, double h,
    const std::function<std::string(std::size_t)>& describe = {});

// G_alpha or F_alpha evaluated in long double from flat parameters. An
// independent forward pass used as the numeric side of check_gradients, so
// central differences at h = 1e-5 are not limited by double rounding.
long double objective_value_extended(Objective objective,
                                     std::span<const long double> flat,
                                     const Matrix& lexicon,
                                     const rsa::Prior& prior,
                                     std::span<const double> kappa,
                                     double alpha, bool use_cost);

// Finite-difference audit of grad_le / grad_rd over every parameter block;
// the numeric derivative uses objective_value_extended.
FdReport check_gradients(Objective objective, const GdParams& p,
                         const Matrix& lexicon, const rsa::Prior& prior,
                         std::span<const double> kappa, double alpha,
                         bool use_cost, double h);

// A random audit instance: lexicon values uniform(0.05, 0.95), random prior
// and costs, parameters (weights and biases) uniform(-0.5, 0.5).
struct AuditInstance {
  Matrix lexicon;
  rsa::Prior prior;
  std::vector<double> kappa;
  GdParams params;
};
AuditInstance random_audit_instance(std::size_t meanings,
                                    std::size_t utterances,
                                    std::uint64_t seed);

// check_gradients on `instances` random audit instances; instance i uses
// derive_seed(seed, "gradcheck", i), or `seed` itself when instances is 1.
std::vector<FdReport> audit_gradients(Objective objective, std::size_t instances,
                                      std::size_t meanings, std::size_t utterances,
                                      std::uint64_t seed, double alpha,
                                      bool use_cost, double h,
                                      ExecPolicy policy = ExecPolicy::kParallel);

}  // namespace pragmachine::gd
