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

#include <doctest.h>

#include <cmath>

#include "pragmachine/error.hpp"
#include "pragmachine/gdprag.hpp"
#include "pragmachine/random.hpp"
#include "tabular_oracle.hpp"

using namespace pragmachine;
using namespace pragmachine::gd;

namespace {

GdParams random_params(std::size_t m, std::size_t u, std::uint64_t seed, double scale) {
  Rng rng(seed);
  GdParams p = zero_params(m, u);
  auto flat = flatten(p);
  for (double& v : flat) v = rng.uniform(-scale, scale);
  return unflatten(flat, m, u);
}

double max_diff(const rsa::ConditionalMatrix& a, const rsa::ConditionalMatrix& b) {
  return max_abs_diff(a.probs(), b.probs());
}

}  // namespace

TEST_CASE("initialization") {
  const auto p = init_gd_params(3, 5, 42);
  CHECK(p == init_gd_params(3, 5, 42));
  CHECK_FALSE(p == init_gd_params(3, 5, 43));
  for (const auto* b : {&p.listener.f1_b, &p.listener.f2_b, &p.speaker.g1_b, &p.speaker.g2_b})
    for (double v : *b) CHECK(v == 0.0);
  for (const Matrix* w : {&p.listener.f1_w, &p.listener.f2_w, &p.speaker.g1_w, &p.speaker.g2_w})
    for (double v : w->flat()) {
      CHECK(v > -0.01);
      CHECK(v < 0.01);
    }
  CHECK(p.listener.f2_w.cols() == 15);
  CHECK(p.speaker.g2_w.rows() == 5);
  CHECK_THROWS_AS(init_gd_params(3, 1, 1), UsageError);
}

TEST_CASE("zero parameters reduce to the base agents") {
  const auto inst = random_audit_instance(3, 6, 1);
  const auto zero = zero_params(3, 6);
  const auto l = gd_listener_dist(zero.listener, inst.lexicon);
  const auto s = gd_speaker_dist(zero.speaker, inst.lexicon, inst.kappa, true);
  CHECK(max_diff(l, rsa::literal_listener(inst.lexicon, rsa::Prior::uniform(3))) <= 1e-12);
  CHECK(max_diff(s, rsa::base_speaker(inst.lexicon, inst.kappa)) <= 1e-12);
  const auto s_free = gd_speaker_dist(zero.speaker, inst.lexicon, inst.kappa, false);
  CHECK(max_diff(s_free, rsa::base_speaker(inst.lexicon, std::vector<double>(6, 0.0))) <= 1e-12);
}

TEST_CASE("context encoder shifts leave distributions unchanged") {
  const auto inst = random_audit_instance(3, 5, 2);
  auto p = random_params(3, 5, 3, 0.5);
  const auto l = gd_listener_dist(p.listener, inst.lexicon);
  const auto s = gd_speaker_dist(p.speaker, inst.lexicon, inst.kappa, true);
  for (double& b : p.listener.f2_b) b += 2.5;
  for (double& b : p.speaker.g2_b) b -= 1.75;
  CHECK(max_diff(l, gd_listener_dist(p.listener, inst.lexicon)) <= 1e-12);
  CHECK(max_diff(s, gd_speaker_dist(p.speaker, inst.lexicon, inst.kappa, true)) <= 1e-12);
  CHECK(l.stochasticity_error() <= 1e-12);
  CHECK(s.stochasticity_error() <= 1e-12);
}

TEST_CASE("uniform speaker at alpha zero has zero speaker gradient") {
  const Matrix lex(3, 4, 0.6);
  const std::vector<double> kappa(4, 0.0);
  const auto p = zero_params(3, 4);
  for (auto fn : {&grad_le, &grad_rd}) {
    const auto g = fn(p, lex, rsa::Prior::uniform(3), kappa, 0.0, true);
    for (double v : flatten(g)) CHECK(std::abs(v) <= 1e-15);
  }
}

TEST_CASE("listener gradient is linear in alpha and flips sign for RD") {
  const auto inst = random_audit_instance(3, 5, 4);
  const auto one = grad_le(inst.params, inst.lexicon, inst.prior, inst.kappa, 1.0, true);
  const auto two = grad_le(inst.params, inst.lexicon, inst.prior, inst.kappa, 2.0, true);
  const auto rd = grad_rd(inst.params, inst.lexicon, inst.prior, inst.kappa, 2.0, true);
  auto a = flatten(GdParams{one.listener, zero_params(3, 5).speaker});
  auto b = flatten(GdParams{two.listener, zero_params(3, 5).speaker});
  auto c = flatten(GdParams{rd.listener, zero_params(3, 5).speaker});
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(b[i] == doctest::Approx(2.0 * a[i]).epsilon(1e-12));
    CHECK(c[i] == -b[i]);
  }
}

TEST_CASE("analytic gradients match finite differences") {
  for (auto [objective, seed] : {std::pair{Objective::kLe, 7}, std::pair{Objective::kRd, 11},
                                 std::pair{Objective::kLe, 3}, std::pair{Objective::kRd, 3}}) {
    const auto inst = random_audit_instance(3, 5, seed);
    const auto r = check_gradients(objective, inst.params, inst.lexicon, inst.prior, inst.kappa, 1.17, true, 1e-5);
    INFO(objective_name(objective) << " seed " << seed << " worst at " << r.worst_location);
    CHECK(r.max_rel_error <= 1e-5);
    CHECK(r.evaluated == flatten(inst.params).size());
  }
}

TEST_CASE("gradients over many instances and settings") {
  double worst = 0.0;
  int n = 0;
  for (std::uint64_t seed = 100; seed < 125; ++seed) {
    const auto inst = random_audit_instance(3, 4, seed);
    for (double alpha : {0.0, 1.0, 1.17, 3.0}) {
      for (bool use_cost : {false, true}) {
        for (auto objective : {Objective::kLe, Objective::kRd}) {
          const auto r = check_gradients(objective, inst.params, inst.lexicon, inst.prior, inst.kappa, alpha,
                                         use_cost, 1e-5);
          worst = std::max(worst, r.max_rel_error);
          ++n;
        }
      }
    }
  }
  CHECK(n == 400);
  CHECK(worst <= 1e-5);
}

TEST_CASE("extended-precision objective agrees with the double objective") {
  for (std::uint64_t seed = 40; seed < 50; ++seed) {
    const auto inst = random_audit_instance(4, 6, seed);
    const std::vector<double> x = flatten(inst.params);
    const std::vector<long double> xl(x.begin(), x.end());
    for (auto objective : {Objective::kLe, Objective::kRd}) {
      for (bool use_cost : {false, true}) {
        const double d = objective_value(objective, inst.params, inst.lexicon, inst.prior, inst.kappa, 1.17, use_cost);
        const long double e =
            objective_value_extended(objective, xl, inst.lexicon, inst.prior, inst.kappa, 1.17, use_cost);
        CHECK(static_cast<double>(e) == doctest::Approx(d).epsilon(1e-12));
      }
    }
  }
  const auto inst = random_audit_instance(3, 4, 1);
  const std::vector<long double> short_flat(3, 0.0L);
  CHECK_THROWS_AS(objective_value_extended(Objective::kLe, short_flat, inst.lexicon, inst.prior, inst.kappa, 1.0, true),
                  UsageError);
}

TEST_CASE("gradient audit parallel path matches serial") {
  const auto par = audit_gradients(Objective::kRd, 12, 3, 5, 9, 1.17, true, 1e-5, ExecPolicy::kParallel);
  const auto ser = audit_gradients(Objective::kRd, 12, 3, 5, 9, 1.17, true, 1e-5, ExecPolicy::kSerial);
  REQUIRE(par.size() == 12);
  for (std::size_t i = 0; i < par.size(); ++i) {
    CHECK(par[i].max_rel_error == ser[i].max_rel_error);
    CHECK(par[i].worst_location == ser[i].worst_location);
  }
  const auto inst = random_audit_instance(3, 5, derive_seed(9, "gradcheck", 4));
  const auto one = check_gradients(Objective::kRd, inst.params, inst.lexicon, inst.prior, inst.kappa, 1.17, true, 1e-5);
  CHECK(one.max_rel_error == par[4].max_rel_error);
}

TEST_CASE("central differences are second order") {
  auto f = [](std::span<const double> x) { return 3.0 * x[0] * x[0] + x[0]; };
  const std::vector<double> x{0.7};
  const std::vector<double> analytic{6.0 * 0.7 + 1.0 + 1e-3};
  // A perturbed analytic value is reported at its true relative size.
  const auto r = finite_diff_check(f, x, analytic, 1e-4);
  CHECK(r.max_rel_error == doctest::Approx(1e-3 / (6.0 * 0.7 + 1.0 + 1e-3)).epsilon(1e-6));
  auto cubic = [](std::span<const double> x) { return x[0] * x[0] * x[0]; };
  const std::vector<double> exact{3.0 * 0.49};
  const double e1 = finite_diff_check(cubic, x, exact, 1e-2).max_rel_error;
  const double e2 = finite_diff_check(cubic, x, exact, 5e-3).max_rel_error;
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(1e-3));
}

TEST_CASE("run_gd step contract") {
  const auto inst = random_audit_instance(3, 5, 5);
  GdConfig cfg;
  cfg.seed = 9;
  cfg.steps = 1;
  const auto one = run_gd(inst.lexicon, inst.prior, inst.kappa, cfg);
  REQUIRE(one.trace.size() == 1);
  auto manual = init_gd_params(3, 5, 9);
  const auto g = grad_le(manual, inst.lexicon, inst.prior, inst.kappa, cfg.alpha, true);
  auto flat = flatten(manual);
  const auto gf = flatten(g);
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += cfg.lr * gf[i];
  CHECK(one.params == unflatten(flat, 3, 5));

  cfg.steps = 0;
  CHECK_THROWS_AS(run_gd(inst.lexicon, inst.prior, inst.kappa, cfg), UsageError);
  cfg.steps = 9;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(run_gd(inst.lexicon, inst.prior, inst.kappa, cfg), UsageError);
}

TEST_CASE("run_gd defaults and determinism") {
  const GdConfig defaults;
  CHECK(defaults.steps == 9);
  CHECK(defaults.lr == 0.357);
  CHECK(defaults.alpha == 1.17);
  CHECK(defaults.objective == Objective::kLe);
  const auto inst = random_audit_instance(3, 8, 6);
  const auto a = run_gd(inst.lexicon, inst.prior, inst.kappa, defaults);
  const auto b = run_gd(inst.lexicon, inst.prior, inst.kappa, defaults);
  CHECK(a.trace == b.trace);
  CHECK(a.speaker == b.speaker);
  CHECK(a.trace.size() == 9);
  CHECK(a.speaker.stochasticity_error() <= 1e-12);
  CHECK(a.listener.stochasticity_error() <= 1e-12);
}

TEST_CASE("processing order does not matter without warm start") {
  const auto x = random_audit_instance(3, 5, 20);
  const auto y = random_audit_instance(3, 5, 21);
  GdConfig cfg;
  auto seeded = [&](const Matrix& lex) {
    GdConfig c = cfg;
    c.seed = context_seed(1, lex.flat());
    return run_gd(lex, x.prior, x.kappa, c);
  };
  const auto x1 = seeded(x.lexicon);
  const auto y1 = seeded(y.lexicon);
  const auto y2 = seeded(y.lexicon);
  const auto x2 = seeded(x.lexicon);
  CHECK(x1.trace == x2.trace);
  CHECK(y1.trace == y2.trace);
  CHECK(context_seed(1, x.lexicon.flat()) != context_seed(1, y.lexicon.flat()));
  CHECK(context_seed(1, x.lexicon.flat()) != context_seed(2, x.lexicon.flat()));

  const auto warm = run_gd(y.lexicon, x.prior, x.kappa, cfg, &x1.params);
  CHECK_FALSE(warm.trace == run_gd(y.lexicon, x.prior, x.kappa, cfg).trace);
}

TEST_CASE("small-step ascent improves the objective") {
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto inst = random_audit_instance(3, 5, 1000 + seed);
    GdConfig cfg;
    cfg.lr = 0.05;
    cfg.seed = seed;
    const auto r = run_gd(inst.lexicon, inst.prior, inst.kappa, cfg);
    improved += r.trace.back().g_alpha >= r.initial.g_alpha;
  }
  CHECK(improved >= 190);
}

TEST_CASE("flat layout") {
  const auto p = random_params(3, 4, 8, 1.0);
  CHECK(unflatten(flatten(p), 3, 4) == p);
  CHECK(locate(0, 3, 4).block == "f1_w");
  CHECK(locate(9, 3, 4).block == "f1_b");
  CHECK(locate(12, 3, 4).block == "f2_w");
  CHECK(locate(12 + 36, 3, 4).block == "f2_b");
  CHECK(locate(12 + 36 + 3, 3, 4).block == "g1_w");
  const auto last = locate(flatten(p).size() - 1, 3, 4);
  CHECK(last.block == "g2_b");
  CHECK(last.offset == 3);
}

TEST_CASE("tabular GD reaches the grid-search maximum on 2x2 instances") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto t = testing::random_tabular_instance(seed);
    const double best = testing::grid_maximum(t);
    const auto run = testing::tabular_gd(t, 2000, 0.1, seed + 1000);
    worst = std::max(worst, best - run.final_value);
  }
  CHECK(worst <= 1e-3);
}
