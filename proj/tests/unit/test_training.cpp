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

#include "helpers.hpp"
#include "pragmachine/error.hpp"
#include "pragmachine/random.hpp"
#include "pragmachine/training.hpp"

using namespace pragmachine;
using namespace pragmachine::training;
using corpus::Round;

namespace {

lexicon::LexiconParams random_params(std::size_t vocab, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  auto p = lexicon::make_params(lexicon::init_embeddings_random(vocab, dim, seed));
  for (double& v : p.embeddings.flat()) v = rng.uniform(-1.0, 1.0);
  for (double& v : p.score_weights.flat()) v = rng.uniform(-1.0, 1.0);
  for (double& v : p.score_bias) v = rng.uniform(-1.0, 1.0);
  return p;
}

Round make_round(std::size_t target, std::size_t utterance) {
  Round r;
  r.context = {color::ColorLuv{53.2, 175.0, 37.8}, color::ColorLuv{60.0, 120.0, 40.0},
               color::ColorLuv{32.3, -9.4, -130.3}};
  r.target_index = target;
  r.utterance_id = utterance;
  r.listener_choice = target;
  return r;
}

template <typename F>
double worst_fd_error(const lexicon::LexiconParams& p, F&& ll, std::span<const double> analytic, double h) {
  const auto x = flatten(p);
  double worst = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    auto q = p;
    auto xp = x;
    xp[j] += h;
    unflatten_into(xp, q);
    const double fp = ll(q);
    xp[j] -= 2 * h;
    unflatten_into(xp, q);
    const double fm = ll(q);
    const double numeric = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(numeric - analytic[j]) /
                                std::max({std::abs(numeric), std::abs(analytic[j]), 1e-6}));
  }
  return worst;
}

struct Dataset {
  corpus::Vocabulary vocab;
  corpus::CostTable costs;
  std::vector<Round> train, val;
};

const Dataset& small_dataset() {
  static const Dataset d = [] {
    Dataset out{corpus::default_vocabulary(), {}, {}, {}};
    out.costs = corpus::cost_from_frequency(out.vocab);
    corpus::SyntheticConfig cfg;
    cfg.n_games = 30;
    cfg.rounds_per_game = 20;
    cfg.seed = 3;
    auto rounds = corpus::generate_synthetic(cfg, out.vocab, corpus::default_prototypes(), out.costs);
    rounds = corpus::split_corpus(rounds, {0.8, 0.2, 0.0}, 1);
    out.train = corpus::filter_split(rounds, corpus::SplitTag::kTrain);
    out.val = corpus::filter_split(rounds, corpus::SplitTag::kVal);
    return out;
  }();
  return d;
}

}  // namespace

TEST_CASE("decontextualized gradient matches finite differences") {
  const auto p = random_params(4, 3, 1);
  const std::vector<double> kappa{0.2, 0.9, 1.4, 2.0};
  for (std::size_t u = 0; u < 4; ++u) {
    const auto r = make_round(u % 3, u);
    auto grad = lexicon::zeros_like(p);
    const double ll = decontextualized_log_lik(p, r, kappa, &grad);
    CHECK(ll < 0.0);
    const double err = worst_fd_error(p, [&](const auto& q) { return decontextualized_log_lik(q, r, kappa); },
                                      flatten(grad), 1e-6);
    CHECK(err <= 1e-5);
  }
}

TEST_CASE("supervised gradient matches finite differences") {
  const auto p = random_params(4, 3, 2);
  const std::vector<double> kappa{0.2, 0.9, 1.4, 2.0};
  for (double alpha : {0.5, 1.17, 3.0}) {
    for (std::size_t u = 0; u < 4; ++u) {
      const auto r = make_round((u + 1) % 3, u);
      auto grad = lexicon::zeros_like(p);
      supervised_log_lik(p, r, kappa, alpha, &grad);
      const double err = worst_fd_error(
          p, [&](const auto& q) { return supervised_log_lik(q, r, kappa, alpha); }, flatten(grad), 1e-6);
      INFO("alpha " << alpha << " utterance " << u);
      CHECK(err <= 1e-5);
    }
  }
}

TEST_CASE("gradients accumulate") {
  const auto p = random_params(4, 3, 3);
  const std::vector<double> kappa(4, 0.5);
  const auto a = make_round(0, 1), b = make_round(2, 3);
  auto both = lexicon::zeros_like(p), ga = lexicon::zeros_like(p), gb = lexicon::zeros_like(p);
  decontextualized_log_lik(p, a, kappa, &both);
  decontextualized_log_lik(p, b, kappa, &both);
  decontextualized_log_lik(p, a, kappa, &ga);
  decontextualized_log_lik(p, b, kappa, &gb);
  const auto fa = flatten(ga), fb = flatten(gb), fboth = flatten(both);
  for (std::size_t i = 0; i < fa.size(); ++i) CHECK(fboth[i] == doctest::Approx(fa[i] + fb[i]).epsilon(1e-12));
}

TEST_CASE("decontextualized likelihood ignores distractor order") {
  const auto p = random_params(4, 3, 4);
  const std::vector<double> kappa{0.1, 0.2, 0.3, 0.4};
  auto r = make_round(0, 2);
  auto swapped = r;
  std::swap(swapped.context[1], swapped.context[2]);
  auto moved = r;
  std::swap(moved.context[0], moved.context[2]);
  moved.target_index = 2;
  auto g1 = lexicon::zeros_like(p), g2 = lexicon::zeros_like(p), g3 = lexicon::zeros_like(p);
  const double a = decontextualized_log_lik(p, r, kappa, &g1);
  CHECK(decontextualized_log_lik(p, swapped, kappa, &g2) == a);
  CHECK(decontextualized_log_lik(p, moved, kappa, &g3) == a);
  CHECK(g1 == g2);
  CHECK(g1 == g3);
}

TEST_CASE("training on one example fits it") {
  const Dataset& d = small_dataset();
  std::vector<Round> one{d.train.front()};
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.epochs = 300;
  cfg.patience = 300;
  cfg.batch_size = 1;
  const auto p0 = lexicon::make_params(lexicon::init_embeddings_random(d.vocab.size(), 8, 1));
  const auto result = train_lexicon_decontextualized(one, {}, d.costs, p0, cfg);
  CHECK(std::exp(decontextualized_log_lik(result.params, one[0], d.costs.kappa)) >= 0.95);
}

TEST_CASE("zero epochs return the initial parameters") {
  const Dataset& d = small_dataset();
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto p0 = lexicon::make_params(lexicon::init_embeddings_random(d.vocab.size(), 6, 2));
  const auto dec = train_lexicon_decontextualized(d.train, d.val, d.costs, p0, cfg);
  CHECK(dec.params == p0);
  REQUIRE(dec.history.size() == 1);
  CHECK(dec.history[0].epoch == 0);
  CHECK(dec.best_epoch == 0);
  CHECK(train_sl_supervised(d.train, d.val, d.costs, p0, 1.17, cfg).params == p0);
}

TEST_CASE("training is deterministic and keeps the best validation checkpoint") {
  const Dataset& d = small_dataset();
  TrainConfig cfg;
  cfg.lr = 0.02;
  cfg.epochs = 12;
  cfg.patience = 3;
  cfg.batch_size = 32;
  cfg.seed = 5;
  const auto p0 = lexicon::make_params(lexicon::init_embeddings_random(d.vocab.size(), 6, 3));
  const auto a = train_lexicon_decontextualized(d.train, d.val, d.costs, p0, cfg);
  const auto b = train_lexicon_decontextualized(d.train, d.val, d.costs, p0, cfg);
  CHECK(a.params == b.params);
  CHECK(a.history == b.history);
  CHECK(a.history.size() >= 2);
  std::size_t best = 0;
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].epoch == int(i));
    if (a.history[i].val_ll > a.history[best].val_ll) best = i;
  }
  CHECK(a.best_epoch == int(best));
  CHECK(mean_decontextualized_log_lik(a.params, d.val, d.costs.kappa) == a.history[best].val_ll);
  CHECK(a.history.back().val_ll > a.history.front().val_ll);

  cfg.seed = 6;
  CHECK_FALSE(train_lexicon_decontextualized(d.train, d.val, d.costs, p0, cfg).params == a.params);
}

TEST_CASE("early stopping halts after patience epochs without improvement") {
  const Dataset& d = small_dataset();
  TrainConfig cfg;
  cfg.lr = 2.0;
  cfg.optimizer = Optimizer::kPlainGd;
  cfg.epochs = 40;
  cfg.patience = 2;
  const auto p0 = lexicon::make_params(lexicon::init_embeddings_random(d.vocab.size(), 4, 4));
  const auto r = train_lexicon_decontextualized(d.train, d.val, d.costs, p0, cfg);
  const int last = r.history.back().epoch;
  CHECK(last < cfg.epochs);
  CHECK(last - r.best_epoch == cfg.patience);
}

TEST_CASE("supervised training improves the pragmatic likelihood") {
  const Dataset& d = small_dataset();
  TrainConfig cfg;
  cfg.lr = 0.02;
  cfg.epochs = 5;
  cfg.batch_size = 32;
  const auto p0 = lexicon::make_params(lexicon::init_embeddings_random(d.vocab.size(), 6, 5));
  const auto r = train_sl_supervised(d.train, d.val, d.costs, p0, 1.17, cfg);
  CHECK(r.history[static_cast<std::size_t>(r.best_epoch)].val_ll > r.history[0].val_ll);
  CHECK(mean_supervised_log_lik(r.params, d.val, d.costs.kappa, 1.17) ==
        r.history[static_cast<std::size_t>(r.best_epoch)].val_ll);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = {};
  cfg.patience = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = {};
  cfg.epochs = -1;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  CHECK(parse_optimizer("adam") == Optimizer::kAdaptiveMoments);
  CHECK(parse_optimizer("plain-gd") == Optimizer::kPlainGd);
  CHECK_FALSE(parse_optimizer("sgd-momentum").has_value());
}

TEST_CASE("history CSV round trip") {
  TempDir dir;
  const std::vector<EpochRecord> h{{0, -3.1, -3.25}, {1, -2.0 / 3.0, -0.1234567890123456789}};
  save_history_csv(h, dir.file("h.csv"));
  CHECK(read_text(dir.file("h.csv")).rfind("epoch,train_ll,val_ll\n", 0) == 0);
  CHECK(load_history_csv(dir.file("h.csv")) == h);
  CHECK_THROWS_AS(load_history_csv(dir.write("bad.csv", "epoch,train_ll,val_ll\n1,abc,2\n")), DataError);
}
