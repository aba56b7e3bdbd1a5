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
#include <map>

#include "helpers.hpp"
#include "pragmachine/error.hpp"
#include "pragmachine/eval.hpp"
#include "pragmachine/random.hpp"
#include "pragmachine/training.hpp"

using namespace pragmachine;
using namespace pragmachine::eval;
using corpus::Round;

namespace {

struct Fixture {
  corpus::Vocabulary vocab = corpus::default_vocabulary();
  corpus::CostTable costs;
  lexicon::LexiconParams ssl, sl;
  std::vector<Round> rounds;

  Fixture() {
    costs = corpus::cost_from_frequency(vocab);
    corpus::SyntheticConfig cfg;
    cfg.n_games = 12;
    cfg.rounds_per_game = 10;
    cfg.seed = 21;
    rounds = corpus::generate_synthetic(cfg, vocab, corpus::default_prototypes(), costs);
    rounds = corpus::split_corpus(rounds, {0.5, 0.25, 0.25}, 2);
    training::TrainConfig tc;
    tc.lr = 0.05;
    tc.epochs = 3;
    const auto p0 = lexicon::make_params(lexicon::init_embeddings_random(vocab.size(), 6, 1));
    ssl = training::train_lexicon_decontextualized(rounds, {}, costs, p0, tc).params;
    sl = training::train_sl_supervised(rounds, {}, costs, p0, 1.17, tc).params;
  }
  Artifacts artifacts() const { return {&ssl, &sl, &costs}; }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

const std::vector<Model> kAll{Model::kBase, Model::kSslAm, Model::kSslGd, Model::kSl};

}  // namespace

TEST_CASE("model names") {
  CHECK(parse_model("ssl-am") == Model::kSslAm);
  CHECK(parse_model("gd") == Model::kSslGd);
  CHECK_FALSE(parse_model("rd").has_value());
  CHECK(parse_model_list("base,am,gd") == std::vector<Model>{Model::kBase, Model::kSslAm, Model::kSslGd});
  CHECK_THROWS(parse_model_list("base,nope"));
  for (Model m : kAll) CHECK(parse_model(model_name(m)) == m);
}

TEST_CASE("agents match the underlying constructions") {
  const Fixture& f = fixture();
  const EvalConfig cfg;
  const auto& ctx = f.rounds[0].context;
  const auto lex = lexicon::context_lexicon(f.ssl, f.vocab, ctx).values;
  const auto base = build_agents(Model::kBase, ctx, f.artifacts(), cfg);
  CHECK(base.listener == rsa::literal_listener(lex, rsa::Prior::uniform(3)));
  CHECK(base.speaker == rsa::base_speaker(lex, f.costs.kappa));
  const auto am = build_agents(Model::kSslAm, ctx, f.artifacts(), cfg);
  const auto ref = rsa::run_am(lex, rsa::Prior::uniform(3), f.costs.kappa, cfg.am);
  CHECK(am.listener == ref.listener);
  CHECK(am.speaker == ref.speaker);
  const auto gd1 = build_agents(Model::kSslGd, ctx, f.artifacts(), cfg);
  const auto gd2 = build_agents(Model::kSslGd, ctx, f.artifacts(), cfg);
  CHECK(gd1.trace == gd2.trace);
  CHECK(gd1.trace.size() == std::size_t(cfg.gd.steps));
  const auto slm = build_agents(Model::kSl, ctx, f.artifacts(), cfg);
  const auto sl_lex = lexicon::context_lexicon(f.sl, f.vocab, ctx).values;
  CHECK(slm.listener == rsa::run_am(sl_lex, rsa::Prior::uniform(3), f.costs.kappa, cfg.am).listener);
}

TEST_CASE("a model agrees with choices it made itself") {
  const Fixture& f = fixture();
  const EvalConfig cfg;
  for (Model m : kAll) {
    std::vector<Round> own;
    for (const auto& r : f.rounds) {
      Round c = r;
      const auto agents = build_agents(m, r.context, f.artifacts(), cfg);
      c.utterance_id = rsa::argmax(agents.speaker.row(r.target_index));
      c.listener_choice = rsa::argmax(agents.listener.row(c.utterance_id));
      own.push_back(c);
    }
    const auto result = evaluate({m}, own, f.artifacts(), cfg);
    const Bucket* all = result.report.find(m, std::nullopt, std::nullopt);
    REQUIRE(all != nullptr);
    CHECK(all->listener_match_rate() == 1.0);
    CHECK(all->speaker_match_rate() == 1.0);
  }
}

TEST_CASE("aggregation counts and rates") {
  const Fixture& f = fixture();
  EvalConfig cfg;
  const auto result = evaluate(kAll, f.rounds, f.artifacts(), cfg);
  CHECK(result.rounds.size() == kAll.size() * f.rounds.size());
  for (Model m : kAll) {
    const Bucket* all = result.report.find(m, std::nullopt, std::nullopt);
    REQUIRE(all != nullptr);
    CHECK(all->n_rounds == f.rounds.size());
    std::size_t by_condition = 0, by_split = 0, errors = 0;
    for (auto c : {color::Condition::kFar, color::Condition::kSplit, color::Condition::kClose}) {
      const Bucket* b = result.report.find(m, c, std::nullopt);
      REQUIRE(b != nullptr);
      by_condition += b->n_rounds;
      errors += b->listener_errors;
    }
    for (auto s : {corpus::SplitTag::kTrain, corpus::SplitTag::kVal, corpus::SplitTag::kTest}) {
      const Bucket* b = result.report.find(m, std::nullopt, s);
      REQUIRE(b != nullptr);
      by_split += b->n_rounds;
    }
    CHECK(by_condition == all->n_rounds);
    CHECK(by_split == all->n_rounds);
    CHECK(errors == all->listener_errors);
    CHECK(*all->listener_accuracy() == doctest::Approx(1.0 - *all->listener_error_rate()).epsilon(1e-15));
  }
  std::size_t base_errors = 0;
  for (const auto& r : f.rounds) {
    const auto lex = lexicon::context_lexicon(f.ssl, f.vocab, r.context).values;
    const auto l0 = rsa::literal_listener(lex, rsa::Prior::uniform(3));
    base_errors += rsa::argmax(l0.row(r.utterance_id)) != r.target_index;
  }
  CHECK(result.report.find(Model::kBase, std::nullopt, std::nullopt)->listener_errors == base_errors);
}

TEST_CASE("parallel and serial evaluation agree exactly") {
  const Fixture& f = fixture();
  EvalConfig cfg;
  cfg.policy = ExecPolicy::kSerial;
  const auto serial = evaluate(kAll, f.rounds, f.artifacts(), cfg);
  cfg.policy = ExecPolicy::kParallel;
  const auto parallel = evaluate(kAll, f.rounds, f.artifacts(), cfg);
  CHECK(serial.rounds == parallel.rounds);
  CHECK(serial.report == parallel.report);
}

TEST_CASE("GD outcomes do not depend on round order") {
  const Fixture& f = fixture();
  const EvalConfig cfg;
  auto reversed = f.rounds;
  std::reverse(reversed.begin(), reversed.end());
  const auto a = evaluate({Model::kSslGd}, f.rounds, f.artifacts(), cfg);
  const auto b = evaluate({Model::kSslGd}, reversed, f.artifacts(), cfg);
  for (std::size_t i = 0; i < a.rounds.size(); ++i) CHECK(a.rounds[i] == b.rounds[a.rounds.size() - 1 - i]);
}

TEST_CASE("evaluation leaves artifacts untouched") {
  const Fixture& f = fixture();
  const auto ssl = f.ssl;
  const auto costs = f.costs;
  evaluate(kAll, f.rounds, f.artifacts(), EvalConfig{});
  CHECK(f.ssl == ssl);
  CHECK(f.costs.kappa == costs.kappa);
}

TEST_CASE("missing artifacts are reported by model") {
  const Fixture& f = fixture();
  const Artifacts no_sl{&f.ssl, nullptr, &f.costs};
  try {
    evaluate({Model::kBase, Model::kSl}, f.rounds, no_sl, EvalConfig{});
    FAIL("expected error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()) == "missing artifact: sl lexicon");
  }
  const Artifacts none{nullptr, nullptr, &f.costs};
  CHECK_THROWS_AS(evaluate({Model::kSslAm}, f.rounds, none, EvalConfig{}), DataError);
}

TEST_CASE("empty buckets have null rates") {
  std::vector<RoundOutcome> outcomes(3);
  for (auto& o : outcomes) o.condition = color::Condition::kFar;
  outcomes[0].listener_err = true;
  const auto report = aggregate(outcomes);
  const Bucket* close = report.find(Model::kBase, color::Condition::kClose, std::nullopt);
  REQUIRE(close != nullptr);
  CHECK(close->n_rounds == 0);
  CHECK_FALSE(close->listener_error_rate().has_value());
  CHECK_FALSE(close->listener_accuracy().has_value());
  const Bucket* far = report.find(Model::kBase, color::Condition::kFar, std::nullopt);
  CHECK(*far->listener_error_rate() == doctest::Approx(1.0 / 3).epsilon(1e-15));
  const auto json = report_to_json(report);
  CHECK(json.find("null") != std::string::npos);
  CHECK(report_from_json(json) == report);
}

TEST_CASE("summary and per-round files reproduce the report") {
  const Fixture& f = fixture();
  TempDir dir;
  const auto result = evaluate(kAll, f.rounds, f.artifacts(), EvalConfig{});
  emit_report(result, dir.file("summary.json"), dir.file("per_round.csv"));
  CHECK(load_report(dir.file("summary.json")) == result.report);
  CHECK(read_text(dir.file("per_round.csv"))
            .rfind("game_id,round_idx,condition,model,listener_err,listener_match,speaker_match\n", 0) == 0);
  const auto rows = load_per_round_csv(dir.file("per_round.csv"));
  REQUIRE(rows.size() == result.rounds.size());
  const auto again = aggregate(rows);
  for (Model m : kAll) {
    for (auto c : {std::optional<color::Condition>{}, std::optional{color::Condition::kFar},
                   std::optional{color::Condition::kSplit}, std::optional{color::Condition::kClose}}) {
      const Bucket* a = result.report.find(m, c, std::nullopt);
      const Bucket* b = again.find(m, c, std::nullopt);
      REQUIRE(a != nullptr);
      REQUIRE(b != nullptr);
      CHECK(a->n_rounds == b->n_rounds);
      if (a->n_rounds) {
        CHECK(std::abs(*a->listener_error_rate() - *b->listener_error_rate()) <= 1e-12);
        CHECK(std::abs(*a->speaker_match_rate() - *b->speaker_match_rate()) <= 1e-12);
      }
    }
  }
  CHECK_THROWS_AS(load_per_round_csv(dir.write("bad.csv", "a,b\n")), DataError);
}

TEST_CASE("seed summaries") {
  auto report_with = [](std::size_t errors) {
    std::vector<RoundOutcome> outcomes(10);
    for (std::size_t i = 0; i < errors; ++i) outcomes[i].listener_err = true;
    return aggregate(outcomes);
  };
  const auto stats = summarize_seeds({report_with(2), report_with(4), report_with(6)});
  const auto it = std::find_if(stats.begin(), stats.end(), [](const SeedStat& s) { return !s.condition; });
  REQUIRE(it != stats.end());
  CHECK(it->seeds == 3);
  CHECK(it->mean_error_rate == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(it->sd_error_rate == doctest::Approx(0.2).epsilon(1e-12));
}
