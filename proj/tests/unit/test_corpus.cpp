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
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "pragmachine/corpus.hpp"
#include "pragmachine/error.hpp"
#include "pragmachine/rsa.hpp"

using namespace pragmachine;
using namespace pragmachine::corpus;

namespace {

Vocabulary vocab_from(const std::string& tsv, const VariantMap& variants = {},
                      std::optional<std::size_t> top_k = std::nullopt) {
  std::istringstream in(tsv);
  return parse_vocab(in, "test.tsv", variants, top_k);
}

std::string small_corpus_line(const std::string& game, const std::string& colors,
                              int target, const std::string& utt, int choice,
                              const std::string& extra = "") {
  return "{\"game_id\":\"" + game + "\",\"colors\":" + colors + ",\"target\":" +
         std::to_string(target) + ",\"utterance\":\"" + utt + "\",\"choice\":" +
         std::to_string(choice) + extra + "}\n";
}

}  // namespace

TEST_CASE("vocabulary normalization, ordering and ids") {
  const auto v = vocab_from("Blue!\t-1\nlight   Green\t-0.5\nred\t-0.5\n");
  REQUIRE(v.size() == 3);
  CHECK(v.text(0) == "light green");
  CHECK(v.text(1) == "red");
  CHECK(v.text(2) == "blue");
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.entries()[i].id == i);
  CHECK(v.find("red") == 1u);
  CHECK_FALSE(v.find("Red").has_value());
}

TEST_CASE("spelling variants collapse with summed frequency") {
  const VariantMap variants{{"grey", "gray"}};
  const auto v = vocab_from("Grey\t" + std::to_string(std::log(0.25)) + "\ngray\t" +
                                std::to_string(std::log(0.5)) + "\nblue\t-3\n",
                            variants);
  REQUIRE(v.size() == 2);
  const auto id = v.find("gray");
  REQUIRE(id.has_value());
  CHECK(std::exp(v.entries()[*id].log_freq) == doctest::Approx(0.75).epsilon(1e-6));
  CHECK_FALSE(v.find("grey").has_value());
  CHECK(apply_variants("light grey", variants) == "light gray");
}

TEST_CASE("vocabulary errors") {
  try {
    vocab_from("");
    FAIL("expected error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("empty vocabulary") != std::string::npos);
  }
  try {
    vocab_from("blue\t-1\nred -2\n");
    FAIL("expected error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("test.tsv:2") != std::string::npos);
  }
  CHECK_THROWS_AS(vocab_from("blue\t-1\nBlue\t-2\n"), DataError);
  CHECK_THROWS_AS(vocab_from("blue\t-1\n"), DataError);
  CHECK_THROWS_AS(vocab_from("blue\tabc\nred\t-1\n"), DataError);
}

TEST_CASE("top_k keeps the most frequent entries") {
  std::string tsv;
  for (int i = 0; i < 250; ++i) {
    tsv += "term" + std::to_string(i) + "\t" + std::to_string(-0.01 * i) + "\n";
  }
  const auto v = vocab_from(tsv, {}, 100);
  REQUIRE(v.size() == 100);
  CHECK(v.text(0) == "term0");
  CHECK(v.text(99) == "term99");
  CHECK_FALSE(v.find("term100").has_value());
}

TEST_CASE("vocabulary file round trip") {
  TempDir dir;
  const auto v = default_vocabulary();
  save_vocab(v, dir.file("v.tsv"));
  const auto back = load_vocab(dir.file("v.tsv"));
  REQUIRE(back.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(back.entries()[i].text == v.entries()[i].text);
    CHECK(back.entries()[i].log_freq == v.entries()[i].log_freq);
  }
  CHECK(back.fingerprint() == v.fingerprint());
}

TEST_CASE("costs from frequencies") {
  const auto two = cost_from_frequency(vocab_from("a\t0\nb\t0\n"));
  CHECK(two.kappa[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(two.kappa[1] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const auto skew = cost_from_frequency(
      vocab_from("a\t" + std::to_string(std::log(0.9)) + "\nb\t" + std::to_string(std::log(0.1)) + "\n"));
  CHECK(skew.kappa[0] == doctest::Approx(0.1054).epsilon(1e-3));
  CHECK(skew.kappa[1] == doctest::Approx(2.3026).epsilon(1e-3));
  const auto four = cost_from_frequency(vocab_from("a\t1\nb\t1\nc\t1\nd\t1\n"));
  for (double k : four.kappa) CHECK(k == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  const auto def = cost_from_frequency(default_vocabulary());
  CHECK(std::min_element(def.kappa.begin(), def.kappa.end()) == def.kappa.begin());
}

TEST_CASE("nearest vocabulary suggestions") {
  const auto v = default_vocabulary();
  const auto s = nearest_texts(v, "blurple", 3);
  REQUIRE(s.size() == 3);
  CHECK(std::find(s.begin(), s.end(), "purple") != s.end());
}

TEST_CASE("load_corpus handles each color encoding identically") {
  TempDir dir;
  const auto v = default_vocabulary();
  const std::string hex = R"(["#ff0000","#00ff00","#0000ff"])";
  const std::string rgb = "[[255,0,0],[0,255,0],[0,0,255]]";
  const auto red = color::rgb_to_cieluv({255, 0, 0});
  const auto green = color::rgb_to_cieluv({0, 255, 0});
  const auto blue = color::rgb_to_cieluv({0, 0, 255});
  auto luv = [](const color::ColorLuv& c) {
    std::ostringstream s;
    s.precision(17);
    s << "{\"luv\":[" << c.l_star << "," << c.u_star << "," << c.v_star << "]}";
    return s.str();
  };
  const std::string luvs = "[" + luv(red) + "," + luv(green) + "," + luv(blue) + "]";
  const auto p = dir.write("c.jsonl", small_corpus_line("g1", hex, 0, "Red", 0) +
                                          small_corpus_line("g1", rgb, 0, "red", 0) +
                                          small_corpus_line("g1", luvs, 0, "red", 0));
  const auto rounds = load_corpus(p, v);
  REQUIRE(rounds.size() == 3);
  CHECK(rounds[0].context == rounds[1].context);
  CHECK(rounds[0].context == rounds[2].context);
  CHECK(rounds[0].round_index == 0);
  CHECK(rounds[2].round_index == 2);
  CHECK(rounds[0].condition == color::Condition::kFar);
}

TEST_CASE("load_corpus drops out-of-vocabulary rounds and reports errors") {
  TempDir dir;
  const auto v = default_vocabulary();
  const std::string hex = R"(["#ff0000","#00ff00","#0000ff"])";
  const auto p = dir.write("c.jsonl", small_corpus_line("g1", hex, 0, "red", 0) +
                                          small_corpus_line("g1", hex, 1, "the reddish one", 0) +
                                          small_corpus_line("g2", hex, 2, "blue", 2, ",\"split\":\"test\""));
  LoadStats stats;
  const auto rounds = load_corpus(p, v, 20, &stats);
  CHECK(rounds.size() == 2);
  CHECK(stats.records == 3);
  CHECK(stats.dropped_out_of_vocabulary == 1);
  CHECK(stats.had_split_tags);
  CHECK(rounds[1].split == SplitTag::kTest);

  const auto bad_split = dir.write("b.jsonl", small_corpus_line("g1", hex, 0, "red", 0, ",\"split\":\"dev\""));
  CHECK_THROWS_AS(load_corpus(bad_split, v), DataError);
  const auto bad = dir.write("m.jsonl", small_corpus_line("g1", hex, 0, "red", 0) + "{\"game_id\":\"g1\"}\n");
  try {
    load_corpus(bad, v);
    FAIL("expected error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
  }
  const auto range = dir.write("r.jsonl", small_corpus_line("g1", hex, 3, "red", 0));
  CHECK_THROWS_AS(load_corpus(range, v), DataError);
}

TEST_CASE("ingested condition is kept and the computed one stored alongside") {
  TempDir dir;
  const auto v = default_vocabulary();
  const std::string hex = R"(["#ff0000","#00ff00","#0000ff"])";
  const auto p = dir.write("c.jsonl", small_corpus_line("g1", hex, 0, "red", 0, ",\"condition\":\"close\""));
  const auto rounds = load_corpus(p, v);
  REQUIRE(rounds.size() == 1);
  CHECK(rounds[0].condition == color::Condition::kClose);
  CHECK(rounds[0].computed_condition == color::Condition::kFar);
}

TEST_CASE("split_corpus by game") {
  std::vector<Round> rounds;
  for (int g = 0; g < 10; ++g) {
    for (int k = 0; k < 4; ++k) {
      Round r;
      r.game_id = "g" + std::to_string(g);
      r.round_index = static_cast<std::size_t>(k);
      rounds.push_back(r);
    }
  }
  const auto a = split_corpus(rounds, {0.8, 0.1, 0.1}, 42);
  const auto b = split_corpus(rounds, {0.8, 0.1, 0.1}, 42);
  CHECK(a == b);
  std::map<std::string, std::set<SplitTag>> tags;
  std::map<SplitTag, std::set<std::string>> games;
  for (const auto& r : a) {
    tags[r.game_id].insert(r.split);
    games[r.split].insert(r.game_id);
  }
  for (const auto& [g, t] : tags) CHECK(t.size() == 1);
  CHECK(games[SplitTag::kTrain].size() == 8);
  CHECK(games[SplitTag::kVal].size() == 1);
  CHECK(games[SplitTag::kTest].size() == 1);
  CHECK(filter_split(a, SplitTag::kTrain).size() + filter_split(a, SplitTag::kVal).size() +
            filter_split(a, SplitTag::kTest).size() == a.size());

  for (const auto& r : split_corpus(rounds, {1.0, 0.0, 0.0}, 7)) CHECK(r.split == SplitTag::kTrain);
  std::vector<Round> two(rounds.begin(), rounds.begin() + 8);
  CHECK_THROWS_AS(split_corpus(two, {0.8, 0.1, 0.1}, 1), UsageError);
  CHECK_THROWS_AS(split_corpus(rounds, {0.5, 0.1, 0.1}, 1), UsageError);
}

TEST_CASE("corpus save/load round trip is exact") {
  TempDir dir;
  const auto v = default_vocabulary();
  SyntheticConfig cfg;
  cfg.n_games = 6;
  cfg.rounds_per_game = 5;
  cfg.seed = 9;
  auto rounds = generate_synthetic(cfg, v, default_prototypes(), cost_from_frequency(v));
  rounds = split_corpus(rounds, {0.5, 0.25, 0.25}, 3);
  save_corpus(rounds, v, dir.file("c.jsonl"));
  const auto back = load_corpus(dir.file("c.jsonl"), v);
  CHECK(back == rounds);
}

TEST_CASE("default prototypes come from named colors") {
  const auto terms = default_color_terms();
  const auto protos = default_prototypes();
  REQUIRE(terms.size() == protos.size());
  CHECK(terms.size() >= 30);
  const auto red = std::find_if(protos.begin(), protos.end(), [](const Prototype& p) { return p.text == "red"; });
  REQUIRE(red != protos.end());
  CHECK(color::luv_distance(red->center, color::rgb_to_cieluv({255, 0, 0})) == 0.0);
}

TEST_CASE("ground-truth lexicon dominance in a far context") {
  // One prototype exactly on the target and the rest far away.
  std::vector<Prototype> protos{{"on", {50, 0, 0}, 30},
                                {"off1", {50, 160, 0}, 30},
                                {"off2", {50, 0, 160}, 30}};
  const color::Context ctx{color::ColorLuv{50, 0, 0}, color::ColorLuv{50, 170, 10},
                           color::ColorLuv{50, 10, 170}};
  const auto lex = ground_truth_lexicon(ctx, protos, 1e-3);
  CHECK(lex(0, 0) == 1.0);
  const auto am = rsa::run_am(lex, rsa::Prior::uniform(3), std::vector<double>(3, 0.0), {3.0, 1, true});
  CHECK(rsa::argmax(am.speaker.row(0)) == 0);
}

TEST_CASE("synthetic generation") {
  const auto v = default_vocabulary();
  const auto costs = cost_from_frequency(v);
  SyntheticConfig cfg;
  cfg.n_games = 20;
  cfg.rounds_per_game = 30;
  cfg.seed = 4;
  const auto a = generate_synthetic(cfg, v, default_prototypes(), costs, ExecPolicy::kParallel);
  const auto b = generate_synthetic(cfg, v, default_prototypes(), costs, ExecPolicy::kSerial);
  CHECK(a == b);
  REQUIRE(a.size() == 600);
  std::size_t far = 0, far_correct = 0;
  std::array<std::size_t, 3> by_condition{};
  for (const auto& r : a) {
    CHECK(r.target_index < 3);
    CHECK(r.listener_choice < 3);
    CHECK(r.utterance_id < v.size());
    CHECK(color::classify_condition(r.context, r.target_index, cfg.threshold) == r.condition);
    by_condition[static_cast<int>(r.condition)]++;
    if (r.condition == color::Condition::kFar) {
      ++far;
      far_correct += r.listener_choice == r.target_index;
    }
  }
  for (auto n : by_condition) CHECK(n > 150);
  CHECK(double(far_correct) / double(far) > 0.6);

  SyntheticConfig other = cfg;
  other.seed = 5;
  CHECK(generate_synthetic(other, v, default_prototypes(), costs) != a);
}

TEST_CASE("full noise makes utterances independent of the target") {
  const auto v = default_vocabulary();
  SyntheticConfig cfg;
  cfg.n_games = 50;
  cfg.rounds_per_game = 40;
  cfg.noise_eps = 1.0;
  cfg.seed = 8;
  const auto rounds = generate_synthetic(cfg, v, default_prototypes(), cost_from_frequency(v));
  std::vector<double> counts(v.size());
  for (const auto& r : rounds) counts[r.utterance_id] += 1;
  // Chi-square against uniform, 31 degrees of freedom; 99.9% critical value 61.1.
  const double expected = double(rounds.size()) / double(v.size());
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 61.1);
}

TEST_CASE("synthetic generator rejects unknown utterances") {
  const auto v = vocab_from("blue\t0\nunknown term\t0\n");
  SyntheticConfig cfg;
  cfg.n_games = 1;
  CHECK_THROWS_AS(generate_synthetic(cfg, v, default_prototypes(), cost_from_frequency(v)), UsageError);
}
