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

#include "pragmachine/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "pragmachine/error.hpp"
#include "pragmachine/random.hpp"
#include "pragmachine/rsa.hpp"

namespace pragmachine::corpus {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view split_name(SplitTag s) {
  switch (s) {
    case SplitTag::kTrain:
      return "train";
    case SplitTag::kVal:
      return "val";
    case SplitTag::kTest:
      return "test";
  }
  return "train";
}

std::optional<SplitTag> parse_split(std::string_view name) {
  if (name == "train") return SplitTag::kTrain;
  if (name == "val") return SplitTag::kVal;
  if (name == "test") return SplitTag::kTest;
  return std::nullopt;
}

namespace {

color::ColorLuv parse_color(const json& c, const std::string& where) {
  if (c.is_string()) {
    return color::rgb_to_cieluv(color::parse_hex(c.get<std::string>()));
  }
  if (c.is_array() && c.size() == 3) {
    int ch[3];
    for (int i = 0; i < 3; ++i) {
      if (!c[i].is_number_integer()) {
        throw DataError(where + ": RGB channels must be integers");
      }
      ch[i] = c[i].get<int>();
      if (ch[i] < 0 || ch[i] > 255) {
        throw DataError(where + ": RGB channel out of range");
      }
    }
    return color::rgb_to_cieluv({static_cast<std::uint8_t>(ch[0]),
                                 static_cast<std::uint8_t>(ch[1]),
                                 static_cast<std::uint8_t>(ch[2])});
  }
  if (c.is_object() && c.contains("luv") && c["luv"].is_array() &&
      c["luv"].size() == 3) {
    color::ColorLuv luv{c["luv"][0].get<double>(), c["luv"][1].get<double>(),
                        c["luv"][2].get<double>()};
    if (!color::is_valid(luv)) throw DataError(where + ": invalid CIELUV color");
    return luv;
  }
  throw DataError(where + ": color must be \"#rrggbb\", [r,g,b] or {\"luv\":[l,u,v]}");
}

std::size_t parse_slot(const json& rec, const char* key,
                       const std::string& where) {
  if (!rec.contains(key) || !rec[key].is_number_integer()) {
    throw DataError(where + ": missing integer field '" + key + "'");
  }
  const auto v = rec[key].get<long long>();
  if (v < 0 || v >= static_cast<long long>(color::kContextSize)) {
    throw DataError(where + ": field '" + key + "' out of range");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<Round> load_corpus(const std::string& path, const Vocabulary& vocab,
                               double threshold, LoadStats* stats,
                               const VariantMap& variants) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus '" + path + "'");
  LoadStats local;
  std::vector<Round> rounds;
  std::unordered_map<std::string, std::size_t> next_round_index;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ": record " + std::to_string(record);
    ++record;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (!rec.is_object()) throw DataError(where + ": not a JSON object");
    if (!rec.contains("game_id") || !rec["game_id"].is_string()) {
      throw DataError(where + ": missing string field 'game_id'");
    }
    if (!rec.contains("colors") || !rec["colors"].is_array() ||
        rec["colors"].size() != color::kContextSize) {
      throw DataError(where + ": 'colors' must list exactly 3 colors");
    }
    if (!rec.contains("utterance") || !rec["utterance"].is_string()) {
      throw DataError(where + ": missing string field 'utterance'");
    }
    Round r;
    r.game_id = rec["game_id"].get<std::string>();
    for (std::size_t i = 0; i < color::kContextSize; ++i) {
      r.context[i] = parse_color(rec["colors"][i], where);
    }
    r.target_index = parse_slot(rec, "target", where);
    r.listener_choice = parse_slot(rec, "choice", where);
    if (rec.contains("split")) {
      const auto tag = rec["split"].is_string()
                           ? parse_split(rec["split"].get<std::string>())
                           : std::nullopt;
      if (!tag) throw DataError(where + ": unknown split tag " + rec["split"].dump());
      r.split = *tag;
      local.had_split_tags = true;
    }
    r.computed_condition =
        color::classify_condition(r.context, r.target_index, threshold);
    r.condition = r.computed_condition;
    if (rec.contains("condition")) {
      const auto c = rec["condition"].is_string()
                         ? color::parse_condition(rec["condition"].get<std::string>())
                         : std::nullopt;
      if (!c) throw DataError(where + ": unknown condition " + rec["condition"].dump());
      r.condition = *c;
    }
    std::size_t& counter = next_round_index[r.game_id];
    if (rec.contains("round_index")) {
      r.round_index = rec["round_index"].get<std::size_t>();
      counter = std::max(counter, r.round_index + 1);
    } else {
      r.round_index = counter++;
    }
    ++local.records;
    const std::string text = apply_variants(
        normalize_utterance(rec["utterance"].get<std::string>()), variants);
    const auto id = vocab.find(text);
    if (!id) {
      ++local.dropped_out_of_vocabulary;
      continue;
    }
    r.utterance_id = *id;
    rounds.push_back(std::move(r));
  }
  if (stats) *stats = local;
  return rounds;
}

std::string round_to_json_line(const Round& r, const Vocabulary& vocab) {
  ordered_json j;
  j["game_id"] = r.game_id;
  j["round_index"] = r.round_index;
  ordered_json colors = ordered_json::array();
  for (const auto& c : r.context) {
    colors.push_back({{"luv", {c.l_star, c.u_star, c.v_star}}});
  }
  j["colors"] = std::move(colors);
  j["target"] = r.target_index;
  j["utterance"] = vocab.text(r.utterance_id);
  j["choice"] = r.listener_choice;
  j["split"] = split_name(r.split);
  j["condition"] = color::condition_name(r.condition);
  return j.dump();
}

void save_corpus(const std::vector<Round>& rounds, const Vocabulary& vocab,
                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus '" + path + "'");
  for (const auto& r : rounds) out << round_to_json_line(r, vocab) << '\n';
  if (!out) throw DataError("write failed: '" + path + "'");
}

std::vector<Round> split_corpus(std::vector<Round> rounds,
                                const std::array<double, 3>& ratios,
                                std::uint64_t seed) {
  double total = 0.0;
  std::size_t positive = 0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw UsageError("split ratios must be nonnegative");
    total += r;
    if (r > 0.0) ++positive;
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("split ratios must sum to 1");

  std::vector<std::string> games;
  std::unordered_map<std::string, std::size_t> game_index;
  for (const auto& r : rounds) {
    if (game_index.emplace(r.game_id, games.size()).second) {
      games.push_back(r.game_id);
    }
  }
  if (games.size() < positive) {
    throw UsageError("fewer games (" + std::to_string(games.size()) +
                     ") than splits (" + std::to_string(positive) + ")");
  }

  // Largest-remainder apportionment of games to splits.
  const std::size_t n = games.size();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b];
  });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) {
    counts[order[k % 3]] += 1;
  }

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<SplitTag> tag_of_game(n);
  std::size_t pos = 0;
  constexpr SplitTag kTags[] = {SplitTag::kTrain, SplitTag::kVal, SplitTag::kTest};
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < counts[s]; ++k) tag_of_game[perm[pos++]] = kTags[s];
  }
  for (auto& r : rounds) r.split = tag_of_game[game_index.at(r.game_id)];
  return rounds;
}

std::vector<Round> filter_split(const std::vector<Round>& rounds, SplitTag s) {
  std::vector<Round> out;
  std::copy_if(rounds.begin(), rounds.end(), std::back_inserter(out),
               [s](const Round& r) { return r.split == s; });
  return out;
}

namespace {

// CSS/X11 named colors. Broad basic terms get wider scales.
constexpr NamedColorTerm kTerms[] = {
    {"blue", "#0000ff", 40.0},       {"green", "#008000", 40.0},
    {"purple", "#800080", 40.0},     {"red", "#ff0000", 40.0},
    {"pink", "#ffc0cb", 35.0},       {"yellow", "#ffff00", 35.0},
    {"orange", "#ffa500", 35.0},     {"gray", "#808080", 30.0},
    {"brown", "#a52a2a", 35.0},      {"teal", "#008080", 30.0},
    {"black", "#000000", 25.0},      {"white", "#ffffff", 25.0},
    {"light blue", "#add8e6", 30.0}, {"dark blue", "#00008b", 30.0},
    {"light green", "#90ee90", 30.0}, {"dark green", "#006400", 30.0},
    {"lime", "#00ff00", 30.0},       {"magenta", "#ff00ff", 30.0},
    {"navy", "#000080", 25.0},       {"maroon", "#800000", 25.0},
    {"olive", "#808000", 25.0},      {"tan", "#d2b48c", 25.0},
    {"beige", "#f5f5dc", 20.0},      {"cyan", "#00ffff", 30.0},
    {"violet", "#ee82ee", 25.0},     {"lavender", "#e6e6fa", 20.0},
    {"gold", "#ffd700", 25.0},       {"salmon", "#fa8072", 25.0},
    {"turquoise", "#40e0d0", 25.0},  {"indigo", "#4b0082", 25.0},
    {"sky blue", "#87ceeb", 25.0},   {"khaki", "#f0e68c", 20.0},
};

}  // namespace

std::span<const NamedColorTerm> default_color_terms() { return kTerms; }

std::vector<Prototype> default_prototypes() {
  std::vector<Prototype> out;
  for (const auto& t : kTerms) {
    out.push_back({std::string(t.text),
                   color::rgb_to_cieluv(color::parse_hex(t.hex)), t.scale});
  }
  return out;
}

Vocabulary default_vocabulary(double zipf_exponent) {
  std::vector<VocabEntry> entries;
  std::size_t rank = 0;
  for (const auto& t : kTerms) {
    entries.push_back({0, std::string(t.text),
                       -zipf_exponent * std::log(static_cast<double>(rank + 1))});
    ++rank;
  }
  return Vocabulary(std::move(entries));
}

Matrix ground_truth_lexicon(const color::Context& ctx,
                            const std::vector<Prototype>& prototypes,
                            double floor) {
  Matrix lex(ctx.size(), prototypes.size());
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    for (std::size_t u = 0; u < prototypes.size(); ++u) {
      const double d = color::luv_distance(ctx[i], prototypes[u].center);
      const double s = prototypes[u].scale;
      lex(i, u) = std::max(std::exp(-d * d / (2.0 * s * s)), floor);
    }
  }
  return lex;
}

std::vector<Round> generate_synthetic(const SyntheticConfig& cfg,
                                      const Vocabulary& vocab,
                                      const std::vector<Prototype>& prototypes,
                                      const CostTable& costs,
                                      ExecPolicy policy) {
  if (!(cfg.noise_eps >= 0.0 && cfg.noise_eps <= 1.0)) {
    throw UsageError("noise_eps must be in [0, 1]");
  }
  if (!(cfg.speaker_alpha >= 0.0)) throw UsageError("speaker_alpha must be >= 0");
  if (!(cfg.lexicon_floor > 0.0)) throw UsageError("lexicon_floor must be positive");
  if (costs.kappa.size() != vocab.size()) {
    throw UsageError("cost table does not match the vocabulary");
  }
  // Align prototypes with vocabulary ids.
  std::unordered_map<std::string, const Prototype*> by_text;
  for (const auto& p : prototypes) by_text[p.text] = &p;
  std::vector<Prototype> aligned;
  aligned.reserve(vocab.size());
  for (const auto& e : vocab.entries()) {
    auto it = by_text.find(e.text);
    if (it == by_text.end()) {
      throw UsageError("no prototype for vocabulary entry '" + e.text + "'");
    }
    aligned.push_back(*it->second);
  }

  const rsa::Prior prior = rsa::Prior::uniform(color::kContextSize);
  const rsa::RsaConfig am{cfg.speaker_alpha, 1, true};
  const std::size_t width = std::to_string(cfg.n_games).size();

  auto games = map_indices<std::vector<Round>>(
      cfg.n_games, policy, [&](std::size_t g) {
        Rng rng(derive_seed(cfg.seed, "synthetic-game", g));
        std::string id = std::to_string(g);
        id = "g" + std::string(width - std::min(width, id.size()), '0') + id;
        std::vector<Round> out;
        out.reserve(cfg.rounds_per_game);
        for (std::size_t k = 0; k < cfg.rounds_per_game; ++k) {
          const auto want = static_cast<color::Condition>(rng.below(3));
          Round r;
          r.game_id = id;
          r.round_index = k;
          r.target_index = rng.below(color::kContextSize);
          const auto rgb = color::sample_context_rgb(
              rng, want, r.target_index, cfg.threshold, cfg.max_tries);
          for (std::size_t i = 0; i < color::kContextSize; ++i) {
            r.context[i] = color::rgb_to_cieluv(rgb[i]);
          }
          r.computed_condition =
              color::classify_condition(r.context, r.target_index, cfg.threshold);
          r.condition = r.computed_condition;
          const Matrix truth =
              ground_truth_lexicon(r.context, aligned, cfg.lexicon_floor);
          const rsa::AmResult agents = rsa::run_am(truth, prior, costs.kappa, am);
          const bool noisy = rng.bernoulli(cfg.noise_eps);
          const std::size_t uniform_pick = rng.below(vocab.size());
          r.utterance_id = noisy ? uniform_pick
                                 : rng.categorical(
                                       agents.speaker.row(r.target_index));
          r.listener_choice = rsa::argmax(agents.listener.row(r.utterance_id));
          out.push_back(std::move(r));
        }
        return out;
      });

  std::vector<Round> rounds;
  rounds.reserve(cfg.n_games * cfg.rounds_per_game);
  for (auto& g : games) {
    std::move(g.begin(), g.end(), std::back_inserter(rounds));
  }
  return rounds;
}

}  // namespace pragmachine::corpus
