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

#include "pragmachine/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pragmachine/error.hpp"
#include "pragmachine/logging.hpp"

namespace pragmachine::eval {

using corpus::Round;
using corpus::SplitTag;
using nlohmann::ordered_json;

std::string_view model_name(Model m) {
  switch (m) {
    case Model::kBase:
      return "base";
    case Model::kSslAm:
      return "am";
    case Model::kSslGd:
      return "gd";
    case Model::kSl:
      return "sl";
  }
  return "base";
}

std::optional<Model> parse_model(std::string_view name) {
  if (name == "base") return Model::kBase;
  if (name == "am" || name == "ssl-am") return Model::kSslAm;
  if (name == "gd" || name == "ssl-gd") return Model::kSslGd;
  if (name == "sl") return Model::kSl;
  return std::nullopt;
}

std::vector<Model> parse_model_list(std::string_view csv) {
  std::vector<Model> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = std::min(csv.find(',', start), csv.size());
    const std::string_view item = csv.substr(start, comma - start);
    const auto m = parse_model(item);
    if (!m) throw UsageError("--models: unknown model '" + std::string(item) + "'");
    if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
    start = comma + 1;
  }
  return out;
}

namespace {

const lexicon::LexiconParams& lexicon_for(Model model, const Artifacts& a) {
  const lexicon::LexiconParams* p = model == Model::kSl ? a.sl : a.ssl;
  if (!p) {
    throw DataError("missing artifact: " + std::string(model_name(model)) +
                    " lexicon");
  }
  return *p;
}

std::optional<double> rate(std::size_t k, std::size_t n) {
  if (n == 0) return std::nullopt;
  return static_cast<double>(k) / static_cast<double>(n);
}

}  // namespace

Agents build_agents(Model model, const color::Context& ctx,
                    const Artifacts& artifacts, const EvalConfig& cfg) {
  const auto& params = lexicon_for(model, artifacts);
  if (!artifacts.costs) throw DataError("missing artifact: cost table");
  const std::span<const double> kappa = artifacts.costs->view();
  const Matrix lex = lexicon::context_lexicon(params, ctx).values;
  const rsa::Prior prior = rsa::Prior::uniform(lex.rows());
  Agents out;
  switch (model) {
    case Model::kBase: {
      out.listener = rsa::literal_listener(lex, prior);
      if (cfg.am.use_cost) {
        out.speaker = rsa::base_speaker(lex, kappa);
      } else {
        out.speaker = rsa::base_speaker(lex, corpus::CostTable::zeros(kappa.size()).view());
      }
      break;
    }
    case Model::kSslAm:
    case Model::kSl: {
      auto am = rsa::run_am(lex, prior, kappa, cfg.am);
      out.listener = std::move(am.listener);
      out.speaker = std::move(am.speaker);
      out.trace = std::move(am.trace);
      break;
    }
    case Model::kSslGd: {
      gd::GdConfig g = cfg.gd;
      g.seed = gd::context_seed(cfg.seed, lex.flat());
      auto res = gd::run_gd(lex, prior, kappa, g);
      out.listener = std::move(res.listener);
      out.speaker = std::move(res.speaker);
      out.trace = std::move(res.trace);
      break;
    }
  }
  return out;
}

RoundOutcome evaluate_round(Model model, const Round& round,
                            const Artifacts& artifacts, const EvalConfig& cfg) {
  const Agents agents = build_agents(model, round.context, artifacts, cfg);
  RoundOutcome o;
  o.model = model;
  o.game_id = round.game_id;
  o.round_index = round.round_index;
  o.condition = round.condition;
  o.split = round.split;
  const std::size_t guess =
      rsa::argmax(agents.listener.row(round.utterance_id), &o.listener_tie);
  const std::size_t said =
      rsa::argmax(agents.speaker.row(round.target_index), &o.speaker_tie);
  o.listener_err = guess != round.target_index;
  o.listener_match = guess == round.listener_choice;
  o.speaker_match = said == round.utterance_id;
  return o;
}

std::optional<double> Bucket::listener_error_rate() const {
  return rate(listener_errors, n_rounds);
}
std::optional<double> Bucket::listener_accuracy() const {
  const auto e = listener_error_rate();
  if (!e) return std::nullopt;
  return 1.0 - *e;
}
std::optional<double> Bucket::listener_match_rate() const {
  return rate(listener_matches, n_rounds);
}
std::optional<double> Bucket::speaker_match_rate() const {
  return rate(speaker_matches, n_rounds);
}

const Bucket* EvalReport::find(Model model,
                               std::optional<color::Condition> condition,
                               std::optional<SplitTag> split) const {
  for (const auto& b : buckets) {
    if (b.model == model && b.condition == condition && b.split == split) return &b;
  }
  return nullptr;
}

EvalReport aggregate(const std::vector<RoundOutcome>& outcomes) {
  std::vector<Model> models;
  bool has_split[3] = {false, false, false};
  for (const auto& o : outcomes) {
    if (std::find(models.begin(), models.end(), o.model) == models.end()) {
      models.push_back(o.model);
    }
    has_split[static_cast<int>(o.split)] = true;
  }
  std::vector<std::optional<SplitTag>> splits;
  for (int s = 0; s < 3; ++s) {
    if (has_split[s]) splits.emplace_back(static_cast<SplitTag>(s));
  }
  splits.emplace_back(std::nullopt);
  const std::optional<color::Condition> conditions[] = {
      color::Condition::kFar, color::Condition::kSplit, color::Condition::kClose,
      std::nullopt};

  EvalReport report;
  for (Model m : models) {
    for (const auto& s : splits) {
      for (const auto& c : conditions) {
        Bucket b;
        b.model = m;
        b.condition = c;
        b.split = s;
        report.buckets.push_back(b);
      }
    }
  }
  for (const auto& o : outcomes) {
    report.listener_ties += o.listener_tie;
    report.speaker_ties += o.speaker_tie;
    for (auto& b : report.buckets) {
      if (b.model != o.model) continue;
      if (b.condition && *b.condition != o.condition) continue;
      if (b.split && *b.split != o.split) continue;
      ++b.n_rounds;
      b.listener_errors += o.listener_err;
      b.listener_matches += o.listener_match;
      b.speaker_matches += o.speaker_match;
    }
  }
  return report;
}

EvalResult evaluate(const std::vector<Model>& models,
                    const std::vector<Round>& rounds, const Artifacts& artifacts,
                    const EvalConfig& cfg) {
  if (!artifacts.costs) throw DataError("missing artifact: cost table");
  for (Model m : models) lexicon_for(m, artifacts);
  EvalResult result;
  for (Model m : models) {
    auto outcomes = map_indices<RoundOutcome>(
        rounds.size(), cfg.policy, [&](std::size_t i) {
          return evaluate_round(m, rounds[i], artifacts, cfg);
        });
    std::move(outcomes.begin(), outcomes.end(), std::back_inserter(result.rounds));
  }
  result.report = aggregate(result.rounds);
  if (result.report.listener_ties + result.report.speaker_ties > 0) {
    logging::debug("eval: {} listener ties, {} speaker ties (lowest index chosen)",
               result.report.listener_ties, result.report.speaker_ties);
  }
  return result;
}

std::vector<SeedStat> summarize_seeds(const std::vector<EvalReport>& reports) {
  std::vector<SeedStat> out;
  if (reports.empty()) return out;
  for (const auto& b : reports.front().buckets) {
    if (b.split) continue;
    SeedStat st;
    st.model = b.model;
    st.condition = b.condition;
    std::vector<double> xs;
    for (const auto& r : reports) {
      const Bucket* rb = r.find(b.model, b.condition, std::nullopt);
      if (rb && rb->listener_error_rate()) xs.push_back(*rb->listener_error_rate());
    }
    st.seeds = xs.size();
    if (!xs.empty()) {
      double sum = 0.0;
      for (double x : xs) sum += x;
      st.mean_error_rate = sum / static_cast<double>(xs.size());
      if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - st.mean_error_rate) * (x - st.mean_error_rate);
        st.sd_error_rate = std::sqrt(ss / static_cast<double>(xs.size() - 1));
      }
    }
    out.push_back(st);
  }
  return out;
}

namespace {

ordered_json opt_json(std::optional<double> v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  ordered_json j;
  j["version"] = "1";
  j["listener_ties"] = r.listener_ties;
  j["speaker_ties"] = r.speaker_ties;
  ordered_json rows = ordered_json::array();
  for (const auto& b : r.buckets) {
    ordered_json row;
    row["model"] = model_name(b.model);
    row["condition"] = b.condition ? color::condition_name(*b.condition) : "all";
    row["split"] = b.split ? corpus::split_name(*b.split) : "all";
    row["n_rounds"] = b.n_rounds;
    row["listener_errors"] = b.listener_errors;
    row["listener_matches"] = b.listener_matches;
    row["speaker_matches"] = b.speaker_matches;
    row["listener_error_rate"] = opt_json(b.listener_error_rate());
    row["listener_accuracy"] = opt_json(b.listener_accuracy());
    row["listener_match_rate"] = opt_json(b.listener_match_rate());
    row["speaker_match_rate"] = opt_json(b.speaker_match_rate());
    rows.push_back(std::move(row));
  }
  j["buckets"] = std::move(rows);
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("eval report: ") + e.what());
  }
  try {
    if (j.at("version").get<std::string>() != "1") {
      throw DataError("eval report: unsupported version");
    }
    EvalReport r;
    r.listener_ties = j.at("listener_ties").get<std::size_t>();
    r.speaker_ties = j.at("speaker_ties").get<std::size_t>();
    for (const auto& row : j.at("buckets")) {
      Bucket b;
      const auto m = parse_model(row.at("model").get<std::string>());
      if (!m) throw DataError("eval report: unknown model");
      b.model = *m;
      const auto c = row.at("condition").get<std::string>();
      if (c != "all") {
        b.condition = color::parse_condition(c);
        if (!b.condition) throw DataError("eval report: unknown condition '" + c + "'");
      }
      const auto s = row.at("split").get<std::string>();
      if (s != "all") {
        b.split = corpus::parse_split(s);
        if (!b.split) throw DataError("eval report: unknown split '" + s + "'");
      }
      b.n_rounds = row.at("n_rounds").get<std::size_t>();
      b.listener_errors = row.at("listener_errors").get<std::size_t>();
      b.listener_matches = row.at("listener_matches").get<std::size_t>();
      b.speaker_matches = row.at("speaker_matches").get<std::size_t>();
      r.buckets.push_back(b);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("eval report: ") + e.what());
  }
}

void emit_report(const EvalResult& result, const std::string& summary_path,
                 const std::string& per_round_path) {
  {
    std::ofstream out(summary_path);
    if (!out) throw DataError("cannot write report '" + summary_path + "'");
    out << report_to_json(result.report) << '\n';
    if (!out) throw DataError("write failed: '" + summary_path + "'");
  }
  std::ofstream out(per_round_path);
  if (!out) throw DataError("cannot write per-round CSV '" + per_round_path + "'");
  out << "game_id,round_idx,condition,model,listener_err,listener_match,speaker_match\n";
  for (const auto& o : result.rounds) {
    out << o.game_id << ',' << o.round_index << ','
        << color::condition_name(o.condition) << ',' << model_name(o.model) << ','
        << int(o.listener_err) << ',' << int(o.listener_match) << ','
        << int(o.speaker_match) << '\n';
  }
  if (!out) throw DataError("write failed: '" + per_round_path + "'");
}

EvalReport load_report(const std::string& summary_path) {
  std::ifstream in(summary_path);
  if (!in) throw DataError("cannot open report '" + summary_path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

std::vector<RoundOutcome> load_per_round_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open per-round CSV '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line != "game_id,round_idx,condition,model,listener_err,listener_match,speaker_match") {
    throw DataError(path + ": bad per-round CSV header");
  }
  std::vector<RoundOutcome> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    const std::string where = path + ":" + std::to_string(lineno);
    if (f.size() != 7) throw DataError(where + ": expected 7 columns");
    RoundOutcome o;
    o.game_id = f[0];
    o.round_index = std::stoul(f[1]);
    const auto c = color::parse_condition(f[2]);
    const auto m = parse_model(f[3]);
    if (!c || !m) throw DataError(where + ": bad condition or model");
    o.condition = *c;
    o.model = *m;
    o.listener_err = f[4] == "1";
    o.listener_match = f[5] == "1";
    o.speaker_match = f[6] == "1";
    out.push_back(o);
  }
  return out;
}

}  // namespace pragmachine::eval
