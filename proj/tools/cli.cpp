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

#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pragmachine/corpus.hpp"
#include "pragmachine/error.hpp"
#include "pragmachine/eval.hpp"
#include "pragmachine/gdprag.hpp"
#include "pragmachine/jsonio.hpp"
#include "pragmachine/lexicon.hpp"
#include "pragmachine/logging.hpp"
#include "pragmachine/parallel.hpp"
#include "pragmachine/random.hpp"
#include "pragmachine/server.hpp"
#include "pragmachine/training.hpp"

namespace pragmachine::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_fixed(double v, int digits = 4) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::optional<corpus::SplitTag> parse_split_flag(const std::string& s) {
  if (s == "all") return std::nullopt;
  const auto tag = corpus::parse_split(s);
  if (!tag) throw UsageError("--split: expected train, val, test or all, got '" + s + "'");
  return tag;
}

std::vector<corpus::Round> select_split(const std::vector<corpus::Round>& rounds,
                                        std::optional<corpus::SplitTag> s) {
  return s ? corpus::filter_split(rounds, *s) : rounds;
}

gd::Objective parse_objective_flag(const std::string& s) {
  const auto o = gd::parse_objective(s);
  if (!o) throw UsageError("--objective: expected le or rd, got '" + s + "'");
  return *o;
}

// Corpus with split tags; untagged corpora are split 80/10/10 by game.
std::vector<corpus::Round> load_tagged_corpus(const std::string& path,
                                              const corpus::Vocabulary& vocab,
                                              double threshold, std::uint64_t seed,
                                              RunManifest& manifest) {
  corpus::LoadStats stats;
  auto rounds = corpus::load_corpus(path, vocab, threshold, &stats);
  manifest.add_input(path);
  if (stats.dropped_out_of_vocabulary > 0) {
    logging::info("{}: dropped {} of {} rounds with out-of-vocabulary utterances",
                  path, stats.dropped_out_of_vocabulary, stats.records);
  }
  if (!stats.had_split_tags) {
    const std::uint64_t s = derive_seed(seed, "split");
    manifest.seeds["split"] = s;
    rounds = corpus::split_corpus(std::move(rounds), {0.8, 0.1, 0.1}, s);
  }
  return rounds;
}

corpus::Vocabulary load_vocab_input(const std::string& path, RunManifest& m) {
  auto v = corpus::load_vocab(path);
  m.add_input(path);
  return v;
}

lexicon::LexiconParams load_params_input(const std::string& path,
                                         const corpus::Vocabulary& vocab,
                                         RunManifest& m) {
  auto p = lexicon::load_params(path, vocab);
  m.add_input(path);
  return p;
}

void write_manifest(RunManifest& m, const std::vector<std::string>& outputs,
                    const std::string& path) {
  for (const auto& o : outputs) m.add_output(o);
  save_manifest(m, path);
}

// ------------------------------------------------------------------ gen-data

struct GenDataOpts {
  std::string config;
  std::string out;
  std::string vocab_out;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_data(const GenDataOpts& o, RunManifest& m, std::ostream& out) {
  corpus::SyntheticConfig cfg;
  double zipf = 1.0;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
  if (!o.config.empty()) {
    json j;
    try {
      j = json::parse(read_file(o.config));
    } catch (const json::exception& e) {
      throw DataError(o.config + ": " + e.what());
    }
    m.add_input(o.config);
    if (!j.is_object()) throw DataError(o.config + ": config must be a JSON object");
    try {
      for (auto& [k, v] : j.items()) {
        if (k == "n_games") cfg.n_games = v.get<std::size_t>();
        else if (k == "rounds_per_game") cfg.rounds_per_game = v.get<std::size_t>();
        else if (k == "speaker_alpha") cfg.speaker_alpha = v.get<double>();
        else if (k == "noise_eps") cfg.noise_eps = v.get<double>();
        else if (k == "threshold") cfg.threshold = v.get<double>();
        else if (k == "lexicon_floor") cfg.lexicon_floor = v.get<double>();
        else if (k == "max_tries") cfg.max_tries = v.get<int>();
        else if (k == "zipf_exponent") zipf = v.get<double>();
        else if (k == "seed") seed = v.get<std::uint64_t>();
        else if (k == "split") ratios = v.get<std::array<double, 3>>();
        else throw DataError(o.config + ": unknown config key '" + k + "'");
      }
    } catch (const json::exception& e) {
      throw DataError(o.config + ": " + e.what());
    }
  }
  if (o.seed) seed = *o.seed;
  const std::string vocab_out = o.vocab_out.empty() ? o.out + ".vocab.tsv" : o.vocab_out;

  const auto vocab = corpus::default_vocabulary(zipf);
  const auto costs = corpus::cost_from_frequency(vocab);
  cfg.seed = derive_seed(seed, "data");
  auto rounds = corpus::generate_synthetic(cfg, vocab, corpus::default_prototypes(), costs);
  const std::uint64_t split_seed = derive_seed(seed, "split");
  rounds = corpus::split_corpus(std::move(rounds), ratios, split_seed);
  corpus::save_corpus(rounds, vocab, o.out);
  corpus::save_vocab(vocab, vocab_out);

  m.config = {{"n_games", cfg.n_games},
              {"rounds_per_game", cfg.rounds_per_game},
              {"speaker_alpha", cfg.speaker_alpha},
              {"noise_eps", cfg.noise_eps},
              {"threshold", cfg.threshold},
              {"lexicon_floor", cfg.lexicon_floor},
              {"max_tries", cfg.max_tries},
              {"zipf_exponent", zipf},
              {"split", ratios}};
  m.seeds = {{"global", seed}, {"data", cfg.seed}, {"split", split_seed}};
  write_manifest(m, {o.out, vocab_out}, o.out + ".manifest.json");
  out << "wrote " << rounds.size() << " rounds (" << cfg.n_games << " games) to "
      << o.out << "\nwrote vocabulary (" << vocab.size() << " entries) to "
      << vocab_out << '\n';
  return 0;
}

// ------------------------------------------------------------- train-lexicon

struct TrainOpts {
  std::string mode = "decontextualized";
  std::string corpus;
  std::string vocab;
  std::string embeddings = "random";
  std::size_t dim = lexicon::kDefaultEmbeddingDim;
  std::string init_params;
  std::string out;
  std::string history;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  int epochs = 50;
  int patience = 5;
  std::string optimizer = "adam";
  double alpha = rsa::RsaConfig{}.alpha;
  double threshold = color::kDefaultThreshold;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainOpts& o, RunManifest& m, std::ostream& out) {
  const bool supervised = o.mode == "supervised";
  if (!supervised && o.mode != "decontextualized") {
    throw UsageError("--mode: expected decontextualized or supervised, got '" + o.mode + "'");
  }
  training::TrainConfig tc;
  tc.lr = o.lr;
  tc.batch_size = o.batch_size;
  tc.epochs = o.epochs;
  tc.patience = o.patience;
  tc.seed = derive_seed(o.seed, "training");
  const auto opt = training::parse_optimizer(o.optimizer);
  if (!opt) throw UsageError("--optimizer: expected adam or plain-gd, got '" + o.optimizer + "'");
  tc.optimizer = *opt;
  tc.validate();

  const auto vocab = load_vocab_input(o.vocab, m);
  const auto costs = corpus::cost_from_frequency(vocab);
  const auto rounds = load_tagged_corpus(o.corpus, vocab, o.threshold, o.seed, m);
  const auto train = corpus::filter_split(rounds, corpus::SplitTag::kTrain);
  const auto val = corpus::filter_split(rounds, corpus::SplitTag::kVal);
  if (train.empty()) throw DataError(o.corpus + ": no training rounds");

  lexicon::LexiconParams p0;
  std::string init_source;
  if (!o.init_params.empty()) {
    p0 = load_params_input(o.init_params, vocab, m);
    init_source = o.init_params;
  } else {
    init_source = o.embeddings;
    if (o.embeddings == "random") {
      const std::uint64_t s = derive_seed(o.seed, "init");
      m.seeds["init"] = s;
      p0 = lexicon::make_params(lexicon::init_embeddings_random(vocab.size(), o.dim, s));
    } else {
      p0 = lexicon::make_params(lexicon::init_embeddings(o.embeddings, vocab));
      if (o.embeddings.rfind("random:", 0) != 0) m.add_input(o.embeddings);
    }
  }
  const auto result =
      supervised ? training::train_sl_supervised(train, val, costs, p0, o.alpha, tc)
                 : training::train_lexicon_decontextualized(train, val, costs, p0, tc);
  const std::string history = o.history.empty() ? o.out + ".history.csv" : o.history;
  lexicon::save_params(result.params, vocab, o.out);
  training::save_history_csv(result.history, history);

  m.config = {{"mode", o.mode},
              {"init", init_source},
              {"dim", p0.dim()},
              {"lr", o.lr},
              {"batch_size", o.batch_size},
              {"epochs", o.epochs},
              {"patience", o.patience},
              {"optimizer", training::optimizer_name(tc.optimizer)},
              {"alpha", o.alpha},
              {"threshold", o.threshold}};
  m.seeds["global"] = o.seed;
  m.seeds["training"] = tc.seed;
  write_manifest(m, {o.out, history}, o.out + ".manifest.json");
  const auto& first = result.history.front();
  const auto& best = result.history[static_cast<std::size_t>(result.best_epoch)];
  out << o.mode << " training: " << train.size() << " train / " << val.size()
      << " val rounds, " << (result.history.size() - 1) << " epochs, best epoch "
      << result.best_epoch << "\nval log-likelihood " << fmt_fixed(first.val_ll)
      << " -> " << fmt_fixed(best.val_ll) << "\nwrote " << o.out << '\n';
  return 0;
}

// -------------------------------------------------------------------- agents

struct AgentOpts {
  double alpha = gd::kDefaultAlpha;
  int steps = gd::kDefaultSteps;
  double lr = gd::kDefaultLearningRate;
  int t = 1;
  std::string objective = "le";
  bool no_cost = false;
};

eval::EvalConfig agent_config(const AgentOpts& a, std::uint64_t seed) {
  eval::EvalConfig c;
  c.am.alpha = a.alpha;
  c.am.t = a.t;
  c.am.use_cost = !a.no_cost;
  c.gd.alpha = a.alpha;
  c.gd.steps = a.steps;
  c.gd.lr = a.lr;
  c.gd.objective = parse_objective_flag(a.objective);
  c.gd.use_cost = !a.no_cost;
  c.gd.validate();
  if (a.t < 1) throw UsageError("--t must be >= 1");
  c.seed = seed;
  return c;
}

ordered_json agent_json(const AgentOpts& a) {
  return {{"alpha", a.alpha}, {"steps", a.steps}, {"lr", a.lr},
          {"t", a.t},         {"objective", a.objective}, {"use_cost", !a.no_cost}};
}

void add_agent_flags(CLI::App* sub, AgentOpts& a) {
  sub->add_option("--alpha", a.alpha, "Speaker rationality");
  sub->add_option("--steps", a.steps, "GD steps per context");
  sub->add_option("--lr", a.lr, "GD learning rate");
  sub->add_option("--t", a.t, "AM iterations");
  sub->add_option("--objective", a.objective, "GD objective: le or rd");
  sub->add_flag("--no-cost", a.no_cost, "Drop utterance costs from the agents");
}

// ---------------------------------------------------------------------- prag

struct PragOpts {
  std::string model = "gd";
  std::string corpus;
  std::string vocab;
  std::string params;
  std::string split = "test";
  std::string out;
  std::string trace;
  double threshold = color::kDefaultThreshold;
  std::uint64_t seed = 0;
  AgentOpts agents;
};

int cmd_prag(const PragOpts& o, RunManifest& m, std::ostream& out) {
  const auto model = eval::parse_model(o.model);
  if (!model || *model == eval::Model::kSl) {
    throw UsageError("--model: expected base, am or gd, got '" + o.model + "'");
  }
  auto cfg = agent_config(o.agents, derive_seed(o.seed, "gd-init"));
  const auto vocab = load_vocab_input(o.vocab, m);
  const auto costs = corpus::cost_from_frequency(vocab);
  const auto params = load_params_input(o.params, vocab, m);
  const auto rounds =
      select_split(load_tagged_corpus(o.corpus, vocab, o.threshold, o.seed, m),
                   parse_split_flag(o.split));
  const eval::Artifacts art{&params, nullptr, &costs};
  const auto agents = map_indices<eval::Agents>(
      rounds.size(), ExecPolicy::kParallel, [&](std::size_t i) {
        return eval::build_agents(*model, rounds[i].context, art, cfg);
      });

  std::ofstream file(o.out);
  if (!file) throw DataError("cannot write '" + o.out + "'");
  std::optional<std::ofstream> trace;
  if (!o.trace.empty()) {
    trace.emplace(o.trace);
    if (!*trace) throw DataError("cannot write trace '" + o.trace + "'");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    const auto& r = rounds[i];
    const auto& a = agents[i];
    const auto listener = a.listener.row(r.utterance_id);
    const std::size_t guess = rsa::argmax(listener);
    const std::size_t said = rsa::argmax(a.speaker.row(r.target_index));
    correct += guess == r.target_index;
    ordered_json j;
    j["game_id"] = r.game_id;
    j["round_index"] = r.round_index;
    j["condition"] = color::condition_name(r.condition);
    j["target"] = r.target_index;
    j["utterance"] = vocab.text(r.utterance_id);
    j["listener"] = std::vector<double>(listener.begin(), listener.end());
    j["listener_argmax"] = guess;
    j["speaker_argmax"] = vocab.text(said);
    file << j.dump() << '\n';
    if (trace) {
      write_trace_jsonl(*trace, a.trace,
                        {{"game_id", r.game_id}, {"round_index", r.round_index}});
    }
  }
  file.close();
  if (trace) trace->close();
  m.config = agent_json(o.agents);
  m.config["model"] = eval::model_name(*model);
  m.config["split"] = o.split;
  m.config["threshold"] = o.threshold;
  m.seeds = {{"global", o.seed}, {"gd-init", cfg.seed}};
  std::vector<std::string> outs{o.out};
  if (!o.trace.empty()) outs.push_back(o.trace);
  write_manifest(m, outs, o.out + ".manifest.json");
  out << eval::model_name(*model) << " over " << rounds.size()
      << " rounds: listener accuracy "
      << fmt_fixed(rounds.empty() ? 0.0 : double(correct) / double(rounds.size()))
      << "\nwrote " << o.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------- eval

struct EvalOpts {
  std::string models = "base,am,gd";
  std::string corpus;
  std::string vocab;
  std::string ssl_params;
  std::string sl_params;
  std::string report;
  std::string split = "test";
  int seeds = 1;
  double threshold = color::kDefaultThreshold;
  std::uint64_t seed = 0;
  AgentOpts agents;
};

int cmd_eval(const EvalOpts& o, RunManifest& m, std::ostream& out) {
  const auto models = eval::parse_model_list(o.models);
  if (o.seeds < 1) throw UsageError("--seeds must be >= 1");
  const bool needs_ssl = std::any_of(models.begin(), models.end(),
                                     [](eval::Model x) { return x != eval::Model::kSl; });
  const bool needs_sl = std::find(models.begin(), models.end(), eval::Model::kSl) != models.end();
  if (needs_sl && (o.sl_params.empty() || !fs::exists(o.sl_params))) {
    throw DataError("missing artifact: sl lexicon");
  }
  if (needs_ssl && (o.ssl_params.empty() || !fs::exists(o.ssl_params))) {
    throw DataError("missing artifact: ssl lexicon");
  }
  auto base_cfg = agent_config(o.agents, 0);
  const auto vocab = load_vocab_input(o.vocab, m);
  const auto costs = corpus::cost_from_frequency(vocab);
  std::optional<lexicon::LexiconParams> ssl, sl;
  if (needs_ssl) ssl = load_params_input(o.ssl_params, vocab, m);
  if (needs_sl) sl = load_params_input(o.sl_params, vocab, m);
  const auto rounds =
      select_split(load_tagged_corpus(o.corpus, vocab, o.threshold, o.seed, m),
                   parse_split_flag(o.split));
  if (rounds.empty()) throw DataError(o.corpus + ": no rounds in split '" + o.split + "'");
  const eval::Artifacts art{ssl ? &*ssl : nullptr, sl ? &*sl : nullptr, &costs};

  fs::create_directories(o.report);
  const std::string summary = (fs::path(o.report) / "summary.json").string();
  const std::string per_round = (fs::path(o.report) / "per_round.csv").string();
  std::vector<eval::EvalReport> reports;
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < o.seeds; ++k) {
    eval::EvalConfig cfg = base_cfg;
    cfg.seed = derive_seed(o.seed, "eval", static_cast<std::uint64_t>(k));
    seeds.push_back(cfg.seed);
    auto res = eval::evaluate(models, rounds, art, cfg);
    if (k == 0) eval::emit_report(res, summary, per_round);
    reports.push_back(std::move(res.report));
  }
  std::vector<std::string> outs{summary, per_round};
  const auto stats = eval::summarize_seeds(reports);
  if (o.seeds > 1) {
    ordered_json j = ordered_json::array();
    for (const auto& s : stats) {
      j.push_back({{"model", eval::model_name(s.model)},
                   {"condition", s.condition ? color::condition_name(*s.condition) : "all"},
                   {"seeds", s.seeds},
                   {"mean_error_rate", s.mean_error_rate},
                   {"sd_error_rate", s.sd_error_rate},
                   {"mean_accuracy", 1.0 - s.mean_error_rate}});
    }
    const std::string path = (fs::path(o.report) / "seeds.json").string();
    std::ofstream f(path);
    f << j.dump(2) << '\n';
    if (!f) throw DataError("write failed: '" + path + "'");
    f.close();
    outs.push_back(path);
  }
  m.config = agent_json(o.agents);
  m.config["models"] = o.models;
  m.config["split"] = o.split;
  m.config["seeds"] = o.seeds;
  m.config["threshold"] = o.threshold;
  m.seeds["global"] = o.seed;
  for (std::size_t k = 0; k < seeds.size(); ++k) m.seeds["eval-" + std::to_string(k)] = seeds[k];
  write_manifest(m, outs, (fs::path(o.report) / "manifest.json").string());

  out << "model  condition  n      error    accuracy" << (o.seeds > 1 ? "  (mean ± sd over seeds)" : "")
      << '\n';
  for (const auto& s : stats) {
    const auto* b = reports.front().find(s.model, s.condition, std::nullopt);
    char line[160];
    std::snprintf(line, sizeof line, "%-6s %-10s %-6zu %.4f   %.4f",
                  std::string(eval::model_name(s.model)).c_str(),
                  s.condition ? std::string(color::condition_name(*s.condition)).c_str() : "all",
                  b->n_rounds, s.mean_error_rate, 1.0 - s.mean_error_rate);
    out << line;
    if (o.seeds > 1) out << "  ± " << fmt_fixed(s.sd_error_rate);
    out << '\n';
  }
  out << "wrote " << summary << " and " << per_round << '\n';
  return 0;
}

// ----------------------------------------------------------------- gradcheck

struct GradcheckOpts {
  std::string objective = "le";
  std::size_t vocab_size = 5;
  std::size_t meanings = 3;
  std::uint64_t seed = 0;
  double h = 1e-5;
  double alpha = gd::kDefaultAlpha;
  bool no_cost = false;
  int instances = 1;
  double tolerance = 1e-5;
};

int cmd_gradcheck(const GradcheckOpts& o, std::ostream& out) {
  const auto objective = parse_objective_flag(o.objective);
  if (!(o.h > 0.0)) throw UsageError("--h must be positive");
  if (o.vocab_size < 1 || o.meanings < 1) throw UsageError("--vocab-size and --meanings must be >= 1");
  if (o.instances < 1) throw UsageError("--instances must be >= 1");
  const auto reports = gd::audit_gradients(objective, static_cast<std::size_t>(o.instances), o.meanings,
                                           o.vocab_size, o.seed, o.alpha, !o.no_cost, o.h);
  double worst = 0.0;
  std::string where;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (reports[i].max_rel_error >= worst) {
      worst = reports[i].max_rel_error;
      where = reports[i].worst_location + " (instance " + std::to_string(i) + ")";
    }
  }
  const bool ok = worst <= o.tolerance;
  out << "gradcheck objective=" << gd::objective_name(objective)
      << " meanings=" << o.meanings << " vocab-size=" << o.vocab_size
      << " alpha=" << fmt_double(o.alpha) << " use_cost=" << (o.no_cost ? "false" : "true")
      << " instances=" << o.instances << "\nmax relative error " << fmt_double(worst)
      << " at " << where << "\n" << (ok ? "PASS" : "FAIL") << " (tolerance "
      << fmt_double(o.tolerance) << ")\n";
  return ok ? 0 : 4;
}

// ---------------------------------------------------------------------- demo

struct DemoOpts {
  std::string context;
  std::size_t target = 0;
  std::string vocab;
  std::string ssl_params;
  std::string sl_params;
  std::size_t top = 5;
  std::uint64_t seed = 0;
  AgentOpts agents;
};

int cmd_demo(const DemoOpts& o, std::ostream& out) {
  if (o.target > 2) throw UsageError("--target must be 0, 1 or 2");
  color::Context ctx;
  std::vector<std::string> hexes;
  {
    std::stringstream ss(o.context);
    std::string item;
    while (std::getline(ss, item, ',')) hexes.push_back(item);
  }
  if (hexes.size() != 3) throw UsageError("--context needs exactly three comma-separated hex colors");
  for (std::size_t i = 0; i < 3; ++i) {
    try {
      ctx[i] = color::rgb_to_cieluv(color::parse_hex(hexes[i]));
    } catch (const std::exception& e) {
      throw UsageError(std::string("--context: ") + e.what());
    }
  }
  const auto cfg = agent_config(o.agents, derive_seed(o.seed, "gd-init"));
  const auto vocab = corpus::load_vocab(o.vocab);
  const auto costs = corpus::cost_from_frequency(vocab);
  const auto ssl = lexicon::load_params(o.ssl_params, vocab);
  std::optional<lexicon::LexiconParams> sl;
  if (!o.sl_params.empty()) sl = lexicon::load_params(o.sl_params, vocab);
  const eval::Artifacts art{&ssl, sl ? &*sl : nullptr, &costs};
  std::vector<eval::Model> models{eval::Model::kBase, eval::Model::kSslAm, eval::Model::kSslGd};
  if (sl) models.push_back(eval::Model::kSl);

  out << "context:";
  for (std::size_t i = 0; i < 3; ++i) {
    out << ' ' << color::to_hex(color::parse_hex(hexes[i])) << (i == o.target ? "*" : "");
  }
  out << "  (condition " << color::condition_name(color::classify_condition(ctx, o.target, color::kDefaultThreshold))
      << ")\n";
  for (eval::Model model : models) {
    const auto agents = eval::build_agents(model, ctx, art, cfg);
    const auto row = agents.speaker.row(o.target);
    std::vector<std::size_t> order(row.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    out << eval::model_name(model) << ":";
    for (std::size_t k = 0; k < std::min(o.top, order.size()); ++k) {
      out << "  " << vocab.text(order[k]) << " " << fmt_fixed(row[order[k]], 3);
    }
    out << '\n';
  }
  return 0;
}

// --------------------------------------------------------------------- serve

struct ServeOpts {
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string vocab;
  std::string ssl_params;
  std::string sl_params;
  std::string static_dir;
  double threshold = color::kDefaultThreshold;
  std::uint64_t seed = 0;
  AgentOpts agents;
};

int cmd_serve(const ServeOpts& o, std::ostream& out) {
  server::ServiceConfig cfg;
  cfg.threshold = o.threshold;
  cfg.seed = o.seed;
  cfg.agents = agent_config(o.agents, o.seed);
  std::optional<server::Artifacts> art;
  if (!o.vocab.empty()) {
    server::Artifacts a;
    a.vocab = corpus::load_vocab(o.vocab);
    a.costs = corpus::cost_from_frequency(a.vocab);
    a.hashes["vocab_file"] = file_hash(o.vocab);
    if (!o.ssl_params.empty()) {
      a.ssl = lexicon::load_params(o.ssl_params, a.vocab);
      a.hashes["ssl"] = file_hash(o.ssl_params);
    }
    if (!o.sl_params.empty()) {
      a.sl = lexicon::load_params(o.sl_params, a.vocab);
      a.hashes["sl"] = file_hash(o.sl_params);
    }
    art = std::move(a);
  } else {
    logging::warn("no --vocab given; sessions will answer 503 until artifacts are loaded");
  }
  server::GameService service(std::move(art), cfg);
  out << "listening on http://" << o.host << ':' << o.port << std::endl;
  if (!server::serve(service, o.host, o.port, o.static_dir)) {
    throw UsageError("--port: cannot listen on " + o.host + ":" + std::to_string(o.port));
  }
  return 0;
}

// -------------------------------------------------------------------- replay

int cmd_replay(const std::string& path, std::ostream& out, std::ostream& err) {
  const RunManifest m = load_manifest(path);
  if (m.argv.empty() || m.argv.front() == "replay") {
    throw DataError(path + ": manifest has no replayable command");
  }
  const int code = run_cli(m.argv, out, err);
  if (code != 0) return code;
  bool same = true;
  for (const auto& [file, hash] : m.outputs) {
    const std::string now = file_hash(file);
    if (now != hash) {
      err << "replay: " << file << " differs (" << hash << " -> " << now << ")\n";
      same = false;
    }
  }
  out << "replay: " << m.outputs.size() << " outputs " << (same ? "identical" : "DIFFER")
      << '\n';
  return same ? 0 : 4;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"pragmachine: pragmatic agents for the color reference game"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  int jobs = 0;
  app.add_option("--jobs", jobs, "Worker threads for per-context work (0 = all cores)");

  GenDataOpts gen;
  auto* s_gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  s_gen->add_option("--config", gen.config, "JSON config file");
  s_gen->add_option("--out", gen.out, "Corpus JSONL output")->required();
  s_gen->add_option("--vocab-out", gen.vocab_out, "Vocabulary TSV output (default <out>.vocab.tsv)");
  s_gen->add_option("--seed", gen.seed, "Seed (overrides the config's)");

  TrainOpts tr;
  auto* s_train = app.add_subcommand("train-lexicon", "Train a lexicon");
  s_train->add_option("--mode", tr.mode, "decontextualized or supervised");
  s_train->add_option("--corpus", tr.corpus, "Corpus JSONL")->required();
  s_train->add_option("--vocab", tr.vocab, "Vocabulary TSV")->required();
  s_train->add_option("--embeddings", tr.embeddings,
                      "Embedding JSONL path, random, or random:<seed>[:<dim>]");
  s_train->add_option("--dim", tr.dim, "Embedding dimension for --embeddings random");
  s_train->add_option("--init-params", tr.init_params, "Start from these lexicon params");
  s_train->add_option("--out", tr.out, "Params JSON output")->required();
  s_train->add_option("--history", tr.history, "History CSV (default <out>.history.csv)");
  s_train->add_option("--lr", tr.lr, "Learning rate");
  s_train->add_option("--batch-size", tr.batch_size, "Mini-batch size");
  s_train->add_option("--epochs", tr.epochs, "Maximum epochs");
  s_train->add_option("--patience", tr.patience, "Early-stopping patience in epochs");
  s_train->add_option("--optimizer", tr.optimizer, "adam or plain-gd");
  s_train->add_option("--alpha", tr.alpha, "Speaker rationality for supervised training");
  s_train->add_option("--threshold", tr.threshold, "Condition distance threshold");
  s_train->add_option("--seed", tr.seed, "Seed");

  PragOpts pr;
  auto* s_prag = app.add_subcommand("prag", "Run pragmatic agents over a corpus split");
  s_prag->add_option("--model", pr.model, "base, am or gd");
  s_prag->add_option("--corpus", pr.corpus, "Corpus JSONL")->required();
  s_prag->add_option("--vocab", pr.vocab, "Vocabulary TSV")->required();
  s_prag->add_option("--params", pr.params, "Lexicon params JSON")->required();
  s_prag->add_option("--split", pr.split, "train, val, test or all");
  s_prag->add_option("--out", pr.out, "Per-round JSONL output")->required();
  s_prag->add_option("--trace", pr.trace, "Objective trace JSONL output");
  s_prag->add_option("--threshold", pr.threshold, "Condition distance threshold");
  s_prag->add_option("--seed", pr.seed, "Seed");
  add_agent_flags(s_prag, pr.agents);

  EvalOpts ev;
  auto* s_eval = app.add_subcommand("eval", "Evaluate models on a corpus split");
  s_eval->add_option("--models", ev.models, "Comma-separated: base,am,gd,sl");
  s_eval->add_option("--corpus", ev.corpus, "Corpus JSONL")->required();
  s_eval->add_option("--vocab", ev.vocab, "Vocabulary TSV")->required();
  s_eval->add_option("--ssl-params", ev.ssl_params, "Decontextualized lexicon params");
  s_eval->add_option("--sl-params", ev.sl_params, "Supervised lexicon params");
  s_eval->add_option("--report", ev.report, "Report directory")->required();
  s_eval->add_option("--split", ev.split, "train, val, test or all");
  s_eval->add_option("--seeds", ev.seeds, "Number of GD seeds (mean ± sd)");
  s_eval->add_option("--threshold", ev.threshold, "Condition distance threshold");
  s_eval->add_option("--seed", ev.seed, "Seed");
  add_agent_flags(s_eval, ev.agents);

  GradcheckOpts gc;
  auto* s_gc = app.add_subcommand("gradcheck", "Finite-difference audit of GD gradients");
  s_gc->set_help_flag("--help", "Print this help message and exit");
  s_gc->add_option("--objective", gc.objective, "le or rd");
  s_gc->add_option("--vocab-size", gc.vocab_size, "Utterances");
  s_gc->add_option("--meanings", gc.meanings, "Meanings");
  s_gc->add_option("--seed", gc.seed, "Seed");
  s_gc->add_option("--h", gc.h, "Central-difference step");
  s_gc->add_option("--alpha", gc.alpha, "Alpha");
  s_gc->add_flag("--no-cost", gc.no_cost, "Cost-free objective");
  s_gc->add_option("--instances", gc.instances, "Random instances to audit");
  s_gc->add_option("--tolerance", gc.tolerance, "Maximum relative error");

  DemoOpts dm;
  auto* s_demo = app.add_subcommand("demo", "Show each model's top utterances for a context");
  s_demo->add_option("--context", dm.context, "'#hex,#hex,#hex'")->required();
  s_demo->add_option("--target", dm.target, "Target index");
  s_demo->add_option("--vocab", dm.vocab, "Vocabulary TSV")->required();
  s_demo->add_option("--ssl-params", dm.ssl_params, "Decontextualized lexicon params")->required();
  s_demo->add_option("--sl-params", dm.sl_params, "Supervised lexicon params");
  s_demo->add_option("--top", dm.top, "Utterances shown per model");
  s_demo->add_option("--seed", dm.seed, "Seed");
  add_agent_flags(s_demo, dm.agents);

  ServeOpts sv;
  auto* s_serve = app.add_subcommand("serve", "Serve the game API over HTTP");
  s_serve->add_option("--port", sv.port, "Port");
  s_serve->add_option("--host", sv.host, "Bind address");
  s_serve->add_option("--vocab", sv.vocab, "Vocabulary TSV");
  s_serve->add_option("--ssl-params", sv.ssl_params, "Decontextualized lexicon params");
  s_serve->add_option("--sl-params", sv.sl_params, "Supervised lexicon params");
  s_serve->add_option("--static", sv.static_dir, "Static asset directory mounted at /");
  s_serve->add_option("--threshold", sv.threshold, "Condition distance threshold");
  s_serve->add_option("--seed", sv.seed, "Seed");
  add_agent_flags(s_serve, sv.agents);

  std::string manifest_path;
  auto* s_replay = app.add_subcommand("replay", "Re-run a command from its manifest and compare outputs");
  s_replay->add_option("--manifest", manifest_path, "Manifest JSON")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (jobs < 0) throw UsageError("--jobs must be >= 0");
    if (jobs > 0) set_num_threads(jobs);
    RunManifest m;
    m.argv = args;
    if (s_gen->parsed()) {
      m.command = "gen-data";
      return cmd_gen_data(gen, m, out);
    }
    if (s_train->parsed()) {
      m.command = "train-lexicon";
      return cmd_train(tr, m, out);
    }
    if (s_prag->parsed()) {
      m.command = "prag";
      return cmd_prag(pr, m, out);
    }
    if (s_eval->parsed()) {
      m.command = "eval";
      return cmd_eval(ev, m, out);
    }
    if (s_gc->parsed()) return cmd_gradcheck(gc, out);
    if (s_demo->parsed()) return cmd_demo(dm, out);
    if (s_serve->parsed()) return cmd_serve(sv, out);
    if (s_replay->parsed()) return cmd_replay(manifest_path, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace pragmachine::cli
