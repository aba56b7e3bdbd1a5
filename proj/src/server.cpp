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

#include "pragmachine/server.hpp"

#include <array>
#include <cmath>

#include <json.hpp>

#include "pragmachine/error.hpp"
#include "pragmachine/jsonio.hpp"
#include "pragmachine/random.hpp"

namespace pragmachine::server {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct HttpError : std::runtime_error {
  HttpError(int status, const std::string& msg, ordered_json extra = {})
      : std::runtime_error(msg), status(status), extra(std::move(extra)) {}
  int status;
  ordered_json extra;
};

Response reply(const ordered_json& j, int status = 200) { return {status, j.dump()}; }

Response error_reply(int status, const std::string& msg,
                     const ordered_json& extra = {}) {
  ordered_json j;
  j["error"] = msg;
  if (extra.is_object()) {
    for (auto& [k, v] : extra.items()) j[k] = v;
  }
  return reply(j, status);
}

json parse_body(const std::string& body) {
  json j;
  try {
    j = json::parse(body.empty() ? "{}" : body);
  } catch (const json::exception&) {
    throw HttpError(400, "request body is not valid JSON");
  }
  if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
  return j;
}

std::string string_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw HttpError(400, std::string("missing string field '") + key + "'");
  }
  return j[key].get<std::string>();
}

Overrides parse_overrides(const json& j) {
  Overrides o;
  if (!j.contains("overrides") || j["overrides"].is_null()) return o;
  const json& v = j["overrides"];
  if (!v.is_object()) throw HttpError(400, "'overrides' must be an object");
  for (auto& [k, x] : v.items()) {
    if (k == "alpha") {
      if (!x.is_number() || !(x.get<double>() >= 0.0)) {
        throw HttpError(400, "overrides.alpha must be a number >= 0");
      }
      o.alpha = x.get<double>();
    } else if (k == "steps") {
      if (!x.is_number_integer() || x.get<long long>() < 1 ||
          x.get<long long>() > kMaxSteps) {
        throw HttpError(400, "overrides.steps must be an integer in [1, " +
                                 std::to_string(kMaxSteps) + "]");
      }
      o.steps = x.get<int>();
    } else if (k == "lr") {
      if (!x.is_number() || !(x.get<double>() > 0.0)) {
        throw HttpError(400, "overrides.lr must be a positive number");
      }
      o.lr = x.get<double>();
    } else if (k == "objective") {
      const auto obj = x.is_string() ? gd::parse_objective(x.get<std::string>())
                                     : std::nullopt;
      if (!obj) throw HttpError(400, "overrides.objective must be \"le\" or \"rd\"");
      o.objective = obj;
    } else if (k == "seed") {
      if (!x.is_number_unsigned()) {
        throw HttpError(400, "overrides.seed must be a nonnegative integer");
      }
      o.seed = x.get<std::uint64_t>();
    } else {
      throw HttpError(400, "unknown override '" + k + "'");
    }
  }
  return o;
}

ordered_json overrides_json(const Overrides& o) {
  ordered_json j = ordered_json::object();
  if (o.alpha) j["alpha"] = *o.alpha;
  if (o.steps) j["steps"] = *o.steps;
  if (o.lr) j["lr"] = *o.lr;
  if (o.objective) j["objective"] = gd::objective_name(*o.objective);
  if (o.seed) j["seed"] = *o.seed;
  return j;
}

std::vector<std::string> hex_colors(const std::array<color::ColorRgb, 3>& rgb) {
  std::vector<std::string> out;
  for (const auto& c : rgb) out.push_back(color::to_hex(c));
  return out;
}

std::vector<double> row_vector(std::span<const double> r) {
  return {r.begin(), r.end()};
}

}  // namespace

struct GameService::RoundState {
  std::string id;
  std::array<color::ColorRgb, 3> rgb{};
  color::Context luv{};
  std::size_t target = 0;
  color::Condition condition = color::Condition::kFar;
  std::optional<std::size_t> agent_utterance;
  std::vector<double> agent_distribution;
  bool played = false;
  bool correct = false;
  std::optional<std::size_t> human_utterance;
  std::optional<std::size_t> human_choice;
  std::optional<std::size_t> agent_guess;
};

struct GameService::Session {
  std::mutex mu;
  std::string id;
  Role role = Role::kHumanSpeaker;
  eval::Model model = eval::Model::kBase;
  Overrides overrides;
  std::uint64_t seed = 0;
  std::vector<RoundState> rounds;
  std::size_t correct = 0;
  std::size_t total = 0;

  RoundState* find_round(const std::string& id) {
    for (auto& r : rounds) {
      if (r.id == id) return &r;
    }
    return nullptr;
  }
};

GameService::GameService(std::optional<Artifacts> artifacts, ServiceConfig cfg)
    : artifacts_(std::move(artifacts)), cfg_(std::move(cfg)) {}

GameService::~GameService() = default;

std::shared_ptr<GameService::Session> GameService::find_session(
    const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw HttpError(404, "unknown session '" + id + "'");
  return it->second;
}

eval::EvalConfig GameService::agent_config(const Overrides& o,
                                           std::uint64_t seed) const {
  eval::EvalConfig c = cfg_.agents;
  c.policy = ExecPolicy::kSerial;
  c.seed = o.seed.value_or(seed);
  if (o.alpha) {
    c.am.alpha = *o.alpha;
    c.gd.alpha = *o.alpha;
  }
  if (o.steps) c.gd.steps = *o.steps;
  if (o.lr) c.gd.lr = *o.lr;
  if (o.objective) c.gd.objective = *o.objective;
  return c;
}

namespace {

eval::Model parse_session_model(const json& j, const std::optional<Artifacts>& a) {
  const std::string name = string_field(j, "model");
  const auto m = eval::parse_model(name);
  if (!m) throw HttpError(400, "unknown model '" + name + "'");
  if (*m == eval::Model::kSl && !(a && a->sl)) {
    throw HttpError(400, "model 'sl' unavailable: sl lexicon not loaded");
  }
  return *m;
}

eval::Artifacts view(const Artifacts& a) {
  return {a.ssl ? &*a.ssl : nullptr, a.sl ? &*a.sl : nullptr, &a.costs};
}

std::size_t lookup_utterance(const corpus::Vocabulary& vocab,
                             const std::string& raw) {
  const auto id = vocab.find(corpus::normalize_utterance(raw));
  if (!id) {
    ordered_json extra;
    extra["suggestions"] = corpus::nearest_texts(vocab, corpus::normalize_utterance(raw));
    throw HttpError(400, "unknown utterance '" + raw + "'", extra);
  }
  return *id;
}

ordered_json score_json(std::size_t correct, std::size_t total) {
  return {{"correct", correct}, {"total", total}};
}

}  // namespace

Response GameService::create_session(const std::string& body) {
  const json j = parse_body(body);
  if (!artifacts_ || !artifacts_->ssl) {
    throw HttpError(503, "model artifacts not loaded");
  }
  const std::string role_name = string_field(j, "role");
  Role role;
  if (role_name == "speaker" || role_name == "human_speaker") {
    role = Role::kHumanSpeaker;
  } else if (role_name == "listener" || role_name == "human_listener") {
    role = Role::kHumanListener;
  } else {
    throw HttpError(400, "unknown role '" + role_name + "'");
  }
  auto session = std::make_shared<Session>();
  session->role = role;
  session->model = parse_session_model(j, artifacts_);
  session->overrides = parse_overrides(j);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) {
      throw HttpError(400, "'seed' must be a nonnegative integer");
    }
  }
  {
    std::unique_lock lock(mu_);
    const std::uint64_t n = next_session_++;
    session->seed = j.contains("seed") ? j["seed"].get<std::uint64_t>()
                                       : derive_seed(cfg_.seed, "session", n);
    session->id = "s" + hex64(derive_seed(cfg_.seed, "session-id", n));
    sessions_[session->id] = session;
  }
  ordered_json out;
  out["session_id"] = session->id;
  out["role"] = role == Role::kHumanSpeaker ? "speaker" : "listener";
  out["model"] = eval::model_name(session->model);
  out["overrides"] = overrides_json(session->overrides);
  std::vector<std::string> vocab;
  for (const auto& e : artifacts_->vocab.entries()) vocab.push_back(e.text);
  out["vocab"] = vocab;
  return reply(out);
}

Response GameService::new_round(const std::string& body) {
  const json j = parse_body(body);
  auto session = find_session(string_field(j, "session_id"));
  std::optional<color::Condition> want;
  if (j.contains("condition") && !j["condition"].is_null()) {
    want = j["condition"].is_string()
               ? color::parse_condition(j["condition"].get<std::string>())
               : std::nullopt;
    if (!want) throw HttpError(400, "unknown condition " + j["condition"].dump());
  }
  std::string round_id;
  {
    std::unique_lock lock(mu_);
    round_id = "r" + std::to_string(next_round_++);
    round_owner_[round_id] = session->id;
  }

  std::lock_guard lock(session->mu);
  Rng rng(derive_seed(session->seed, "round", session->rounds.size()));
  RoundState r;
  r.id = round_id;
  const auto cond = want.value_or(static_cast<color::Condition>(rng.below(3)));
  r.target = rng.below(3);
  r.rgb = color::sample_context_rgb(rng, cond, r.target, cfg_.threshold, cfg_.max_tries);
  for (std::size_t i = 0; i < 3; ++i) r.luv[i] = color::rgb_to_cieluv(r.rgb[i]);
  r.condition = color::classify_condition(r.luv, r.target, cfg_.threshold);

  ordered_json out;
  out["round_id"] = r.id;
  out["colors"] = hex_colors(r.rgb);
  out["condition"] = color::condition_name(r.condition);
  if (session->role == Role::kHumanSpeaker) {
    out["target_index"] = r.target;
  } else {
    const auto agents = eval::build_agents(session->model, r.luv, view(*artifacts_),
                                           agent_config(session->overrides, session->seed));
    r.agent_distribution = row_vector(agents.speaker.row(r.target));
    r.agent_utterance = rsa::argmax(r.agent_distribution);
    out["agent_utterance"] = artifacts_->vocab.text(*r.agent_utterance);
  }
  session->rounds.push_back(std::move(r));
  return reply(out);
}

Response GameService::speak(const std::string& body) {
  const json j = parse_body(body);
  auto session = find_session(string_field(j, "session_id"));
  const std::string round_id = string_field(j, "round_id");
  const std::string said = string_field(j, "utterance");
  std::lock_guard lock(session->mu);
  RoundState* r = session->find_round(round_id);
  if (!r) throw HttpError(404, "unknown round '" + round_id + "' for this session");
  if (session->role != Role::kHumanSpeaker) {
    throw HttpError(409, "this session's human is the listener; use /api/round/listen");
  }
  if (r->played) throw HttpError(409, "round '" + round_id + "' already played");
  const std::size_t u = lookup_utterance(artifacts_->vocab, said);
  const auto agents = eval::build_agents(session->model, r->luv, view(*artifacts_),
                                         agent_config(session->overrides, session->seed));
  const std::vector<double> dist = row_vector(agents.listener.row(u));
  const std::size_t guess = rsa::argmax(dist);
  r->played = true;
  r->human_utterance = u;
  r->agent_guess = guess;
  r->correct = guess == r->target;
  session->correct += r->correct;
  session->total += 1;
  ordered_json out;
  out["agent_guess"] = guess;
  out["correct"] = r->correct;
  out["distribution"] = dist;
  out["target_index"] = r->target;
  out["score"] = score_json(session->correct, session->total);
  return reply(out);
}

Response GameService::listen(const std::string& body) {
  const json j = parse_body(body);
  auto session = find_session(string_field(j, "session_id"));
  const std::string round_id = string_field(j, "round_id");
  if (!j.contains("choice") || !j["choice"].is_number_integer()) {
    throw HttpError(400, "missing integer field 'choice'");
  }
  const long long choice = j["choice"].get<long long>();
  if (choice < 0 || choice > 2) throw HttpError(400, "'choice' must be 0, 1 or 2");
  std::lock_guard lock(session->mu);
  RoundState* r = session->find_round(round_id);
  if (!r) throw HttpError(404, "unknown round '" + round_id + "' for this session");
  if (session->role != Role::kHumanListener) {
    throw HttpError(409, "this session's human is the speaker; use /api/round/speak");
  }
  if (r->played) throw HttpError(409, "round '" + round_id + "' already played");
  r->played = true;
  r->human_choice = static_cast<std::size_t>(choice);
  r->correct = r->human_choice == r->target;
  session->correct += r->correct;
  session->total += 1;
  ordered_json out;
  out["agent_utterance"] = artifacts_->vocab.text(*r->agent_utterance);
  out["correct"] = r->correct;
  out["target_index"] = r->target;
  out["distribution"] = r->agent_distribution;
  out["score"] = score_json(session->correct, session->total);
  return reply(out);
}

Response GameService::get_round(const std::string& round_id) {
  std::string owner;
  {
    std::shared_lock lock(mu_);
    auto it = round_owner_.find(round_id);
    if (it == round_owner_.end()) throw HttpError(404, "unknown round '" + round_id + "'");
    owner = it->second;
  }
  auto session = find_session(owner);
  std::lock_guard lock(session->mu);
  const RoundState* r = session->find_round(round_id);
  if (!r) throw HttpError(404, "unknown round '" + round_id + "'");
  ordered_json out;
  out["round_id"] = r->id;
  out["session_id"] = session->id;
  out["colors"] = hex_colors(r->rgb);
  out["condition"] = color::condition_name(r->condition);
  out["played"] = r->played;
  if (r->agent_utterance) out["agent_utterance"] = artifacts_->vocab.text(*r->agent_utterance);
  if (session->role == Role::kHumanSpeaker || r->played) out["target_index"] = r->target;
  if (r->played) {
    out["correct"] = r->correct;
    if (r->agent_guess) out["agent_guess"] = *r->agent_guess;
    if (r->human_utterance) out["utterance"] = artifacts_->vocab.text(*r->human_utterance);
    if (r->human_choice) out["choice"] = *r->human_choice;
  }
  out["score"] = score_json(session->correct, session->total);
  return reply(out);
}

Response GameService::infer(const std::string& body) {
  const json j = parse_body(body);
  if (!artifacts_ || !artifacts_->ssl) throw HttpError(503, "model artifacts not loaded");
  const eval::Model model = parse_session_model(j, artifacts_);
  const Overrides o = parse_overrides(j);
  const bool has_target = j.contains("target") && !j["target"].is_null();
  const bool has_utterance = j.contains("utterance") && !j["utterance"].is_null();
  if (has_target == has_utterance) {
    throw HttpError(400, "exactly one of 'target' or 'utterance' is required");
  }
  if (!j.contains("colors") || !j["colors"].is_array() || j["colors"].size() != 3) {
    throw HttpError(400, "'colors' must list exactly 3 hex colors");
  }
  color::Context ctx;
  std::array<color::ColorRgb, 3> rgb{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!j["colors"][i].is_string()) throw HttpError(400, "colors must be hex strings");
    try {
      rgb[i] = color::parse_hex(j["colors"][i].get<std::string>());
    } catch (const std::exception& e) {
      throw HttpError(400, e.what());
    }
    ctx[i] = color::rgb_to_cieluv(rgb[i]);
  }
  std::optional<std::size_t> target, utterance;
  if (has_target) {
    if (!j["target"].is_number_integer() || j["target"].get<long long>() < 0 ||
        j["target"].get<long long>() > 2) {
      throw HttpError(400, "'target' must be 0, 1 or 2");
    }
    target = j["target"].get<std::size_t>();
  } else {
    if (!j["utterance"].is_string()) throw HttpError(400, "'utterance' must be a string");
    utterance = lookup_utterance(artifacts_->vocab, j["utterance"].get<std::string>());
  }
  const auto agents = eval::build_agents(model, ctx, view(*artifacts_),
                                         agent_config(o, cfg_.seed));
  ordered_json out;
  out["model"] = eval::model_name(model);
  out["colors"] = hex_colors(rgb);
  std::vector<double> dist;
  if (target) {
    dist = row_vector(agents.speaker.row(*target));
    out["kind"] = "speaker";
    out["target"] = *target;
    const std::size_t best = rsa::argmax(dist);
    out["argmax"] = best;
    out["argmax_utterance"] = artifacts_->vocab.text(best);
    out["vocab"] = [&] {
      std::vector<std::string> v;
      for (const auto& e : artifacts_->vocab.entries()) v.push_back(e.text);
      return v;
    }();
  } else {
    dist = row_vector(agents.listener.row(*utterance));
    out["kind"] = "listener";
    out["utterance"] = artifacts_->vocab.text(*utterance);
    out["argmax"] = rsa::argmax(dist);
  }
  out["distribution"] = dist;
  ordered_json diag;
  diag["overrides"] = overrides_json(o);
  ordered_json trace = ordered_json::array();
  for (const auto& rep : agents.trace) trace.push_back(to_json(rep));
  diag["trace"] = std::move(trace);
  if (model == eval::Model::kBase) {
    diag["note"] = "base agents are alpha-free; alpha, steps, lr and objective are ignored";
  }
  out["diagnostics"] = std::move(diag);
  return reply(out);
}

Response GameService::health() const {
  ordered_json out;
  out["status"] = "ok";
  out["version"] = kVersion;
  out["build"] = hex64(fnv1a(std::string(kVersion) + " " + __VERSION__));
  out["artifacts_loaded"] = artifacts_.has_value() && artifacts_->ssl.has_value();
  ordered_json hashes = ordered_json::object();
  if (artifacts_) {
    hashes["vocab"] = artifacts_->vocab.fingerprint();
    for (const auto& [k, v] : artifacts_->hashes) hashes[k] = v;
  }
  out["artifacts"] = std::move(hashes);
  return reply(out);
}

Response GameService::handle(const std::string& method, const std::string& path,
                             const std::string& body) {
  try {
    if (method == "OPTIONS") return {204, ""};
    if (method == "POST") {
      if (path == "/api/session") return create_session(body);
      if (path == "/api/round/new") return new_round(body);
      if (path == "/api/round/speak") return speak(body);
      if (path == "/api/round/listen") return listen(body);
      if (path == "/api/infer") return infer(body);
    } else if (method == "GET") {
      if (path == "/api/health") return health();
      const std::string prefix = "/api/round/";
      if (path.rfind(prefix, 0) == 0 && path.size() > prefix.size()) {
        return get_round(path.substr(prefix.size()));
      }
    }
    return error_reply(404, "no route for " + method + " " + path);
  } catch (const HttpError& e) {
    return error_reply(e.status, e.what(), e.extra);
  } catch (const UsageError& e) {
    return error_reply(400, e.what());
  } catch (const DataError& e) {
    return error_reply(400, e.what());
  } catch (const NumericalError& e) {
    return error_reply(500, e.what());
  }
}

}  // namespace pragmachine::server
