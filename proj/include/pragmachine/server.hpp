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

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "pragmachine/corpus.hpp"
#include "pragmachine/eval.hpp"
#include "pragmachine/lexicon.hpp"

// Live reference games and stateless inference behind a JSON API. The
// service is transport-free: every endpoint takes a request body and returns
// a status and a JSON body, and serve() binds it to HTTP.
namespace pragmachine::server {

inline constexpr int kMaxSteps = 10000;

enum class Role { kHumanSpeaker, kHumanListener };

struct Overrides {
  std::optional<double> alpha;
  std::optional<int> steps;
  std::optional<double> lr;
  std::optional<gd::Objective> objective;
  std::optional<std::uint64_t> seed;
};

struct ServiceConfig {
  double threshold = color::kDefaultThreshold;
  std::uint64_t seed = 0;
  eval::EvalConfig agents;
  int max_tries = 10000;
};

struct Artifacts {
  corpus::Vocabulary vocab;
  corpus::CostTable costs;
  std::optional<lexicon::LexiconParams> ssl;
  std::optional<lexicon::LexiconParams> sl;
  // Content hashes reported by /api/health.
  std::map<std::string, std::string> hashes;
};

struct Response {
  int status = 200;
  std::string body;
};

class GameService {
 public:
  GameService(std::optional<Artifacts> artifacts, ServiceConfig cfg);
  ~GameService();

  // Dispatches a method and path to an endpoint; 404 otherwise. Errors come
  // back as {"error": ...} bodies with 400, 404, 409, 500 or 503.
  Response handle(const std::string& method, const std::string& path,
                  const std::string& body);

 private:
  struct Session;
  struct RoundState;

  Response create_session(const std::string& body);
  Response new_round(const std::string& body);
  Response speak(const std::string& body);
  Response listen(const std::string& body);
  Response get_round(const std::string& round_id);
  Response infer(const std::string& body);
  Response health() const;

  std::shared_ptr<Session> find_session(const std::string& id) const;
  eval::EvalConfig agent_config(const Overrides& o, std::uint64_t seed) const;

  std::optional<Artifacts> artifacts_;
  ServiceConfig cfg_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, std::string> round_owner_;
  std::uint64_t next_session_ = 0;
  std::uint64_t next_round_ = 0;
};

// HTTP binding for a GameService. listen() blocks until stop() is called
// from another thread; `static_dir` (optional) is mounted at "/".
class HttpServer {
 public:
  explicit HttpServer(GameService& service, const std::string& static_dir = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Returns false if the socket could not be bound.
  bool listen(const std::string& host, int port);
  // Binds to a free port and returns it, or -1.
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Blocks serving `service` on host:port. Returns false if the socket could
// not be bound.
bool serve(GameService& service, const std::string& host, int port,
           const std::string& static_dir = {});

}  // namespace pragmachine::server
