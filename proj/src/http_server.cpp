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

#include <httplib.h>

#include "pragmachine/error.hpp"
#include "pragmachine/logging.hpp"
#include "pragmachine/server.hpp"

namespace pragmachine::server {

struct HttpServer::Impl {
  httplib::Server svr;
};

HttpServer::HttpServer(GameService& service, const std::string& static_dir)
    : impl_(std::make_unique<Impl>()) {
  auto& svr = impl_->svr;
  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    const Response r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    if (!r.body.empty()) res.set_content(r.body, "application/json");
    logging::info("{} {} -> {}", req.method, req.path, r.status);
  };
  svr.Get(R"(/api/.*)", forward);
  svr.Post(R"(/api/.*)", forward);
  svr.Options(R"(/api/.*)", forward);
  if (!static_dir.empty() && !svr.set_mount_point("/", static_dir)) {
    throw UsageError("--static: cannot serve directory '" + static_dir + "'");
  }
}

HttpServer::~HttpServer() = default;

bool HttpServer::listen(const std::string& host, int port) {
  logging::warn("serving on http://{}:{}", host, port);
  return impl_->svr.listen(host, port);
}

int HttpServer::bind_any_port(const std::string& host) {
  return impl_->svr.bind_to_any_port(host);
}

bool HttpServer::listen_after_bind() { return impl_->svr.listen_after_bind(); }

void HttpServer::wait_until_ready() const { impl_->svr.wait_until_ready(); }

void HttpServer::stop() { impl_->svr.stop(); }

bool serve(GameService& service, const std::string& host, int port,
           const std::string& static_dir) {
  HttpServer http(service, static_dir);
  return http.listen(host, port);
}

}  // namespace pragmachine::server
