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

#include "pragmachine/logging.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>

#include "pragmachine/error.hpp"

namespace pragmachine::logging {

void set_level(std::string_view name) {
  const auto level = spdlog::level::from_str(std::string(name));
  if (level == spdlog::level::off && name != "off") {
    throw UsageError("PRAGMACHINE_LOG: unknown level '" + std::string(name) + "'");
  }
  spdlog::set_level(level);
}

void init_from_env() {
  auto logger = spdlog::get("pragmachine");
  if (!logger) logger = spdlog::stderr_logger_mt("pragmachine");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("PRAGMACHINE_LOG");
  set_level(env && *env ? env : "warn");
}

}  // namespace pragmachine::logging
