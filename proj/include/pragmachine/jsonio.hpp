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
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pragmachine/rsa.hpp"

namespace pragmachine {

inline constexpr const char* kVersion = "0.1.0";

nlohmann::ordered_json to_json(const rsa::ObjectiveReport& r);
rsa::ObjectiveReport objective_report_from_json(const nlohmann::json& j);

// One JSON object per line: {"step": i, ...report fields} merged into `tag`.
void write_trace_jsonl(std::ostream& out,
                       const std::vector<rsa::ObjectiveReport>& trace,
                       const nlohmann::ordered_json& tag = {});

// FNV-1a of the file's bytes as 16 hex digits.
std::string file_hash(const std::string& path);
std::string read_file(const std::string& path);

// Everything needed to re-run a command: its argv, the resolved config and
// seeds, and content hashes of its inputs and outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::string version = kVersion;

  void add_input(const std::string& path) { inputs[path] = file_hash(path); }
  void add_output(const std::string& path) { outputs[path] = file_hash(path); }
  bool operator==(const RunManifest&) const = default;
};

void save_manifest(const RunManifest& m, const std::string& path);
RunManifest load_manifest(const std::string& path);

}  // namespace pragmachine
