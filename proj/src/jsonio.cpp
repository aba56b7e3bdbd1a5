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

#include "pragmachine/jsonio.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "pragmachine/error.hpp"
#include "pragmachine/random.hpp"

namespace pragmachine {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// JSON has no infinities; -inf utilities are written as null.
ordered_json number(double v) {
  return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
}

double number_from(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return -std::numeric_limits<double>::infinity();
  return v.get<double>();
}

}  // namespace

ordered_json to_json(const rsa::ObjectiveReport& r) {
  ordered_json j;
  j["alpha"] = r.alpha;
  j["h_u_given_m"] = number(r.h_u_given_m);
  j["i_mu"] = number(r.i_mu);
  j["expected_utility"] = number(r.expected_utility);
  j["g_alpha"] = number(r.g_alpha);
  j["f_alpha"] = number(r.f_alpha);
  return j;
}

rsa::ObjectiveReport objective_report_from_json(const json& j) {
  try {
    rsa::ObjectiveReport r;
    r.alpha = j.at("alpha").get<double>();
    r.h_u_given_m = number_from(j, "h_u_given_m");
    r.i_mu = number_from(j, "i_mu");
    r.expected_utility = number_from(j, "expected_utility");
    r.g_alpha = number_from(j, "g_alpha");
    r.f_alpha = number_from(j, "f_alpha");
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("objective report: ") + e.what());
  }
}

void write_trace_jsonl(std::ostream& out,
                       const std::vector<rsa::ObjectiveReport>& trace,
                       const ordered_json& tag) {
  for (std::size_t i = 0; i < trace.size(); ++i) {
    ordered_json j = tag.is_object() ? tag : ordered_json::object();
    j["step"] = i + 1;
    const ordered_json report = to_json(trace[i]);
    for (auto& [k, v] : report.items()) j[k] = v;
    out << j.dump() << '\n';
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_hash(const std::string& path) { return hex64(fnv1a(read_file(path))); }

void save_manifest(const RunManifest& m, const std::string& path) {
  ordered_json j;
  j["version"] = m.version;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["config"] = m.config;
  j["seeds"] = m.seeds;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: '" + path + "'");
}

RunManifest load_manifest(const std::string& path) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  try {
    RunManifest m;
    m.version = j.at("version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config = j.at("config");
    m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace pragmachine
