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

#include "pragmachine/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "pragmachine/error.hpp"
#include "pragmachine/random.hpp"

namespace pragmachine::corpus {

Vocabulary::Vocabulary(std::vector<VocabEntry> entries)
    : entries_(std::move(entries)) {
  if (entries_.size() < 2) {
    throw DataError(entries_.empty() ? "empty vocabulary"
                                     : "vocabulary needs at least 2 entries");
  }
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const VocabEntry& a, const VocabEntry& b) {
                     if (a.log_freq != b.log_freq) return a.log_freq > b.log_freq;
                     return a.text < b.text;
                   });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    entries_[i].id = i;
    if (!std::isfinite(entries_[i].log_freq)) {
      throw DataError("non-finite log_freq for '" + entries_[i].text + "'");
    }
    if (!index_.emplace(entries_[i].text, i).second) {
      throw DataError("duplicate utterance '" + entries_[i].text + "'");
    }
  }
}

std::optional<std::size_t> Vocabulary::find(std::string_view normalized) const {
  auto it = index_.find(std::string(normalized));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::fingerprint() const {
  std::uint64_t h = fnv1a("vocab-v1");
  for (const auto& e : entries_) {
    h = fnv1a(e.text, h);
    h = fnv1a("\n", h);
  }
  return hex64(h);
}

std::string normalize_utterance(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isalnum(c) || c >= 0x80) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::string apply_variants(const std::string& normalized,
                           const VariantMap& variants) {
  if (variants.empty()) return normalized;
  if (auto it = variants.find(normalized); it != variants.end()) {
    return it->second;
  }
  std::istringstream tokens(normalized);
  std::string token;
  std::string out;
  while (tokens >> token) {
    if (auto it = variants.find(token); it != variants.end()) token = it->second;
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  return out;
}

namespace {

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool skippable(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos || line[0] == '#';
}

}  // namespace

VariantMap parse_variant_map(std::istream& in, const std::string& source) {
  VariantMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim_cr(line);
    if (skippable(line)) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(source + ":" + std::to_string(line_no) +
                      ": expected 'variant<TAB>canonical'");
    }
    std::string variant = normalize_utterance(line.substr(0, tab));
    std::string canonical = normalize_utterance(line.substr(tab + 1));
    if (variant.empty() || canonical.empty()) {
      throw DataError(source + ":" + std::to_string(line_no) +
                      ": empty variant or canonical form");
    }
    map[variant] = canonical;
  }
  return map;
}

VariantMap load_variant_map(const std::string& path) {
  auto in = open_or_throw(path);
  return parse_variant_map(in, path);
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

Vocabulary parse_vocab(std::istream& in, const std::string& source,
                       const VariantMap& variants,
                       std::optional<std::size_t> top_k) {
  struct Merged {
    std::vector<double> log_freqs;
    bool via_variant = false;
    std::size_t first_line = 0;
  };
  std::map<std::string, Merged> merged;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim_cr(line);
    if (skippable(line)) continue;
    const auto tab = line.rfind('\t');
    const std::string where = source + ":" + std::to_string(line_no);
    if (tab == std::string::npos) {
      throw DataError(where + ": expected 'text<TAB>log_freq'");
    }
    const std::string freq_text = line.substr(tab + 1);
    char* end = nullptr;
    const double log_freq = std::strtod(freq_text.c_str(), &end);
    if (end == freq_text.c_str() || *end != '\0' || !std::isfinite(log_freq)) {
      throw DataError(where + ": invalid log_freq '" + freq_text + "'");
    }
    const std::string normalized = normalize_utterance(line.substr(0, tab));
    if (normalized.empty()) throw DataError(where + ": empty utterance");
    const std::string canonical = apply_variants(normalized, variants);
    auto [it, inserted] = merged.try_emplace(canonical);
    Merged& m = it->second;
    const bool rewritten = canonical != normalized;
    if (!inserted && !rewritten && !m.via_variant) {
      throw DataError(where + ": duplicate utterance '" + canonical +
                      "' (first seen on line " +
                      std::to_string(m.first_line) + ")");
    }
    if (inserted) m.first_line = line_no;
    m.via_variant = m.via_variant || rewritten;
    m.log_freqs.push_back(log_freq);
  }
  if (merged.empty()) throw DataError("empty vocabulary: " + source);
  std::vector<VocabEntry> entries;
  entries.reserve(merged.size());
  for (auto& [text, m] : merged) {
    entries.push_back({0, text, log_sum_exp(m.log_freqs)});
  }
  if (top_k) {
    if (*top_k < 2) throw UsageError("top_k must be at least 2");
    // Same ordering the Vocabulary constructor applies.
    std::stable_sort(entries.begin(), entries.end(),
                     [](const VocabEntry& a, const VocabEntry& b) {
                       if (a.log_freq != b.log_freq) {
                         return a.log_freq > b.log_freq;
                       }
                       return a.text < b.text;
                     });
    if (entries.size() > *top_k) entries.resize(*top_k);
  }
  return Vocabulary(std::move(entries));
}

Vocabulary load_vocab(const std::string& path, const VariantMap& variants,
                      std::optional<std::size_t> top_k) {
  auto in = open_or_throw(path);
  return parse_vocab(in, path, variants, top_k);
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  char buf[64];
  for (const auto& e : vocab.entries()) {
    std::snprintf(buf, sizeof(buf), "%.17g", e.log_freq);
    out << e.text << '\t' << buf << '\n';
  }
  if (!out) throw DataError("write failed: '" + path + "'");
}

CostTable cost_from_frequency(const Vocabulary& vocab) {
  std::vector<double> log_freqs;
  log_freqs.reserve(vocab.size());
  for (const auto& e : vocab.entries()) log_freqs.push_back(e.log_freq);
  const double log_z = log_sum_exp(log_freqs);
  CostTable table;
  table.kappa.reserve(vocab.size());
  for (double lf : log_freqs) table.kappa.push_back(-(lf - log_z));
  return table;
}

namespace {

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::vector<std::string> nearest_texts(const Vocabulary& vocab,
                                       std::string_view query, std::size_t k) {
  const std::string q = normalize_utterance(query);
  std::vector<std::pair<std::size_t, std::size_t>> scored;
  for (const auto& e : vocab.entries()) {
    scored.emplace_back(edit_distance(q, e.text), e.id);
  }
  std::stable_sort(scored.begin(), scored.end());
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) {
    out.push_back(vocab.text(scored[i].second));
  }
  return out;
}

}  // namespace pragmachine::corpus
