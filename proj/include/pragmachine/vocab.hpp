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

#include <cstddef>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pragmachine::corpus {

struct VocabEntry {
  std::size_t id = 0;
  std::string text;
  double log_freq = 0.0;
};

// Utterance inventory. Ids are dense and follow the stored order
// (descending log_freq, then lexicographic).
class Vocabulary {
 public:
  Vocabulary() = default;
  // Sorts, assigns ids, and validates (>= 2 entries, unique texts).
  explicit Vocabulary(std::vector<VocabEntry> entries);

  std::size_t size() const { return entries_.size(); }
  const std::vector<VocabEntry>& entries() const { return entries_; }
  const std::string& text(std::size_t id) const { return entries_.at(id).text; }
  std::optional<std::size_t> find(std::string_view normalized) const;
  // Stable hash of the ordered texts; stored in params files.
  std::string fingerprint() const;

 private:
  std::vector<VocabEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Per-utterance cost kappa(u) = -log P(u).
struct CostTable {
  std::vector<double> kappa;
  std::span<const double> view() const { return kappa; }
  static CostTable zeros(std::size_t n) { return {std::vector<double>(n)}; }
};

using VariantMap = std::unordered_map<std::string, std::string>;

// Lowercase, replace punctuation with spaces, collapse whitespace, trim.
std::string normalize_utterance(std::string_view raw);
// Whole-utterance lookup first, then token by token.
std::string apply_variants(const std::string& normalized,
                           const VariantMap& variants);

// TSV `variant<TAB>canonical`; both sides normalized.
VariantMap load_variant_map(const std::string& path);
VariantMap parse_variant_map(std::istream& in, const std::string& source);

// TSV `text<TAB>log_freq`. Blank lines and lines starting with '#' are
// skipped. Entries collapsed onto the same text by the variant map are
// merged with log-sum-exp frequency; any other collision is an error.
Vocabulary load_vocab(const std::string& path, const VariantMap& variants = {},
                      std::optional<std::size_t> top_k = std::nullopt);
Vocabulary parse_vocab(std::istream& in, const std::string& source,
                       const VariantMap& variants = {},
                       std::optional<std::size_t> top_k = std::nullopt);
void save_vocab(const Vocabulary& vocab, const std::string& path);

// kappa(u) = -(log_freq(u) - logsumexp(log_freq)).
CostTable cost_from_frequency(const Vocabulary& vocab);

// Levenshtein-nearest vocabulary texts, closest first.
std::vector<std::string> nearest_texts(const Vocabulary& vocab,
                                       std::string_view query,
                                       std::size_t k = 3);

double log_sum_exp(std::span<const double> xs);

}  // namespace pragmachine::corpus
