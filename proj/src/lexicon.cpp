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

#include "pragmachine/lexicon.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <unordered_map>

#include <json.hpp>

#include "pragmachine/error.hpp"
#include "pragmachine/random.hpp"

namespace pragmachine::lexicon {

using nlohmann::json;

ColorFeatures color_features(const color::ColorLuv& m) {
  const double x = m.l_star / 100.0;
  const double y = m.u_star / 100.0;
  const double z = m.v_star / 100.0;
  return {1.0, x, y, z, x * x, y * y, z * z};
}

void LexiconParams::validate(std::size_t expected_vocab_size) const {
  if (embeddings.rows() != expected_vocab_size) {
    throw DataError("lexicon shape mismatch: " +
                    std::to_string(embeddings.rows()) +
                    " embedding rows for a vocabulary of " +
                    std::to_string(expected_vocab_size));
  }
  if (dim() < 1) throw DataError("lexicon embedding dimension must be >= 1");
  if (score_weights.rows() != kNumFeatures || score_weights.cols() != dim()) {
    throw DataError("lexicon shape mismatch: score_weights must be " +
                    std::to_string(kNumFeatures) + " x " +
                    std::to_string(dim()));
  }
  if (score_bias.size() != kNumFeatures) {
    throw DataError("lexicon shape mismatch: score_bias must have " +
                    std::to_string(kNumFeatures) + " entries");
  }
  auto finite = [](std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(),
                       [](double v) { return std::isfinite(v); });
  };
  if (!finite(embeddings.flat()) || !finite(score_weights.flat()) ||
      !finite(score_bias)) {
    throw DataError("lexicon parameters contain non-finite values");
  }
}

LexiconParams make_params(Matrix embeddings) {
  LexiconParams p;
  const std::size_t d = embeddings.cols();
  p.embeddings = std::move(embeddings);
  p.score_weights = Matrix(kNumFeatures, d);
  p.score_bias.assign(kNumFeatures, 0.0);
  return p;
}

LexiconParams zeros_like(const LexiconParams& like) {
  LexiconParams g;
  g.embeddings = Matrix(like.embeddings.rows(), like.embeddings.cols());
  g.score_weights = Matrix(like.score_weights.rows(), like.score_weights.cols());
  g.score_bias.assign(like.score_bias.size(), 0.0);
  return g;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double lexicon_logit(const LexiconParams& p, std::size_t utterance_id,
                     const color::ColorLuv& m) {
  const ColorFeatures phi = color_features(m);
  const auto e = p.embeddings.row(utterance_id);
  double logit = 0.0;
  for (std::size_t k = 0; k < kNumFeatures; ++k) {
    double w = p.score_bias[k];
    const auto wk = p.score_weights.row(k);
    for (std::size_t j = 0; j < e.size(); ++j) w += wk[j] * e[j];
    logit += w * phi[k];
  }
  return std::clamp(logit, -kLogitClamp, kLogitClamp);
}

double lexicon_score(const LexiconParams& p, std::size_t utterance_id,
                     const color::ColorLuv& m) {
  return sigmoid(lexicon_logit(p, utterance_id, m));
}

Matrix utterance_weights(const LexiconParams& p) {
  const std::size_t n = p.vocab_size();
  const std::size_t d = p.dim();
  Matrix w(n, kNumFeatures);
  for (std::size_t u = 0; u < n; ++u) {
    const auto e = p.embeddings.row(u);
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      const auto wk = p.score_weights.row(k);
      double acc = p.score_bias[k];
      for (std::size_t j = 0; j < d; ++j) acc += wk[j] * e[j];
      w(u, k) = acc;
    }
  }
  return w;
}

void backprop_utterance_weights(const LexiconParams& p, const Matrix& d_weights,
                                LexiconParams& grad) {
  const std::size_t n = p.vocab_size();
  const std::size_t d = p.dim();
  for (std::size_t u = 0; u < n; ++u) {
    const auto e = p.embeddings.row(u);
    auto de = grad.embeddings.row(u);
    for (std::size_t k = 0; k < kNumFeatures; ++k) {
      const double g = d_weights(u, k);
      if (g == 0.0) continue;
      grad.score_bias[k] += g;
      const auto wk = p.score_weights.row(k);
      auto dwk = grad.score_weights.row(k);
      for (std::size_t j = 0; j < d; ++j) {
        dwk[j] += g * e[j];
        de[j] += g * wk[j];
      }
    }
  }
}

std::vector<double> ContextLexicon::utterance_slice(std::size_t u) const {
  std::vector<double> out(num_meanings());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = values(i, u);
  return out;
}

ContextLexicon context_lexicon(const LexiconParams& p,
                               const color::Context& ctx) {
  const Matrix w = utterance_weights(p);
  ContextLexicon cl{Matrix(ctx.size(), p.vocab_size())};
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    const ColorFeatures phi = color_features(ctx[i]);
    for (std::size_t u = 0; u < p.vocab_size(); ++u) {
      double logit = 0.0;
      for (std::size_t k = 0; k < kNumFeatures; ++k) logit += w(u, k) * phi[k];
      cl.values(i, u) = sigmoid(std::clamp(logit, -kLogitClamp, kLogitClamp));
    }
  }
  return cl;
}

ContextLexicon context_lexicon(const LexiconParams& p,
                               const corpus::Vocabulary& vocab,
                               const color::Context& ctx) {
  if (p.vocab_size() != vocab.size()) {
    throw DataError("lexicon has " + std::to_string(p.vocab_size()) +
                    " utterances but the vocabulary has " +
                    std::to_string(vocab.size()));
  }
  return context_lexicon(p, ctx);
}

Matrix init_embeddings_random(std::size_t vocab_size, std::size_t dim,
                              std::uint64_t seed) {
  if (dim < 1) throw UsageError("embedding dimension must be >= 1");
  Rng rng(derive_seed(seed, "embeddings"));
  Matrix e(vocab_size, dim);
  for (double& v : e.flat()) v = rng.uniform(-0.1, 0.1);
  return e;
}

Matrix load_embeddings(const std::string& path,
                       const corpus::Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file '" + path + "'");
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::optional<std::size_t> dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (!rec.contains("text") || !rec["text"].is_string() ||
        !rec.contains("vec") || !rec["vec"].is_array()) {
      throw DataError(where + ": expected {\"text\": str, \"vec\": [...]}");
    }
    std::vector<double> vec;
    for (const auto& v : rec["vec"]) {
      if (!v.is_number()) throw DataError(where + ": non-numeric vector entry");
      vec.push_back(v.get<double>());
    }
    if (!dim) dim = vec.size();
    if (vec.size() != *dim || vec.empty()) {
      throw DataError(where + ": embedding dimension mismatch (expected " +
                      std::to_string(*dim) + ", got " +
                      std::to_string(vec.size()) + ")");
    }
    vectors[corpus::normalize_utterance(rec["text"].get<std::string>())] =
        std::move(vec);
  }
  if (!dim) throw DataError("embedding file '" + path + "' is empty");
  Matrix e(vocab.size(), *dim);
  for (const auto& entry : vocab.entries()) {
    auto it = vectors.find(entry.text);
    if (it == vectors.end()) {
      throw DataError("missing embedding for " + entry.text);
    }
    std::copy(it->second.begin(), it->second.end(),
              e.row(entry.id).begin());
  }
  return e;
}

Matrix init_embeddings(const std::string& source,
                       const corpus::Vocabulary& vocab) {
  constexpr std::string_view kPrefix = "random:";
  if (source.rfind(kPrefix, 0) == 0) {
    const std::string rest = source.substr(kPrefix.size());
    const auto colon = rest.find(':');
    try {
      const std::uint64_t seed = std::stoull(rest.substr(0, colon));
      const std::size_t dim = colon == std::string::npos
                                  ? kDefaultEmbeddingDim
                                  : std::stoul(rest.substr(colon + 1));
      return init_embeddings_random(vocab.size(), dim, seed);
    } catch (const std::logic_error&) {
      throw UsageError("invalid embedding source '" + source +
                       "' (expected random:<seed>[:<dim>])");
    }
  }
  return load_embeddings(source, vocab);
}

namespace {

constexpr const char* kParamsVersion = "1";
constexpr const char* kFeatures = "luv-quadratic";

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& field,
                        std::size_t cols) {
  if (!j.is_array()) throw DataError("params field '" + field + "' not an array");
  Matrix m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw DataError("shape mismatch in '" + field + "' row " +
                      std::to_string(r) + " (expected " +
                      std::to_string(cols) + " columns)");
    }
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

LexiconParams parse_params(const json& j, const std::string& path,
                           const corpus::Vocabulary* vocab) {
  const std::string version =
      j.contains("version") && j["version"].is_string()
          ? j["version"].get<std::string>()
          : "<missing>";
  if (version != kParamsVersion) {
    throw DataError(path + ": unsupported params version '" + version +
                    "' (expected '" + kParamsVersion + "')");
  }
  for (const char* key :
       {"d", "vocab_hash", "embeddings", "score_weights", "score_bias"}) {
    if (!j.contains(key)) throw DataError(path + ": missing field '" + key + "'");
  }
  const std::size_t d = j["d"].get<std::size_t>();
  LexiconParams p;
  p.embeddings = matrix_from_json(j["embeddings"], "embeddings", d);
  p.score_weights = matrix_from_json(j["score_weights"], "score_weights", d);
  p.score_bias = j["score_bias"].get<std::vector<double>>();
  if (vocab) {
    p.validate(vocab->size());
    if (j["vocab_hash"].get<std::string>() != vocab->fingerprint()) {
      throw DataError(path + ": vocabulary hash mismatch");
    }
  } else {
    p.validate(p.embeddings.rows());
  }
  return p;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open params file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace

void save_params(const LexiconParams& p, const corpus::Vocabulary& vocab,
                 const std::string& path) {
  p.validate(vocab.size());
  json j;
  j["version"] = kParamsVersion;
  j["d"] = p.dim();
  j["vocab_hash"] = vocab.fingerprint();
  j["features"] = kFeatures;
  j["embeddings"] = matrix_to_json(p.embeddings);
  j["score_weights"] = matrix_to_json(p.score_weights);
  j["score_bias"] = p.score_bias;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write params file '" + path + "'");
  out << j.dump() << '\n';
  if (!out) throw DataError("write failed: '" + path + "'");
}

LexiconParams load_params(const std::string& path,
                          const corpus::Vocabulary& vocab) {
  return parse_params(read_json_file(path), path, &vocab);
}

LexiconParams load_params(const std::string& path) {
  return parse_params(read_json_file(path), path, nullptr);
}

}  // namespace pragmachine::lexicon
