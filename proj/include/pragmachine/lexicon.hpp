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

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pragmachine/color.hpp"
#include "pragmachine/matrix.hpp"
#include "pragmachine/vocab.hpp"

namespace pragmachine::lexicon {

// Color features fed to the scoring layer: (1, x, y, z, x^2, y^2, z^2) with
// (x, y, z) = (L*, u*, v*) / 100.
inline constexpr std::size_t kNumFeatures = 7;
using ColorFeatures = std::array<double, kNumFeatures>;
ColorFeatures color_features(const color::ColorLuv& m);

// Logits are clamped to this magnitude so scores stay strictly in (0, 1).
inline constexpr double kLogitClamp = 30.0;
inline constexpr std::size_t kDefaultEmbeddingDim = 50;

// The lexicon L(u, m; theta). A single linear layer over the outer product
// of the utterance embedding and the color features, squashed by a sigmoid:
//
//   logit(u, m) = (W e_u + c) . phi(m)
//
// `embeddings` is |U| x d, `score_weights` (W) is kNumFeatures x d,
// `score_bias` (c) has kNumFeatures entries.
struct LexiconParams {
  Matrix embeddings;
  Matrix score_weights;
  std::vector<double> score_bias;

  std::size_t vocab_size() const { return embeddings.rows(); }
  std::size_t dim() const { return embeddings.cols(); }
  // Throws DataError on shape mismatch or non-finite entries.
  void validate(std::size_t expected_vocab_size) const;

  bool operator==(const LexiconParams&) const = default;
};

// Scoring weights zero, embeddings as given.
LexiconParams make_params(Matrix embeddings);
// Same shape as `like`, all zeros; used as a gradient accumulator.
LexiconParams zeros_like(const LexiconParams& like);

double sigmoid(double z);

double lexicon_logit(const LexiconParams& p, std::size_t utterance_id,
                     const color::ColorLuv& m);
double lexicon_score(const LexiconParams& p, std::size_t utterance_id,
                     const color::ColorLuv& m);

// w_u = W e_u + c for every utterance (|U| x kNumFeatures), the per-utterance
// weights that the color features are dotted against.
Matrix utterance_weights(const LexiconParams& p);
// Chains a gradient with respect to utterance_weights() back into `grad`
// (accumulating): dW += G^T E, dc += sum_u G_u, dE += G W.
void backprop_utterance_weights(const LexiconParams& p, const Matrix& d_weights,
                                LexiconParams& grad);

// Lexicon values for one context. values(i, u) = L(u, m_i); meaning-major.
struct ContextLexicon {
  Matrix values;

  std::size_t num_meanings() const { return values.rows(); }
  std::size_t num_utterances() const { return values.cols(); }
  // L_u: the lexicon value of u at every context color.
  std::vector<double> utterance_slice(std::size_t u) const;
  // L_m: every utterance at color m (view into `values`).
  std::span<const double> meaning_slice(std::size_t m) const {
    return values.row(m);
  }
  // L_C = <L_m1, L_m2, L_m3>, color-major (view into `values`).
  std::span<const double> context_vector() const { return values.flat(); }
};

ContextLexicon context_lexicon(const LexiconParams& p,
                               const corpus::Vocabulary& vocab,
                               const color::Context& ctx);
ContextLexicon context_lexicon(const LexiconParams& p,
                               const color::Context& ctx);

// Entries i.i.d. uniform(-0.1, 0.1).
Matrix init_embeddings_random(std::size_t vocab_size, std::size_t dim,
                              std::uint64_t seed);
// JSON Lines {"text": str, "vec": [f, ...]}; texts are normalized before
// matching. Every vocabulary entry must be present with the same dimension.
Matrix load_embeddings(const std::string& path, const corpus::Vocabulary& vocab);
// "random:<seed>[:<dim>]" or a path.
Matrix init_embeddings(const std::string& source,
                       const corpus::Vocabulary& vocab);

// JSON {"version":"1", "d", "vocab_hash", "features", "embeddings",
// "score_weights", "score_bias"}.
void save_params(const LexiconParams& p, const corpus::Vocabulary& vocab,
                 const std::string& path);
// Throws DataError on version or shape mismatch, or when the stored
// vocabulary hash differs from `vocab`'s.
LexiconParams load_params(const std::string& path,
                          const corpus::Vocabulary& vocab);
LexiconParams load_params(const std::string& path);

}  // namespace pragmachine::lexicon
