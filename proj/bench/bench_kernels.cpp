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


#include <benchmark/benchmark.h>

#include "pragmachine/corpus.hpp"
#include "pragmachine/eval.hpp"
#include "pragmachine/gdprag.hpp"
#include "pragmachine/lexicon.hpp"
#include "pragmachine/parallel.hpp"
#include "pragmachine/vocab.hpp"

using namespace pragmachine;

namespace {

ExecPolicy policy_arg(const benchmark::State& state) {
  return state.range(0) == 0 ? ExecPolicy::kSerial : ExecPolicy::kParallel;
}

corpus::SyntheticConfig synthetic_config(std::size_t games) {
  corpus::SyntheticConfig cfg;
  cfg.n_games = games;
  cfg.rounds_per_game = 40;
  cfg.seed = 1;
  return cfg;
}

struct EvalInputs {
  corpus::Vocabulary vocab = corpus::default_vocabulary();
  corpus::CostTable costs;
  lexicon::LexiconParams ssl;
  std::vector<corpus::Round> rounds;

  EvalInputs() {
    costs = corpus::cost_from_frequency(vocab);
    rounds = corpus::generate_synthetic(synthetic_config(10), vocab, corpus::default_prototypes(), costs);
    ssl = lexicon::make_params(lexicon::init_embeddings_random(vocab.size(), 16, 1));
  }
};

const EvalInputs& eval_inputs() {
  static const EvalInputs in;
  return in;
}

void BM_Evaluate(benchmark::State& state) {
  const EvalInputs& in = eval_inputs();
  eval::EvalConfig cfg;
  cfg.policy = policy_arg(state);
  const eval::Artifacts artifacts{&in.ssl, nullptr, &in.costs};
  const std::vector<eval::Model> models{eval::Model::kSslAm, eval::Model::kSslGd};
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::evaluate(models, in.rounds, artifacts, cfg));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(in.rounds.size() * models.size()));
}

void BM_GenerateSynthetic(benchmark::State& state) {
  const auto vocab = corpus::default_vocabulary();
  const auto costs = corpus::cost_from_frequency(vocab);
  const auto prototypes = corpus::default_prototypes();
  const auto cfg = synthetic_config(50);
  for (auto _ : state) {
    benchmark::DoNotOptimize(corpus::generate_synthetic(cfg, vocab, prototypes, costs, policy_arg(state)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(cfg.n_games * cfg.rounds_per_game));
}

void BM_AuditGradients(benchmark::State& state) {
  const std::size_t instances = 32;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gd::audit_gradients(gd::Objective::kLe, instances, 3, 5, 1, gd::kDefaultAlpha,
                                                 true, 1e-5, policy_arg(state)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(instances));
}

}  // namespace

BENCHMARK(BM_Evaluate)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GenerateSynthetic)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AuditGradients)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
