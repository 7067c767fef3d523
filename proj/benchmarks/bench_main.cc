#include <benchmark/benchmark.h>

#include <vector>

#include "triggerlab/attack.h"
#include "triggerlab/model.h"
#include "triggerlab/synthetic.h"

namespace triggerlab {
namespace {

struct Fixture {
  Vocabulary vocab;
  std::vector<TokenizedExample> data;
  std::vector<TokenizedExample> entailment;
  ClassifierParams model;
};

// Planted corpus with an untrained model of the given width.
Fixture make_fixture(std::size_t embed_dim, std::size_t hidden_dim) {
  SyntheticSpec spec;
  spec.seed = 3;
  spec.examples_per_class = 1000;
  spec.rules = {{"nobody", Label::kContradiction, 0.95, 0.15}};
  PlantedCorpus c = generate_planted_corpus(spec);
  Fixture f;
  f.vocab = Vocabulary::build(c.examples, 1);
  f.data = encode_all(c.examples, f.vocab, kDefaultMaxSeqLen);
  for (const auto& ex : f.data) {
    if (ex.gold == Label::kEntailment) f.entailment.push_back(ex);
  }
  f.model = init_params(f.vocab, embed_dim, hidden_dim, true, 3);
  return f;
}

void BM_Forward(benchmark::State& state) {
  Fixture f = make_fixture(state.range(0), 2 * state.range(0));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward(f.model, f.data[i++ % f.data.size()]));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64)->Arg(300);

void BM_EmbeddingGradient(benchmark::State& state) {
  Fixture f = make_fixture(state.range(0), 2 * state.range(0));
  std::vector<TokenizedExample> batch(f.entailment.begin(), f.entailment.begin() + 128);
  const std::size_t pos[] = {0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(embedding_gradient(f.model, batch, Label::kContradiction, pos));
  }
  state.SetItemsProcessed(state.iterations() * batch.size());
}
BENCHMARK(BM_EmbeddingGradient)->Arg(16)->Arg(64)->Arg(300);

void BM_CandidateScores(benchmark::State& state) {
  Fixture f = make_fixture(state.range(0), 32);
  std::vector<double> grad(f.model.embed_dim(), 0.01);
  for (auto _ : state) {
    benchmark::DoNotOptimize(candidate_scores(grad, f.model.embeddings, 2, 40));
  }
}
BENCHMARK(BM_CandidateScores)->Arg(16)->Arg(300);

void BM_SearchTrigger(benchmark::State& state) {
  Fixture f = make_fixture(16, 32);
  TriggerSearchConfig cfg;
  cfg.target_label = Label::kContradiction;
  cfg.trigger_len = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(search_trigger(f.model, f.vocab, f.entailment, cfg));
  }
}
BENCHMARK(BM_SearchTrigger)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace triggerlab

BENCHMARK_MAIN();
