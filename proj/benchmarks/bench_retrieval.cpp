#include <random>

#include <benchmark/benchmark.h>
#include <fmt/format.h>

#include "skillmatch/candidates.hpp"

using namespace skillmatch;

namespace {

std::vector<double> random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> v(dim);
  for (auto& x : v) x = normal(rng);
  const auto unit = EmbeddingVector::normalized(std::move(v));
  return {unit.values().begin(), unit.values().end()};
}

VectorIndex random_index(std::size_t rows, std::size_t dim, std::size_t per_skill, std::mt19937_64& rng) {
  VectorIndex index(IndexKind::kSentences, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    index.add(fmt::format("r{}", i), fmt::format("s{}", i / per_skill),
              EmbeddingVector::from_unit(random_unit(dim, rng)));
  }
  return index;
}

void BM_TopK(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto index = random_index(static_cast<std::size_t>(state.range(0)), 1024, 40, rng);
  const auto query = random_unit(1024, rng);
  for (auto _ : state) benchmark::DoNotOptimize(index.top_k(query, kSimilarityTopK));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TopK)->Arg(1000)->Arg(10000)->Arg(50000)->Unit(benchmark::kMicrosecond);

void BM_CandidateGeneration(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const std::size_t skills = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 256;
  const auto labels = random_index(skills, dim, 1, rng);
  const auto sentences = random_index(skills * 40, dim, 40, rng);
  std::vector<ClassifierModel> models(skills);
  for (std::size_t s = 0; s < skills; ++s) {
    models[s].skill_id = fmt::format("s{}", s);
    models[s].weights = random_unit(dim, rng);
  }
  const auto query = random_unit(dim, rng);
  for (auto _ : state) {
    const auto cls = classifier_candidates(query, models);
    const auto label = label_similarity_candidates(query, labels);
    const auto sentence = sentence_similarity_candidates(query, sentences);
    benchmark::DoNotOptimize(merge_candidates(cls, label, sentence));
  }
}
BENCHMARK(BM_CandidateGeneration)->Arg(100)->Arg(1000)->Unit(benchmark::kMicrosecond);

}  // namespace
