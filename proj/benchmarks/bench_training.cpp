#include <random>

#include <benchmark/benchmark.h>

#include "skillmatch/candidates.hpp"

using namespace skillmatch;

namespace {

struct Problem {
  std::vector<std::vector<float>> storage;
  std::vector<TrainingRow> rows;
};

Problem make_problem(std::size_t positives, std::size_t dim) {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> normal;
  std::vector<float> centre(dim);
  for (auto& x : centre) x = normal(rng);
  Problem problem;
  const std::size_t total = positives * 3;
  problem.storage.resize(total, std::vector<float>(dim));
  for (std::size_t i = 0; i < total; ++i) {
    const bool positive = i < positives;
    for (std::size_t d = 0; d < dim; ++d) {
      problem.storage[i][d] = normal(rng) * 0.5f + (positive ? centre[d] : -centre[d]) * 0.2f;
    }
    problem.rows.push_back({problem.storage[i], positive});
  }
  return problem;
}

void BM_Objective(benchmark::State& state) {
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  const auto problem = make_problem(40, dim);
  const std::vector<double> w(dim, 0.01);
  const TrainingConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(logistic_objective(w, 0.0, problem.rows, config));
}
BENCHMARK(BM_Objective)->Arg(256)->Arg(1024);

void BM_TrainClassifier(benchmark::State& state) {
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  const auto problem = make_problem(40, dim);
  const TrainingConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(train_classifier("s", problem.rows, dim, config));
}
BENCHMARK(BM_TrainClassifier)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace
