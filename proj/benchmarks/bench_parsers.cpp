#include <random>
#include <set>
#include <string>

#include <benchmark/benchmark.h>
#include <fmt/format.h>

#include "skillmatch/eval.hpp"
#include "skillmatch/reranker.hpp"

using namespace skillmatch;

namespace {

CandidateSet make_candidates(std::size_t n) {
  CandidateSet set;
  for (std::size_t i = 0; i < n; ++i) {
    set.candidates.push_back({fmt::format("id{}", i), CandidateSource::kLabelSim, 0.0, fmt::format("skill label {}", i)});
  }
  return set;
}

void BM_ParseNatural(benchmark::State& state) {
  const auto candidates = make_candidates(70);
  std::string reply = "Here is the ranking:\n";
  for (int i = 0; i < 10; ++i) reply += fmt::format("{}. skill label {}\n", i + 1, i * 7);
  for (auto _ : state) benchmark::DoNotOptimize(parse_natural_response(reply, candidates));
}
BENCHMARK(BM_ParseNatural);

void BM_ParseCode(benchmark::State& state) {
  const auto candidates = make_candidates(70);
  std::string reply = "```python\ndef rank_skills():\n    return [";
  for (int i = 0; i < 10; ++i) reply += fmt::format("{}\"skill label {}\"", i ? ", " : "", i * 7);
  reply += "]\n```\n";
  for (auto _ : state) benchmark::DoNotOptimize(parse_code_response(reply, candidates));
}
BENCHMARK(BM_ParseCode);

void BM_Metrics(benchmark::State& state) {
  std::vector<std::string> ranked;
  for (int i = 0; i < 10; ++i) ranked.push_back(fmt::format("s{}", i * 3));
  const std::set<std::string> gold{"s3", "s9", "s40"};
  for (auto _ : state) {
    benchmark::DoNotOptimize(rp_at_k(ranked, gold, 10));
    benchmark::DoNotOptimize(mrr_single(ranked, gold));
  }
}
BENCHMARK(BM_Metrics);

}  // namespace
