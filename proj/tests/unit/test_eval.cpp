#include <doctest.h>

#include <algorithm>
#include <random>

#include <fmt/format.h>

#include "oracles.hpp"
#include "skillmatch/eval.hpp"
#include "test_support.hpp"

using namespace skillmatch;

namespace {

std::vector<std::string> ids(std::initializer_list<const char*> items) { return {items.begin(), items.end()}; }

std::vector<std::string> random_ranking(std::mt19937_64& rng, std::size_t universe, std::size_t length) {
  std::vector<std::string> all;
  for (std::size_t i = 0; i < universe; ++i) all.push_back(fmt::format("s{}", i));
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(length, universe));
  return all;
}

std::set<std::string> random_gold(std::mt19937_64& rng, std::size_t universe) {
  std::set<std::string> gold;
  const std::size_t size = 1 + rng() % std::min<std::size_t>(4, universe);
  while (gold.size() < size) gold.insert(fmt::format("s{}", rng() % universe));
  return gold;
}

}  // namespace

TEST_CASE("known-answer fixtures") {
  const std::set<std::string> gold{"a", "b", "c"};
  CHECK(rp_at_k(ids({"a", "b", "c"}), gold, 3) == 1.0);
  CHECK(rp_at_k(ids({"a", "x", "b"}), gold, 3) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(rp_at_k(ids({"x", "y", "c"}), gold, 3) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(rp_at_k(ids({"x", "y", "z"}), gold, 3) == 0.0);
  CHECK(rp_at_k(ids({"b"}), gold, 1) == 1.0);
  CHECK(rp_at_k(ids({"a", "b"}), {"a"}, 5) == 1.0);  // denominator is min(k, |gold|)
  CHECK(rp_at_k({}, gold, 10) == 0.0);

  CHECK(mrr_single(ids({"x", "a"}), gold) == 0.5);
  CHECK(mrr_single(ids({"a"}), gold) == 1.0);
  CHECK(mrr_single(ids({"x", "y"}), gold) == 0.0);
  CHECK(mrr_single({}, gold) == 0.0);

  CHECK_THROWS_AS(rp_at_k(ids({"a"}), {}, 1), std::invalid_argument);
  CHECK_THROWS_AS(rp_at_k(ids({"a"}), gold, 0), std::invalid_argument);
  CHECK_THROWS_AS(mrr_single(ids({"a"}), {}), std::invalid_argument);
}

TEST_CASE("metrics agree with the counting oracle") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t universe = 3 + rng() % 30;
    const auto ranked = random_ranking(rng, universe, rng() % 12);
    const auto gold = random_gold(rng, universe);
    for (int k = 1; k <= 12; ++k) CHECK(std::abs(rp_at_k(ranked, gold, k) - oracle::rp_at_k(ranked, gold, k)) <= 1e-12);
    CHECK(std::abs(mrr_single(ranked, gold) - oracle::mrr(ranked, gold)) <= 1e-12);
  }
}

TEST_CASE("RP@k lies in [0, 1] and found gold never decreases with k") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t universe = 3 + rng() % 20;
    const auto ranked = random_ranking(rng, universe, rng() % 15);
    const auto gold = random_gold(rng, universe);
    double previous_hits = 0.0;
    for (int k = 1; k <= 15; ++k) {
      const double rp = rp_at_k(ranked, gold, k);
      CHECK(rp >= 0.0);
      CHECK(rp <= 1.0);
      const double hits = rp * static_cast<double>(std::min<std::size_t>(k, gold.size()));
      CHECK(hits + 1e-9 >= previous_hits);
      previous_hits = hits;
    }
    const double mrr = mrr_single(ranked, gold);
    CHECK((mrr == 0.0 || (mrr > 0.0 && mrr <= 1.0)));
  }
}

TEST_CASE("evaluate is invariant to dataset order") {
  std::mt19937_64 rng(21);
  std::vector<EvalExample> dataset;
  std::map<std::string, RankedPrediction> predictions;
  for (int i = 0; i < 60; ++i) {
    EvalExample example{fmt::format("e{:03}", i), "span", random_gold(rng, 25), i % 3 == 0 ? Subset::kTech : Subset::kHouse};
    RankedPrediction prediction;
    prediction.ranked = random_ranking(rng, 25, 10);
    predictions[example.id] = prediction;
    dataset.push_back(std::move(example));
  }
  const auto report = evaluate(predictions, dataset);
  for (int shuffle = 0; shuffle < 5; ++shuffle) {
    std::shuffle(dataset.begin(), dataset.end(), rng);
    CHECK(evaluate(predictions, dataset) == report);
  }

  double tech_mrr = 0.0;
  std::size_t tech_n = 0;
  std::vector<const EvalExample*> sorted;
  for (const auto& example : dataset) sorted.push_back(&example);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
  for (const auto* example : sorted) {
    if (example->subset != Subset::kTech) continue;
    tech_mrr += oracle::mrr(predictions[example->id].ranked, example->gold);
    ++tech_n;
  }
  CHECK(report.subsets.at(Subset::kTech).count == tech_n);
  CHECK(std::abs(report.subsets.at(Subset::kTech).mrr - tech_mrr / static_cast<double>(tech_n)) <= 1e-12);
}

TEST_CASE("evaluate handles parse failures and missing predictions") {
  const std::vector<EvalExample> dataset = {{"a", "s", {"x"}, Subset::kHouse}, {"b", "s", {"y"}, Subset::kHouse}};
  std::map<std::string, RankedPrediction> predictions;
  predictions["a"].ranked = {"x"};
  CHECK_THROWS_AS(evaluate(predictions, dataset), Error);
  predictions["b"].ranked = {"y"};
  predictions["b"].parse_failed = true;
  const auto report = evaluate(predictions, dataset);
  CHECK(report.subsets.at(Subset::kHouse).mrr == 0.5);
  CHECK(report.subsets.at(Subset::kHouse).rp.at(1) == 0.5);
  CHECK_FALSE(report.subsets.contains(Subset::kTech));
}

TEST_CASE("report rendering") {
  EvalReport report;
  report.subsets[Subset::kHouse] = {0.5, {{1, 0.6}, {5, 0.75}, {10, 1.0}}, 4};
  report.subsets[Subset::kTech] = {0.25, {{1, 0.0}, {5, 0.5}, {10, 0.5}}, 2};
  report.metadata.label = "both / natural";
  const std::string table = render_report(report);
  CHECK(table.find("House") < table.find("Tech"));
  const auto row = table.substr(table.find("both / natural"));
  CHECK(row.find("  0.500   60.00   75.00  100.00 |   0.250    0.00   50.00   50.00") != std::string::npos);

  EvalReport house_only;
  house_only.subsets[Subset::kHouse] = report.subsets[Subset::kHouse];
  CHECK(render_report(house_only).find("      -       -") != std::string::npos);
}

TEST_CASE("report json round trip") {
  EvalReport report;
  report.subsets[Subset::kHouse] = {1.0 / 3.0, {{1, 0.1}, {5, 0.2}, {10, 0.3}}, 3};
  report.subsets[Subset::kTech] = {0.7, {{1, 0.4}, {5, 0.5}, {10, 0.6}}, 5};
  report.metadata = {"both / code", "code", "both", 7, "gpt-4-0314", "abc", "def"};
  const auto json = report_to_json(report);
  CHECK(json["house"]["rp5"] == 0.2);
  CHECK(json["tech"]["n"] == 5);
  CHECK(report_from_json(json) == report);
  CHECK(report_from_json(nlohmann::json::parse(json.dump())) == report);
  CHECK_THROWS_AS(report_from_json(nlohmann::json::object()), FormatError);
}

TEST_CASE("eval dataset loading") {
  const auto taxonomy = load_taxonomy(testing::data_path("toy_taxonomy.csv"), TaxonomyFormat::kEscoCsv);
  const auto dataset = load_eval_dataset(testing::data_path("toy_eval.jsonl"), &taxonomy);
  REQUIRE(dataset.size() == 6);
  CHECK(dataset[0].id == "h1");
  CHECK(dataset[3].subset == Subset::kTech);
  CHECK(dataset[3].gold.size() == 2);

  const auto defaulted = parse_eval_dataset("\n{\"span\":\"x\",\"gold\":[\"g\"],\"subset\":\"TECH\"}\n");
  REQUIRE(defaulted.size() == 1);
  CHECK(defaulted[0].id == "line-2");
  CHECK(defaulted[0].subset == Subset::kTech);

  const std::pair<const char*, const char*> bad[] = {
      {"{nope", "malformed JSON"},
      {R"({"gold":["g"],"subset":"house"})", "span"},
      {R"({"span":"x","gold":["g"],"subset":"kitchen"})", "unknown subset"},
      {R"({"span":"x","gold":[],"subset":"house"})", "empty gold"},
      {R"({"span":"x","gold":[1],"subset":"house"})", "gold entries"},
      {R"({"span":"x","gold":"g","subset":"house"})", "gold"},
      {"{\"id\":\"a\",\"span\":\"x\",\"gold\":[\"g\"],\"subset\":\"house\"}\n"
       "{\"id\":\"a\",\"span\":\"y\",\"gold\":[\"g\"],\"subset\":\"house\"}",
       "duplicate example id"},
  };
  for (const auto& [text, message] : bad) {
    CAPTURE(text);
    try {
      parse_eval_dataset(text);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find(message) != std::string::npos);
    }
  }
  try {
    parse_eval_dataset(R"({"span":"x","gold":["http://nowhere"],"subset":"house"})", &taxonomy);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()) == "eval dataset line 1: unknown skill id 'http://nowhere'");
  }
}
