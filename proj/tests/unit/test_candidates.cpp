#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include <fmt/format.h>

#include "oracles.hpp"
#include "skillmatch/candidates.hpp"
#include "test_support.hpp"

using namespace skillmatch;

namespace {

struct Corpus {
  std::vector<SyntheticExample> examples;
  VectorIndex sentences{IndexKind::kSentences, 1};
};

// `skills` clusters in `dim` dimensions; skill 0 gets `target_count` examples,
// the rest `per_skill`.
Corpus clustered_corpus(std::size_t skills, std::size_t per_skill, std::size_t target_count, std::size_t dim,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Corpus corpus;
  corpus.sentences = VectorIndex(IndexKind::kSentences, dim);
  for (std::size_t s = 0; s < skills; ++s) {
    const auto centre = testing::random_unit_vector(dim, rng);
    const std::size_t count = s == 0 ? target_count : per_skill;
    for (std::size_t k = 0; k < count; ++k) {
      SyntheticExample example{fmt::format("s{:02}", s), fmt::format("sentence {} of {}", k, s), static_cast<int>(k)};
      auto noise = testing::random_vector(dim, rng, 0.3);
      for (std::size_t i = 0; i < dim; ++i) noise[i] += centre[i];
      corpus.sentences.add(example_key(example), example.skill_id, EmbeddingVector::normalized(noise));
      corpus.examples.push_back(std::move(example));
    }
  }
  return corpus;
}

std::vector<std::vector<float>> random_rows(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  std::vector<std::vector<float>> rows(n);
  for (auto& row : rows) {
    const auto v = testing::random_unit_vector(dim, rng);
    row.assign(v.begin(), v.end());
  }
  return rows;
}

std::vector<TrainingRow> as_training(const std::vector<std::vector<float>>& rows, const std::vector<int>& labels) {
  std::vector<TrainingRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) out.push_back({rows[i], labels[i] != 0});
  return out;
}

std::vector<std::vector<double>> widen(const std::vector<std::vector<float>>& rows) {
  std::vector<std::vector<double>> out;
  for (const auto& row : rows) out.emplace_back(row.begin(), row.end());
  return out;
}

}  // namespace

TEST_CASE("objective matches the oracle and its gradient matches finite differences") {
  std::mt19937_64 rng(10);
  const std::size_t dim = 12;
  const auto rows = random_rows(30, dim, rng);
  std::vector<int> labels(30);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 3 == 0;
  const auto training = as_training(rows, labels);
  const auto wide = widen(rows);
  const TrainingConfig config;

  for (int point = 0; point < 20; ++point) {
    const auto w = testing::random_vector(dim, rng, 2.0);
    const double b = testing::random_vector(1, rng, 1.0)[0];
    const auto value = logistic_objective(w, b, training, config);
    const double expected = oracle::logistic_loss(w, b, wide, labels, config.inverse_reg_c, config.positive_weight);
    CHECK(value.loss == doctest::Approx(expected).epsilon(1e-12));

    const double h = 1e-5;
    const auto loss_at = [&](std::vector<double> ww, double bb) {
      return oracle::logistic_loss(ww, bb, wide, labels, config.inverse_reg_c, config.positive_weight);
    };
    for (std::size_t i = 0; i <= dim; ++i) {
      double numeric;
      if (i < dim) {
        auto plus = w, minus = w;
        plus[i] += h;
        minus[i] -= h;
        numeric = (loss_at(plus, b) - loss_at(minus, b)) / (2 * h);
      } else {
        numeric = (loss_at(w, b + h) - loss_at(w, b - h)) / (2 * h);
      }
      const double analytic = i < dim ? value.grad_w[i] : value.grad_b;
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      CHECK(rel <= 1e-4);
    }
  }
}

TEST_CASE("positive weight scales the positive data term exactly") {
  std::mt19937_64 rng(11);
  const std::size_t dim = 6;
  const auto rows = random_rows(8, dim, rng);
  const auto w = testing::random_vector(dim, rng);
  const std::vector<int> all_positive(8, 1);
  const auto training = as_training(rows, all_positive);
  std::vector<double> g1(dim, 0.0), g2(dim, 0.0);
  double b1 = 0.0, b2 = 0.0;
  const double l1 = accumulate_data_term(w, 0.3, training, 1.0, g1, b1);
  const double l2 = accumulate_data_term(w, 0.3, training, 2.0, g2, b2);
  CHECK(l2 == 2.0 * l1);
  CHECK(b2 == 2.0 * b1);
  for (std::size_t i = 0; i < dim; ++i) CHECK(g2[i] == 2.0 * g1[i]);

  const std::vector<int> all_negative(8, 0);
  const auto negatives = as_training(rows, all_negative);
  std::vector<double> g3(dim, 0.0), g4(dim, 0.0);
  double b3 = 0.0, b4 = 0.0;
  CHECK(accumulate_data_term(w, 0.3, negatives, 1.0, g3, b3) == accumulate_data_term(w, 0.3, negatives, 2.0, g4, b4));
}

TEST_CASE("training decreases the loss monotonically and converges") {
  std::mt19937_64 rng(12);
  const std::size_t dim = 16;
  const auto rows = random_rows(90, dim, rng);
  std::vector<int> labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = rows[i][0] + rows[i][1] > 0.0f;
  const auto training = as_training(rows, labels);
  std::vector<double> trace;
  const auto model = train_classifier("s", training, dim, TrainingConfig{}, &trace);
  CHECK(model.converged);
  REQUIRE_FALSE(trace.empty());
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1]);
  const auto final_value = logistic_objective(model.weights, model.bias, training, TrainingConfig{});
  double norm = final_value.grad_b * final_value.grad_b;
  for (double g : final_value.grad_w) norm += g * g;
  CHECK(std::sqrt(norm) <= TrainingConfig{}.tolerance);
  CHECK(model.iterations_used == static_cast<int>(trace.size()));

  TrainingConfig short_run;
  short_run.max_iterations = 1;
  CHECK_FALSE(train_classifier("s", training, dim, short_run).converged);
  CHECK_THROWS_AS(train_classifier("s", std::span<const TrainingRow>{}, dim, TrainingConfig{}), FormatError);
}

TEST_CASE("negative sampling sizes for every positive count") {
  const TrainingConfig config;
  for (std::size_t n_pos = 1; n_pos <= 40; ++n_pos) {
    CAPTURE(n_pos);
    const auto corpus = clustered_corpus(24, 12, n_pos, 8, 100 + n_pos);
    std::mt19937_64 rng(skill_seed(0, "s00"));
    const auto negatives = sample_negatives("s00", corpus.examples, corpus.sentences, config, rng);
    const auto counts = negative_counts(n_pos, config);
    CHECK(counts.negatives == static_cast<std::size_t>(std::llround(2.0 * n_pos)));
    CHECK(counts.hard == static_cast<std::size_t>(std::llround(0.1 * counts.negatives)));
    REQUIRE(negatives.size() == counts.negatives);

    std::set<std::string> keys;
    for (const auto& negative : negatives) {
      CHECK(negative.skill_id != "s00");
      keys.insert(example_key(negative));
    }
    CHECK(keys.size() == negatives.size());

    const auto pool = hard_negative_pool("s00", corpus.examples, corpus.sentences, config.hard_pool_labels);
    CHECK(pool.size() == std::min<std::size_t>(20, 23));
    const std::set<std::string> pool_set(pool.begin(), pool.end());
    for (std::size_t i = 0; i < counts.hard; ++i) CHECK(pool_set.contains(negatives[i].skill_id));
  }
}

TEST_CASE("hard pool ranks skills by best sentence similarity") {
  const auto corpus = clustered_corpus(8, 5, 5, 6, 7);
  const auto pool = hard_negative_pool("s00", corpus.examples, corpus.sentences, 3);
  REQUIRE(pool.size() == 3);
  std::map<std::string, double> best;
  for (std::size_t p = 0; p < corpus.sentences.size(); ++p) {
    if (corpus.sentences.skill_id(p) != "s00") continue;
    const auto row = corpus.sentences.row(p);
    const std::vector<double> query(row.begin(), row.end());
    for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
      const auto& skill = corpus.sentences.skill_id(i);
      if (skill == "s00") continue;
      const double score = oracle::row_score(corpus.sentences, i, query);
      if (!best.contains(skill) || score > best[skill]) best[skill] = score;
    }
  }
  std::vector<std::pair<double, std::string>> ranked;
  for (const auto& [skill, score] : best) ranked.emplace_back(-score, skill);
  std::sort(ranked.begin(), ranked.end());
  for (std::size_t i = 0; i < 3; ++i) CHECK(pool[i] == ranked[i].second);
}

TEST_CASE("sampling is deterministic per seed and fails on tiny corpora") {
  const auto corpus = clustered_corpus(10, 10, 10, 8, 3);
  std::mt19937_64 a(skill_seed(5, "s00")), b(skill_seed(5, "s00")), c(skill_seed(6, "s00"));
  const auto first = sample_negatives("s00", corpus.examples, corpus.sentences, TrainingConfig{}, a);
  CHECK(first == sample_negatives("s00", corpus.examples, corpus.sentences, TrainingConfig{}, b));
  CHECK_FALSE(first == sample_negatives("s00", corpus.examples, corpus.sentences, TrainingConfig{}, c));
  CHECK(skill_seed(5, "s00") != skill_seed(5, "s01"));

  const auto tiny = clustered_corpus(2, 3, 10, 8, 3);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(sample_negatives("s00", tiny.examples, tiny.sentences, TrainingConfig{}, rng), FormatError);
  CHECK_THROWS_AS(sample_negatives("nope", tiny.examples, tiny.sentences, TrainingConfig{}, rng), FormatError);
}

TEST_CASE("candidate sources agree with brute-force oracles") {
  std::mt19937_64 rng(20);
  const std::size_t dim = 16;
  for (int trial = 0; trial < 20; ++trial) {
    const auto corpus = clustered_corpus(30, 6, 6, dim, 500 + trial);
    VectorIndex labels(IndexKind::kLabels, dim);
    for (std::size_t s = 0; s < 30; ++s) {
      labels.add(fmt::format("label-{}", s), fmt::format("s{:02}", s),
                 EmbeddingVector::normalized(testing::random_vector(dim, rng)));
      labels.add(fmt::format("alt-{}", s), fmt::format("s{:02}", s),
                 EmbeddingVector::normalized(testing::random_vector(dim, rng)));
    }
    std::vector<ClassifierModel> models;
    for (std::size_t s = 0; s < 30; ++s) {
      ClassifierModel model;
      model.skill_id = fmt::format("s{:02}", s);
      model.weights = testing::random_vector(dim, rng, 3.0);
      model.bias = -0.5;
      models.push_back(std::move(model));
    }
    const auto query = testing::random_unit_vector(dim, rng);

    const auto cls = classifier_candidates(query, models);
    const auto want_cls = oracle::classifier(models, query);
    REQUIRE(cls.size() == want_cls.size());
    for (std::size_t i = 0; i < cls.size(); ++i) {
      CHECK(cls[i].skill_id == want_cls[i].skill_id);
      CHECK(std::abs(cls[i].score - want_cls[i].score) <= 1e-12);
    }

    const auto label = label_similarity_candidates(query, labels);
    const auto want_label = oracle::label_similarity(labels, query, kSimilarityTopK);
    REQUIRE(label.size() == want_label.size());
    for (std::size_t i = 0; i < label.size(); ++i) CHECK(label[i].skill_id == want_label[i].skill_id);

    const auto sentence = sentence_similarity_candidates(query, corpus.sentences);
    const auto want_sentence = oracle::sentence_similarity(corpus.sentences, query, kSimilarityTopK, kSentenceMinHits);
    REQUIRE(sentence.size() == want_sentence.size());
    for (std::size_t i = 0; i < sentence.size(); ++i) {
      CHECK(sentence[i].skill_id == want_sentence[i].skill_id);
      CHECK(sentence[i].score == want_sentence[i].score);
    }

    const auto merged = merge_candidates(cls, label, sentence);
    const auto want_merged = oracle::merge(cls, label, sentence, kSimilarityCap);
    REQUIRE(merged.candidates.size() == want_merged.size());
    for (std::size_t i = 0; i < want_merged.size(); ++i) {
      CHECK(merged.candidates[i].skill_id == want_merged[i].skill_id);
      CHECK(merged.candidates[i].source == want_merged[i].source);
    }
    CHECK(merged.classifier_count == cls.size());
    CHECK(merged.candidates.size() <= cls.size() + kSimilarityCap);
    std::set<std::string> ids;
    for (const auto& c : merged.candidates) ids.insert(c.skill_id);
    CHECK(ids.size() == merged.candidates.size());
  }
}

TEST_CASE("merge caps the similarity block and honours the classifier cap") {
  std::vector<Candidate> cls = {{"a", CandidateSource::kClassifier, 0.9, {}}, {"b", CandidateSource::kClassifier, 0.8, {}}};
  std::vector<Candidate> label, sentence;
  for (int i = 0; i < 80; ++i) label.push_back({fmt::format("l{:02}", i), CandidateSource::kLabelSim, 1.0 - i * 0.01, {}});
  sentence.push_back({"l05", CandidateSource::kSentenceSim, 0.99, {}});
  sentence.push_back({"a", CandidateSource::kSentenceSim, 0.995, {}});
  sentence.push_back({"l00", CandidateSource::kSentenceSim, 1.0, {}});

  const auto merged = merge_candidates(cls, label, sentence);
  CHECK(merged.classifier_count == 2);
  CHECK(merged.candidates[0].skill_id == "a");
  CHECK(merged.candidates[2].skill_id == "l00");
  CHECK(merged.candidates[2].source == CandidateSource::kLabelSim);  // tie keeps the label entry
  const auto l05 = std::find_if(merged.candidates.begin(), merged.candidates.end(),
                                [](const Candidate& c) { return c.skill_id == "l05"; });
  REQUIRE(l05 != merged.candidates.end());
  CHECK(l05->source == CandidateSource::kSentenceSim);
  // "a" takes one similarity slot before being dropped as a duplicate.
  CHECK(merged.candidates.size() == 2 + kSimilarityCap - 1);

  const auto capped = merge_candidates(cls, label, sentence, kSimilarityCap, 1);
  CHECK(capped.classifier_count == 1);
  CHECK(capped.candidates[0].skill_id == "a");

  const auto none = merge_candidates({}, {}, {});
  CHECK(none.empty());
}

TEST_CASE("attach_labels uses preferred labels") {
  const auto taxonomy = testing::make_toy_taxonomy(3);
  CandidateSet set;
  set.candidates.push_back({taxonomy.skills()[1].id, CandidateSource::kLabelSim, 0.5, {}});
  attach_labels(set, taxonomy);
  CHECK(set.candidates[0].label == taxonomy.skills()[1].preferred_label);
  set.candidates.push_back({"unknown", CandidateSource::kLabelSim, 0.4, {}});
  CHECK_THROWS(attach_labels(set, taxonomy));
}

TEST_CASE("classifier bank trains, summarizes and round-trips") {
  testing::TempDir dir;
  const auto corpus = clustered_corpus(12, 10, 10, 8, 42);
  TrainingConfig config;
  config.seed = 42;
  const auto bank = train_classifier_bank(corpus.examples, corpus.sentences, config);
  REQUIRE(bank.models.size() == 12);
  const auto summary = bank.summary();
  CHECK(summary.models == 12);
  std::size_t histogram_total = 0;
  for (const auto& [label, count] : summary.iteration_histogram) histogram_total += count;
  CHECK(histogram_total == 12);

  config.jobs = 3;
  const auto parallel = train_classifier_bank(corpus.examples, corpus.sentences, config);
  for (std::size_t m = 0; m < 12; ++m) CHECK(parallel.models[m].weights == bank.models[m].weights);

  bank.save(dir.file("bank.bin"));
  const auto loaded = ClassifierBank::load(dir.file("bank.bin"));
  CHECK(loaded.dimension == 8);
  CHECK(loaded.config.seed == 42);
  REQUIRE(loaded.models.size() == 12);
  for (std::size_t m = 0; m < 12; ++m) {
    CHECK(loaded.models[m].skill_id == bank.models[m].skill_id);
    CHECK(loaded.models[m].bias == bank.models[m].bias);
    CHECK(loaded.models[m].converged == bank.models[m].converged);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(loaded.models[m].weights[i] == static_cast<double>(static_cast<float>(bank.models[m].weights[i])));
    }
  }

  std::string bytes = testing::read_text(dir.file("bank.bin"));
  bytes[bytes.size() - 5] ^= 0x11;
  util::write_file_atomic(dir.file("bad.bin"), bytes);
  CHECK_THROWS_AS(ClassifierBank::load(dir.file("bad.bin")), FormatError);
}

TEST_CASE("training config validation") {
  TrainingConfig config;
  CHECK_NOTHROW(config.validate());
  config.inverse_reg_c = 0.0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = {};
  config.threshold = 1.0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = {};
  config.hard_neg_fraction = 1.5;
  CHECK_THROWS_AS(config.validate(), ConfigError);
}
