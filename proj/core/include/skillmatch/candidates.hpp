#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skillmatch/datagen.hpp"
#include "skillmatch/index.hpp"
#include "skillmatch/taxonomy.hpp"

namespace skillmatch {

// ---------------------------------------------------------------------------
// One-vs-rest classifiers

struct TrainingConfig {
  double neg_ratio = 2.0;
  double hard_neg_fraction = 0.1;
  std::size_t hard_pool_labels = 20;
  double inverse_reg_c = 0.1;
  int max_iterations = 10000;
  double tolerance = 1e-5;
  double positive_weight = 2.0;
  double threshold = 0.5;
  std::size_t lbfgs_memory = 10;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  void validate() const;
};

struct ClassifierModel {
  std::string skill_id;
  std::vector<double> weights;
  double bias = 0.0;
  double threshold = 0.5;
  bool converged = false;
  int iterations_used = 0;
  double final_loss = 0.0;

  double probability(std::span<const double> x) const;
};

// One training example: a frozen embedding row and its class.
struct TrainingRow {
  std::span<const float> x;
  bool positive = false;
};

// Weighted L2-regularized logistic loss
//   L(w, b) = ||w||^2 / (2C) + sum_i c_i log(1 + exp(-y_i (w.x_i + b)))
// with c_i = positive_weight for positives and 1 otherwise. b is not
// regularized.
struct ObjectiveValue {
  double loss = 0.0;
  std::vector<double> grad_w;
  double grad_b = 0.0;
};

ObjectiveValue logistic_objective(std::span<const double> weights, double bias, std::span<const TrainingRow> rows,
                                  const TrainingConfig& config);

// Data term only: adds sum_i c_i * d/d(w,b) log(1 + exp(-y_i z_i)) into
// grad_w / grad_b and returns the data loss.
double accumulate_data_term(std::span<const double> weights, double bias, std::span<const TrainingRow> rows,
                            double positive_weight, std::span<double> grad_w, double& grad_b);

// Minimizes the objective with L-BFGS and a monotone backtracking line search.
// Stops when ||grad|| <= tolerance (converged) or at max_iterations. When
// `loss_trace` is given, it receives the loss after every iteration.
ClassifierModel train_classifier(std::string skill_id, std::span<const TrainingRow> rows, std::size_t dimension,
                                 const TrainingConfig& config, std::vector<double>* loss_trace = nullptr);

// Convenience overload that looks the examples up in the sentence index.
ClassifierModel train_classifier(std::string skill_id, std::span<const SyntheticExample> positives,
                                 std::span<const SyntheticExample> negatives, const VectorIndex& embeddings,
                                 const TrainingConfig& config);

// Draws round(neg_ratio * N_pos) negatives from other skills; exactly
// round(hard_neg_fraction * N_neg) of them come from the hard pool: the
// hard_pool_labels skills whose sentences are most cosine-similar to any
// positive. Deterministic for a given engine state.
std::vector<SyntheticExample> sample_negatives(std::string_view skill_id, std::span<const SyntheticExample> corpus,
                                               const VectorIndex& sentence_index, const TrainingConfig& config,
                                               std::mt19937_64& rng);

// Skills ranked by their best sentence similarity to any positive, best first.
std::vector<std::string> hard_negative_pool(std::string_view skill_id, std::span<const SyntheticExample> corpus,
                                            const VectorIndex& sentence_index, std::size_t pool_size);

struct NegativeCounts {
  std::size_t negatives = 0;
  std::size_t hard = 0;
};
NegativeCounts negative_counts(std::size_t positives, const TrainingConfig& config);

// Engine seed for one skill; independent of training order.
std::uint64_t skill_seed(std::uint64_t seed, std::string_view skill_id);

struct ConvergenceSummary {
  std::size_t models = 0;
  std::size_t converged = 0;
  std::vector<std::pair<std::string, std::size_t>> iteration_histogram;  // bucket label -> count
};

struct ClassifierBank {
  std::size_t dimension = 0;
  TrainingConfig config;
  std::vector<ClassifierModel> models;
  std::string metadata;

  ConvergenceSummary summary() const;

  // Header {magic, dimension, count, config echo, metadata} followed by
  // per-model records (skill_id, float32 weights, bias, converged flag).
  void save(const std::string& path) const;
  static ClassifierBank load(const std::string& path);
};

// Trains one model per skill present in the corpus (parallel over skills).
ClassifierBank train_classifier_bank(std::span<const SyntheticExample> corpus, const VectorIndex& sentence_index,
                                     const TrainingConfig& config);

// ---------------------------------------------------------------------------
// Candidate generation

enum class CandidateSource { kClassifier, kLabelSim, kSentenceSim };

std::string_view to_string(CandidateSource source);

struct Candidate {
  std::string skill_id;
  CandidateSource source = CandidateSource::kClassifier;
  double score = 0.0;
  std::string label;  // preferred label, filled by attach_labels

  bool operator==(const Candidate&) const = default;
};

struct CandidateSet {
  std::string span_text;
  std::vector<Candidate> candidates;  // classifier block, then similarity block
  std::size_t classifier_count = 0;

  bool empty() const noexcept { return candidates.empty(); }
};

inline constexpr std::size_t kSimilarityTopK = 40;
inline constexpr std::size_t kSentenceMinHits = 2;
inline constexpr std::size_t kSimilarityCap = 60;
inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

// Every model with sigmoid(w.x + b) >= threshold, by probability descending
// then skill_id ascending.
std::vector<Candidate> classifier_candidates(std::span<const double> span_vector,
                                             std::span<const ClassifierModel> models);

std::vector<Candidate> label_similarity_candidates(std::span<const double> span_vector,
                                                   const VectorIndex& labels_index,
                                                   std::size_t k = kSimilarityTopK);

// Skills with at least `min_hits` sentences among the top-k sentences,
// scored by their best sentence.
std::vector<Candidate> sentence_similarity_candidates(std::span<const double> span_vector,
                                                      const VectorIndex& sentence_index,
                                                      std::size_t k = kSimilarityTopK,
                                                      std::size_t min_hits = kSentenceMinHits);

CandidateSet merge_candidates(std::span<const Candidate> classifier, std::span<const Candidate> label_sim,
                              std::span<const Candidate> sentence_sim, std::size_t similarity_cap = kSimilarityCap,
                              std::size_t classifier_cap = kUnlimited);

// Fills Candidate::label from the taxonomy. Unknown ids throw.
void attach_labels(CandidateSet& set, const Taxonomy& taxonomy);

}  // namespace skillmatch
