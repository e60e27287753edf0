#include "skillmatch/candidates.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

namespace skillmatch {

std::string_view to_string(CandidateSource source) {
  switch (source) {
    case CandidateSource::kClassifier: return "classifier";
    case CandidateSource::kLabelSim: return "label_sim";
    case CandidateSource::kSentenceSim: return "sentence_sim";
  }
  return "classifier";
}

NegativeCounts negative_counts(std::size_t positives, const TrainingConfig& config) {
  NegativeCounts counts;
  counts.negatives = static_cast<std::size_t>(std::llround(config.neg_ratio * static_cast<double>(positives)));
  counts.hard = static_cast<std::size_t>(std::llround(config.hard_neg_fraction * static_cast<double>(counts.negatives)));
  return counts;
}

std::uint64_t skill_seed(std::uint64_t seed, std::string_view skill_id) {
  std::uint64_t state = seed ^ util::fnv1a64(skill_id);
  return util::splitmix64(state);
}

std::vector<std::string> hard_negative_pool(std::string_view skill_id, std::span<const SyntheticExample> corpus,
                                            const VectorIndex& sentence_index, std::size_t pool_size) {
  std::vector<double> best(sentence_index.size(), -2.0);
  std::vector<double> query(sentence_index.dimension());
  bool any_positive = false;
  for (const auto& example : corpus) {
    if (example.skill_id != skill_id) continue;
    const auto slot = sentence_index.find(example_key(example));
    if (!slot) throw FormatError(fmt::format("no embedding for example '{}'", example_key(example)));
    any_positive = true;
    const auto row = sentence_index.row(*slot);
    std::copy(row.begin(), row.end(), query.begin());
    for (std::size_t i = 0; i < sentence_index.size(); ++i) {
      best[i] = std::max(best[i], dot(sentence_index.row(i), query));
    }
  }
  if (!any_positive) throw FormatError(fmt::format("no positive examples for '{}'", skill_id));

  std::unordered_map<std::string_view, double> best_by_skill;
  for (std::size_t i = 0; i < sentence_index.size(); ++i) {
    const std::string& other = sentence_index.skill_id(i);
    if (other == skill_id) continue;
    auto [it, inserted] = best_by_skill.emplace(other, best[i]);
    if (!inserted) it->second = std::max(it->second, best[i]);
  }
  std::vector<std::pair<std::string_view, double>> ranked(best_by_skill.begin(), best_by_skill.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  ranked.resize(std::min(ranked.size(), pool_size));
  std::vector<std::string> pool;
  pool.reserve(ranked.size());
  for (const auto& [id, score] : ranked) pool.emplace_back(id);
  return pool;
}

namespace {

// Moves `count` uniformly chosen elements of `items` to its front.
void partial_shuffle(std::vector<std::size_t>& items, std::size_t count, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(items[i], items[i + util::uniform_below(rng, items.size() - i)]);
  }
}

}  // namespace

std::vector<SyntheticExample> sample_negatives(std::string_view skill_id, std::span<const SyntheticExample> corpus,
                                               const VectorIndex& sentence_index, const TrainingConfig& config,
                                               std::mt19937_64& rng) {
  config.validate();
  std::size_t positives = 0;
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].skill_id == skill_id) {
      ++positives;
    } else {
      others.push_back(i);
    }
  }
  if (positives == 0) throw FormatError(fmt::format("no positive examples for '{}'", skill_id));
  const NegativeCounts counts = negative_counts(positives, config);
  if (others.size() < counts.negatives) {
    throw FormatError(fmt::format("corpus too small: '{}' needs {} negatives, {} available", skill_id,
                                  counts.negatives, others.size()));
  }

  std::vector<std::size_t> chosen;
  chosen.reserve(counts.negatives);
  std::unordered_set<std::size_t> taken;
  if (counts.hard > 0) {
    const auto pool = hard_negative_pool(skill_id, corpus, sentence_index, config.hard_pool_labels);
    const std::unordered_set<std::string_view> pool_set(pool.begin(), pool.end());
    std::vector<std::size_t> hard_candidates;
    for (std::size_t i : others) {
      if (pool_set.contains(corpus[i].skill_id)) hard_candidates.push_back(i);
    }
    if (hard_candidates.size() < counts.hard) {
      throw FormatError(fmt::format("corpus too small: '{}' needs {} hard negatives, pool has {}", skill_id,
                                    counts.hard, hard_candidates.size()));
    }
    partial_shuffle(hard_candidates, counts.hard, rng);
    for (std::size_t i = 0; i < counts.hard; ++i) {
      chosen.push_back(hard_candidates[i]);
      taken.insert(hard_candidates[i]);
    }
  }
  std::vector<std::size_t> remaining;
  remaining.reserve(others.size());
  for (std::size_t i : others) {
    if (!taken.contains(i)) remaining.push_back(i);
  }
  const std::size_t uniform = counts.negatives - chosen.size();
  partial_shuffle(remaining, uniform, rng);
  chosen.insert(chosen.end(), remaining.begin(), remaining.begin() + static_cast<std::ptrdiff_t>(uniform));

  std::vector<SyntheticExample> negatives;
  negatives.reserve(chosen.size());
  for (std::size_t i : chosen) negatives.push_back(corpus[i]);
  return negatives;
}

// ---------------------------------------------------------------------------

namespace {

bool by_score_then_id(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.skill_id < b.skill_id;
}

}  // namespace

std::vector<Candidate> classifier_candidates(std::span<const double> span_vector,
                                             std::span<const ClassifierModel> models) {
  std::vector<Candidate> out;
  for (const auto& model : models) {
    if (model.weights.size() != span_vector.size()) {
      throw std::invalid_argument(fmt::format("classifier '{}' dimension {} != span dimension {}", model.skill_id,
                                              model.weights.size(), span_vector.size()));
    }
    const double p = model.probability(span_vector);
    if (p >= model.threshold) out.push_back({model.skill_id, CandidateSource::kClassifier, p, {}});
  }
  std::sort(out.begin(), out.end(), by_score_then_id);
  return out;
}

std::vector<Candidate> label_similarity_candidates(std::span<const double> span_vector,
                                                   const VectorIndex& labels_index, std::size_t k) {
  std::vector<Candidate> out;
  std::unordered_set<std::string> seen;
  for (auto& hit : labels_index.top_k(span_vector, k)) {
    if (seen.insert(hit.skill_id).second) {
      out.push_back({std::move(hit.skill_id), CandidateSource::kLabelSim, hit.score, {}});
    }
  }
  return out;
}

std::vector<Candidate> sentence_similarity_candidates(std::span<const double> span_vector,
                                                      const VectorIndex& sentence_index, std::size_t k,
                                                      std::size_t min_hits) {
  std::map<std::string, std::pair<std::size_t, double>> groups;  // skill -> (hits, best)
  for (const auto& hit : sentence_index.top_k(span_vector, k)) {
    auto [it, inserted] = groups.try_emplace(hit.skill_id, 0, hit.score);
    ++it->second.first;
    it->second.second = std::max(it->second.second, hit.score);
  }
  std::vector<Candidate> out;
  for (const auto& [skill, group] : groups) {
    if (group.first >= min_hits) out.push_back({skill, CandidateSource::kSentenceSim, group.second, {}});
  }
  std::sort(out.begin(), out.end(), by_score_then_id);
  return out;
}

CandidateSet merge_candidates(std::span<const Candidate> classifier, std::span<const Candidate> label_sim,
                              std::span<const Candidate> sentence_sim, std::size_t similarity_cap,
                              std::size_t classifier_cap) {
  CandidateSet set;
  std::unordered_set<std::string> present;
  std::vector<Candidate> classifier_block(classifier.begin(), classifier.end());
  std::sort(classifier_block.begin(), classifier_block.end(), by_score_then_id);
  for (auto& candidate : classifier_block) {
    if (set.candidates.size() >= classifier_cap) break;
    if (present.insert(candidate.skill_id).second) set.candidates.push_back(std::move(candidate));
  }
  set.classifier_count = set.candidates.size();

  // Union of both similarity sources keeping the higher score; on a tie the
  // label similarity entry wins.
  std::map<std::string, Candidate> similarity;
  for (const auto* source : {&label_sim, &sentence_sim}) {
    for (const auto& candidate : *source) {
      auto [it, inserted] = similarity.try_emplace(candidate.skill_id, candidate);
      if (!inserted && candidate.score > it->second.score) it->second = candidate;
    }
  }
  std::vector<Candidate> similarity_block;
  similarity_block.reserve(similarity.size());
  for (auto& [id, candidate] : similarity) similarity_block.push_back(std::move(candidate));
  std::sort(similarity_block.begin(), similarity_block.end(), by_score_then_id);
  if (similarity_block.size() > similarity_cap) similarity_block.resize(similarity_cap);
  for (auto& candidate : similarity_block) {
    if (present.insert(candidate.skill_id).second) set.candidates.push_back(std::move(candidate));
  }
  return set;
}

void attach_labels(CandidateSet& set, const Taxonomy& taxonomy) {
  for (auto& candidate : set.candidates) candidate.label = taxonomy.at(candidate.skill_id).preferred_label;
}

}  // namespace skillmatch
