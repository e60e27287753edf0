#pragma once

// Brute-force reference implementations used by the unit and acceptance
// suites. They share no code with the library beyond its data types.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "skillmatch/candidates.hpp"
#include "skillmatch/index.hpp"

namespace skillmatch::oracle {

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  double uv = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  return uv / std::sqrt(uu * vv);
}

inline double row_score(const VectorIndex& index, std::size_t row, std::span<const double> query) {
  double sum = 0.0;
  const auto r = index.row(row);
  for (std::size_t i = 0; i < r.size(); ++i) sum += static_cast<double>(r[i]) * query[i];
  return sum;
}

// Scores every row, sorts everything, keeps k.
inline std::vector<ScoredEntry> top_k(const VectorIndex& index, std::span<const double> query, std::size_t k) {
  std::vector<ScoredEntry> all;
  for (std::size_t i = 0; i < index.size(); ++i) all.push_back({index.key(i), index.skill_id(i), row_score(index, i, query)});
  std::sort(all.begin(), all.end(), [](const ScoredEntry& a, const ScoredEntry& b) {
    return a.score != b.score ? a.score > b.score : a.key < b.key;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

inline bool candidate_order(const Candidate& a, const Candidate& b) {
  return a.score != b.score ? a.score > b.score : a.skill_id < b.skill_id;
}

inline std::vector<Candidate> label_similarity(const VectorIndex& labels, std::span<const double> query,
                                               std::size_t k) {
  std::vector<Candidate> out;
  std::set<std::string> seen;
  for (const auto& hit : top_k(labels, query, k)) {
    if (seen.insert(hit.skill_id).second) out.push_back({hit.skill_id, CandidateSource::kLabelSim, hit.score, {}});
  }
  return out;
}

inline std::vector<Candidate> sentence_similarity(const VectorIndex& sentences, std::span<const double> query,
                                                  std::size_t k, std::size_t min_hits) {
  std::map<std::string, std::vector<double>> by_skill;
  for (const auto& hit : top_k(sentences, query, k)) by_skill[hit.skill_id].push_back(hit.score);
  std::vector<Candidate> out;
  for (const auto& [skill, scores] : by_skill) {
    if (scores.size() < min_hits) continue;
    out.push_back({skill, CandidateSource::kSentenceSim, *std::max_element(scores.begin(), scores.end()), {}});
  }
  std::sort(out.begin(), out.end(), candidate_order);
  return out;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline std::vector<Candidate> classifier(const std::vector<ClassifierModel>& models, std::span<const double> x) {
  std::vector<Candidate> out;
  for (const auto& model : models) {
    double z = model.bias;
    for (std::size_t i = 0; i < x.size(); ++i) z += model.weights[i] * x[i];
    const double p = sigmoid(z);
    if (p >= model.threshold) out.push_back({model.skill_id, CandidateSource::kClassifier, p, {}});
  }
  std::sort(out.begin(), out.end(), candidate_order);
  return out;
}

// Classifier block as given, then the best-scoring similarity entries
// (label source preferred on equal scores) not already present, capped.
inline std::vector<Candidate> merge(const std::vector<Candidate>& cls, const std::vector<Candidate>& label,
                                    const std::vector<Candidate>& sentence, std::size_t cap) {
  std::vector<Candidate> out = cls;
  std::sort(out.begin(), out.end(), candidate_order);
  std::vector<Candidate> pool;
  for (const auto& c : label) pool.push_back(c);
  for (const auto& c : sentence) {
    auto it = std::find_if(pool.begin(), pool.end(), [&](const Candidate& p) { return p.skill_id == c.skill_id; });
    if (it == pool.end()) {
      pool.push_back(c);
    } else if (c.score > it->score) {
      *it = c;
    }
  }
  std::sort(pool.begin(), pool.end(), candidate_order);
  if (pool.size() > cap) pool.resize(cap);
  for (const auto& c : pool) {
    const bool present =
        std::any_of(out.begin(), out.end(), [&](const Candidate& o) { return o.skill_id == c.skill_id; });
    if (!present) out.push_back(c);
  }
  return out;
}

// Weighted regularized logistic loss written out term by term.
inline double logistic_loss(const std::vector<double>& w, double b, const std::vector<std::vector<double>>& xs,
                            const std::vector<int>& ys, double c, double positive_weight) {
  double reg = 0.0;
  for (double wi : w) reg += wi * wi;
  double loss = reg / (2.0 * c);
  for (std::size_t n = 0; n < xs.size(); ++n) {
    double z = b;
    for (std::size_t i = 0; i < w.size(); ++i) z += w[i] * xs[n][i];
    const double y = ys[n] ? 1.0 : -1.0;
    const double weight = ys[n] ? positive_weight : 1.0;
    loss += weight * std::log1p(std::exp(-y * z));
  }
  return loss;
}

// RP@k by explicit counting over positions.
inline double rp_at_k(const std::vector<std::string>& ranked, const std::set<std::string>& gold, int k) {
  int found = 0;
  std::vector<std::string> counted;
  for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i) {
    bool in_gold = false;
    for (const auto& g : gold) in_gold = in_gold || g == ranked[i];
    bool repeated = false;
    for (const auto& c : counted) repeated = repeated || c == ranked[i];
    if (in_gold && !repeated) {
      ++found;
      counted.push_back(ranked[i]);
    }
  }
  const int denom = std::min<int>(k, static_cast<int>(gold.size()));
  return static_cast<double>(found) / static_cast<double>(denom);
}

inline double mrr(const std::vector<std::string>& ranked, const std::set<std::string>& gold) {
  double best = 0.0;
  for (std::size_t i = ranked.size(); i-- > 0;) {
    if (gold.count(ranked[i])) best = 1.0 / static_cast<double>(i + 1);
  }
  return best;
}

}  // namespace skillmatch::oracle
