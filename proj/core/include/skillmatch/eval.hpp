#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillmatch/reranker.hpp"
#include "skillmatch/taxonomy.hpp"

namespace skillmatch {

enum class Subset { kHouse, kTech };

std::string_view to_string(Subset subset);
std::optional<Subset> parse_subset(std::string_view text);

struct EvalExample {
  std::string id;  // "line-N" unless given
  std::string span;
  std::set<std::string> gold;
  Subset subset = Subset::kHouse;
};

inline constexpr int kReportedK[] = {1, 5, 10};

// |top-k(ranked) ∩ gold| / min(k, |gold|). Throws std::invalid_argument on
// empty gold or k < 1.
double rp_at_k(const std::vector<std::string>& ranked, const std::set<std::string>& gold, int k);

// 1/r for the first gold member at 1-based position r, else 0.
double mrr_single(const std::vector<std::string>& ranked, const std::set<std::string>& gold);

struct SubsetMetrics {
  double mrr = 0.0;
  std::map<int, double> rp;  // k -> RP@k
  std::size_t count = 0;

  bool operator==(const SubsetMetrics&) const = default;
};

struct RunMetadata {
  std::string label;     // e.g. "+Both / natural"
  std::string variant;   // natural, code or none
  std::string sources;   // classifier, similarity or both
  std::uint64_t seed = 0;
  std::string model_id;
  std::string config_hash;
  std::string template_version;

  bool operator==(const RunMetadata&) const = default;
};

struct EvalReport {
  std::map<Subset, SubsetMetrics> subsets;
  RunMetadata metadata;

  bool operator==(const EvalReport&) const = default;
};

// Macro averages per subset. Every example needs a prediction (keyed by
// EvalExample::id); parse-failed predictions score as empty.
EvalReport evaluate(const std::map<std::string, RankedPrediction>& predictions,
                    const std::vector<EvalExample>& dataset, RunMetadata metadata = {});

// JSONL: {"span": ..., "gold": [uri, ...], "subset": "house"|"tech", "id"?: ...}.
// With a taxonomy, unknown gold ids are rejected.
std::vector<EvalExample> load_eval_dataset(const std::string& path, const Taxonomy* taxonomy = nullptr);
std::vector<EvalExample> parse_eval_dataset(std::string_view text, const Taxonomy* taxonomy = nullptr);

// Fixed-width table: one row per report, House columns then Tech columns.
// MRR with 3 decimals, RP@k x100 with 2 decimals.
std::string render_report(const EvalReport& report);
std::string render_report_grid(const std::vector<EvalReport>& reports);

// {"house": {"mrr", "rp1", "rp5", "rp10", "n"}, "tech": {...}, "metadata": {...}}
nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& json);

}  // namespace skillmatch
