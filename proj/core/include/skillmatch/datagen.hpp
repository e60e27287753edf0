#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillmatch/providers.hpp"
#include "skillmatch/taxonomy.hpp"

namespace skillmatch {

struct DataGenConfig {
  int examples_per_skill = 40;
  int min_acceptable = 30;
  // Number of examples that must avoid naming the skill, per category.
  std::map<SkillCategory, int> implicit_quota = {
      {SkillCategory::kTech, 5}, {SkillCategory::kLanguage, 0}, {SkillCategory::kGeneral, 32}};
  // Extra attempts for a failed or short generation. 0 replicates a single pass.
  int retries = 1;
  std::string model_id = "gpt-3.5-turbo-0301";
  double temperature = 1.0;
  int max_tokens = 4096;
  // generate_dataset fails as a whole above this fraction of transport failures.
  double max_transport_failure_fraction = 0.05;
  std::size_t jobs = 1;

  void validate() const;
};

struct SyntheticExample {
  std::string skill_id;
  std::string text;
  int ordinal = 0;

  bool operator==(const SyntheticExample&) const = default;
};

enum class SkipReason { kContentFiltered, kTransportError, kParseFailure, kMissing };

std::string_view to_string(SkipReason reason);

struct SkippedSkill {
  std::string skill_id;
  SkipReason reason = SkipReason::kMissing;
  std::string detail;
};

struct GenerationReport {
  std::size_t attempted = 0;
  int examples_per_skill = 40;
  int min_acceptable = 30;
  std::map<std::string, int> counts;  // skills with at least one example
  double skills_full = 0.0;           // fraction with exactly examples_per_skill
  double skills_partial = 0.0;        // fraction kept with fewer examples
  double skipped_fraction = 0.0;
  std::vector<std::string> skills_below_min;
  std::vector<SkippedSkill> skipped;
};

// Quota phrase inserted into the prompt: "FIVE", "ZERO", "80% (THIRTY-TWO)".
std::string implicit_quota_phrase(SkillCategory category, const DataGenConfig& config);

ChatRequest build_datagen_prompt(const Skill& skill, const DataGenConfig& config);

// Splits a numbered or bulleted list into example texts. Throws ParseFailure
// (kNoItems) when nothing usable is found.
std::vector<std::string> parse_generation(std::string_view response);

struct GeneratedDataset {
  std::vector<SyntheticExample> examples;
  GenerationReport report;
};

// Skills listed in `keep` are taken from `existing` instead of being
// regenerated (used by --resume).
GeneratedDataset generate_dataset(const Taxonomy& taxonomy, ChatProvider& provider, const DataGenConfig& config,
                                  std::span<const SyntheticExample> existing = {});

// Recomputes the report for a stored corpus. Unknown skill ids are an error.
GenerationReport validate_dataset(std::span<const SyntheticExample> dataset, const Taxonomy& taxonomy,
                                  const DataGenConfig& config);

// Corpus JSONL: one {"skill_id", "text", "ordinal"} object per line.
void write_corpus(const std::string& path, std::span<const SyntheticExample> examples);
std::vector<SyntheticExample> read_corpus(const std::string& path);

// Index key of a corpus sentence.
std::string example_key(const SyntheticExample& example);

nlohmann::json report_to_json(const GenerationReport& report);
std::string render_generation_summary(const GenerationReport& report);

// Examples of `count` randomly chosen skills for manual spot checks.
std::vector<SyntheticExample> sample_for_review(std::span<const SyntheticExample> corpus, std::size_t count,
                                                std::uint64_t seed);

}  // namespace skillmatch
