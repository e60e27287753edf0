#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillmatch/candidates.hpp"
#include "skillmatch/providers.hpp"

namespace skillmatch {

enum class PromptVariant { kNatural, kCode };

std::string_view to_string(PromptVariant variant);
std::optional<PromptVariant> parse_prompt_variant(std::string_view text);

inline constexpr std::string_view kNoLabel = "NO_LABEL";
inline constexpr std::size_t kMaxRanked = 10;

// system persona, user instructions, mocked assistant acknowledgment, user query.
struct RerankTranscript {
  std::vector<ChatMessage> messages;
};

struct RankedPrediction {
  std::vector<std::string> ranked;  // skill ids, best first, at most 10
  std::string justification;        // raw model text
  int hallucinated_count = 0;
  bool terminated_by_no_label = false;
  bool parse_failed = false;

  bool operator==(const RankedPrediction&) const = default;
};

// Raw template asset for a variant, with {{potential_skills}} and
// {{text_extract}} slots.
std::string_view rerank_template(PromptVariant variant);

// Short content hash over all prompt assets.
std::string template_version();

RerankTranscript build_rerank_prompt(std::string_view span, const CandidateSet& candidates, PromptVariant variant);

RankedPrediction parse_natural_response(std::string_view text, const CandidateSet& candidates);
RankedPrediction parse_code_response(std::string_view text, const CandidateSet& candidates);

// Static extraction of the strings returned by `rank_skills` in the first
// fenced code block that defines it. Supports `return [<string literals>]`
// and `name = [<string literals>]` ... `return name`. Model code is only
// tokenized, never evaluated. Throws ParseFailure.
std::vector<std::string> extract_rank_skills_literals(std::string_view text);

// Maps raw item strings onto candidate skill ids: NO_LABEL stops the list,
// unmatched items count as hallucinations, duplicates are dropped, and at
// most 10 are kept.
RankedPrediction validate_ranking(const std::vector<std::string>& items, const CandidateSet& candidates);

// Throws std::logic_error if the prediction breaks its invariants with
// respect to `candidates`.
void check_prediction(const RankedPrediction& prediction, const CandidateSet& candidates);

struct RerankOptions {
  std::string model_id = "gpt-4-0314";
  double temperature = 0.0;
  int max_tokens = 1024;
  int retries = 1;
};

struct RerankOutcome {
  RankedPrediction prediction;
  RerankTranscript transcript;
  std::vector<std::string> raw_responses;
};

// build -> complete_chat -> parse. A ParseFailure triggers one retry with a
// corrective user message; a second failure yields an empty prediction with
// parse_failed set. Provider errors propagate.
RerankOutcome rerank(std::string_view span, const CandidateSet& candidates, ChatProvider& provider,
                     PromptVariant variant, const RerankOptions& options = {});

// One line of the transcript log.
nlohmann::json transcript_log_entry(std::string_view span, const CandidateSet& candidates,
                                    const RerankOutcome& outcome);

nlohmann::json to_json(const RankedPrediction& prediction);

}  // namespace skillmatch
