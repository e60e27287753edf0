#include "skillmatch/reranker.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "prompt_assets.hpp"
#include "template.hpp"

namespace skillmatch {

std::string_view to_string(PromptVariant variant) {
  return variant == PromptVariant::kCode ? "code" : "natural";
}

std::optional<PromptVariant> parse_prompt_variant(std::string_view text) {
  if (text == "natural") return PromptVariant::kNatural;
  if (text == "code") return PromptVariant::kCode;
  return std::nullopt;
}

std::string_view rerank_template(PromptVariant variant) {
  return variant == PromptVariant::kCode ? assets::code_rerank_template() : assets::natural_rerank_template();
}

std::string template_version() {
  std::string all;
  for (const auto asset :
       {assets::datagen_template(), assets::natural_rerank_template(), assets::code_rerank_template()}) {
    all += asset;
    all += '\0';
  }
  return util::sha256_hex(all).substr(0, 12);
}

RerankTranscript build_rerank_prompt(std::string_view span, const CandidateSet& candidates, PromptVariant variant) {
  if (candidates.empty()) throw std::invalid_argument("cannot rerank an empty candidate set");
  std::string labels;
  for (const auto& candidate : candidates.candidates) {
    if (candidate.label.empty()) {
      throw std::invalid_argument(fmt::format("candidate '{}' has no label", candidate.skill_id));
    }
    if (!labels.empty()) labels += '\n';
    labels += candidate.label;
  }
  const std::map<std::string, std::string> slots{{"potential_skills", labels}, {"text_extract", std::string(span)}};
  RerankTranscript transcript{detail::split_transcript(rerank_template(variant))};
  for (auto& message : transcript.messages) message.content = detail::render_slots(message.content, slots);
  return transcript;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

bool is_no_label(std::string_view item) { return util::fold_label(item) == util::ascii_lower(kNoLabel); }

}  // namespace

RankedPrediction validate_ranking(const std::vector<std::string>& items, const CandidateSet& candidates) {
  std::unordered_map<std::string, std::string> by_label;
  for (const auto& candidate : candidates.candidates) {
    by_label.try_emplace(util::fold_label(candidate.label), candidate.skill_id);
  }
  RankedPrediction prediction;
  std::unordered_set<std::string> seen;
  for (const auto& item : items) {
    if (prediction.ranked.size() == kMaxRanked) break;
    if (is_no_label(item)) {
      prediction.terminated_by_no_label = true;
      break;
    }
    const auto it = by_label.find(util::fold_label(item));
    if (it == by_label.end()) {
      ++prediction.hallucinated_count;
      continue;
    }
    if (seen.insert(it->second).second) prediction.ranked.push_back(it->second);
  }
  return prediction;
}

void check_prediction(const RankedPrediction& prediction, const CandidateSet& candidates) {
  if (prediction.ranked.size() > kMaxRanked) throw std::logic_error("prediction longer than 10");
  if (prediction.hallucinated_count < 0) throw std::logic_error("negative hallucination count");
  std::unordered_set<std::string_view> allowed;
  for (const auto& candidate : candidates.candidates) allowed.insert(candidate.skill_id);
  std::unordered_set<std::string_view> seen;
  for (const auto& id : prediction.ranked) {
    if (!allowed.contains(id)) throw std::logic_error(fmt::format("'{}' is not a candidate", id));
    if (!seen.insert(id).second) throw std::logic_error(fmt::format("'{}' ranked twice", id));
  }
}

// ---------------------------------------------------------------------------
// Natural-language responses

namespace {

struct NumberedLine {
  int number;
  std::string_view body;
};

std::optional<NumberedLine> numbered_line(std::string_view line) {
  line = util::trim(line);
  // Markdown emphasis around the marker ("**1.** label").
  while (line.starts_with("**") || line.starts_with("__")) line = util::trim(line.substr(2));
  std::size_t i = 0;
  const bool paren = !line.empty() && line.front() == '(';
  if (paren) ++i;
  const std::size_t start = i;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == start || i - start > 3 || i == line.size()) return std::nullopt;
  const char terminator = line[i];
  if (paren ? terminator != ')' : (terminator != '.' && terminator != ')' && terminator != ':')) return std::nullopt;
  const int number = std::stoi(std::string(line.substr(start, i - start)));
  ++i;
  if (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) && line[i] != '*') return std::nullopt;
  return NumberedLine{number, util::trim(line.substr(i))};
}

std::string strip_markup(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '`') continue;
    if ((text[i] == '*' || text[i] == '_') && i + 1 < text.size() && text[i + 1] == text[i]) {
      ++i;
      continue;
    }
    out += text[i];
  }
  return out;
}

std::string_view strip_wrapping_quotes(std::string_view text) {
  text = util::trim(text);
  constexpr std::pair<std::string_view, std::string_view> kPairs[] = {
      {"\"", "\""}, {"'", "'"}, {"\xE2\x80\x9C", "\xE2\x80\x9D"}, {"\xE2\x80\x98", "\xE2\x80\x99"}};
  for (const auto& [open, close] : kPairs) {
    if (text.size() >= open.size() + close.size() && text.starts_with(open)) {
      const std::size_t end = text.find(close, open.size());
      if (end != std::string_view::npos) return util::trim(text.substr(open.size(), end - open.size()));
    }
  }
  return text;
}

std::string_view strip_trailing_punctuation(std::string_view text) {
  while (!text.empty() && std::string_view(".,;:!").find(text.back()) != std::string_view::npos) {
    text.remove_suffix(1);
  }
  return util::trim(text);
}

// Resolves one list item to a candidate label, NO_LABEL, or (when nothing
// matches) the cleaned item text, which validation then counts as a
// hallucination. Trailing commentary is removed by trying the item cut at
// each separator, longest prefix first.
std::string resolve_item(std::string_view body, const std::unordered_set<std::string>& folded_labels) {
  const std::string cleaned = strip_markup(body);
  const std::string_view text = strip_wrapping_quotes(cleaned);
  const auto matches = [&](std::string_view candidate) {
    candidate = strip_trailing_punctuation(strip_wrapping_quotes(candidate));
    return !candidate.empty() && (folded_labels.contains(util::fold_label(candidate)) || is_no_label(candidate));
  };
  if (matches(text)) return std::string(strip_trailing_punctuation(strip_wrapping_quotes(text)));

  constexpr std::string_view kSeparators[] = {" - ", " \xE2\x80\x93 ", " \xE2\x80\x94 ", ":", " (", ",", ". ", " because "};
  std::vector<std::size_t> cuts;
  for (const auto separator : kSeparators) {
    for (std::size_t pos = text.find(separator); pos != std::string_view::npos; pos = text.find(separator, pos + 1)) {
      cuts.push_back(pos);
    }
  }
  std::sort(cuts.begin(), cuts.end(), std::greater<>());
  for (const std::size_t cut : cuts) {
    if (matches(text.substr(0, cut))) return std::string(strip_trailing_punctuation(strip_wrapping_quotes(text.substr(0, cut))));
  }
  return std::string(strip_trailing_punctuation(text));
}

std::unordered_set<std::string> folded_labels(const CandidateSet& candidates) {
  std::unordered_set<std::string> out;
  for (const auto& candidate : candidates.candidates) out.insert(util::fold_label(candidate.label));
  return out;
}

}  // namespace

RankedPrediction parse_natural_response(std::string_view text, const CandidateSet& candidates) {
  std::vector<std::string_view> bodies;
  int previous = 0;
  for (const auto line : util::split_lines(text)) {
    const auto numbered = numbered_line(line);
    if (!numbered) continue;
    if (!bodies.empty() && numbered->number <= previous) break;
    previous = numbered->number;
    bodies.push_back(numbered->body);
  }
  if (bodies.empty()) {
    for (const auto line : util::split_lines(text)) {
      if (is_no_label(strip_trailing_punctuation(strip_markup(line)))) {
        RankedPrediction prediction;
        prediction.terminated_by_no_label = true;
        prediction.justification = std::string(text);
        return prediction;
      }
    }
    throw ParseFailure(ParseFailureKind::kNoList, "response contains no numbered list", std::string(text));
  }
  const auto labels = folded_labels(candidates);
  std::vector<std::string> items;
  items.reserve(bodies.size());
  for (const auto body : bodies) items.push_back(resolve_item(body, labels));
  RankedPrediction prediction = validate_ranking(items, candidates);
  prediction.justification = std::string(text);
  check_prediction(prediction, candidates);
  return prediction;
}

RankedPrediction parse_code_response(std::string_view text, const CandidateSet& candidates) {
  std::vector<std::string> items = extract_rank_skills_literals(text);
  for (auto& item : items) item = std::string(util::trim(item));
  RankedPrediction prediction = validate_ranking(items, candidates);
  prediction.justification = std::string(text);
  check_prediction(prediction, candidates);
  return prediction;
}

// ---------------------------------------------------------------------------

namespace {

std::string corrective_message(PromptVariant variant, const ParseFailure& failure) {
  if (variant == PromptVariant::kCode) {
    return fmt::format(
        "Your answer could not be used ({}). Reply with a single python codeblock defining a function named "
        "`rank_skills` that returns a list of the chosen labels as string literals.",
        failure.what());
  }
  return fmt::format(
      "Your answer could not be used ({}). Reply with a numbered list of up to 10 labels taken from the potential "
      "skills list, one per line, or NO_LABEL.",
      failure.what());
}

}  // namespace

RerankOutcome rerank(std::string_view span, const CandidateSet& candidates, ChatProvider& provider,
                     PromptVariant variant, const RerankOptions& options) {
  RerankOutcome outcome;
  outcome.transcript = build_rerank_prompt(span, candidates, variant);
  ChatRequest request{options.model_id, outcome.transcript.messages, options.temperature, options.max_tokens};
  for (int attempt = 0;; ++attempt) {
    std::string response = provider.complete_chat(request);
    outcome.raw_responses.push_back(response);
    try {
      outcome.prediction = variant == PromptVariant::kCode ? parse_code_response(response, candidates)
                                                           : parse_natural_response(response, candidates);
      return outcome;
    } catch (const ParseFailure& failure) {
      if (attempt >= options.retries) {
        spdlog::warn("rerank: giving up after {} attempts: {}", attempt + 1, failure.what());
        outcome.prediction = RankedPrediction{};
        outcome.prediction.parse_failed = true;
        outcome.prediction.justification = response;
        return outcome;
      }
      if (!util::trim(response).empty()) request.messages.push_back({Role::kAssistant, response});
      request.messages.push_back({Role::kUser, corrective_message(variant, failure)});
    }
  }
}

nlohmann::json to_json(const RankedPrediction& prediction) {
  return {{"ranked", prediction.ranked},
          {"justification", prediction.justification},
          {"hallucinated_count", prediction.hallucinated_count},
          {"terminated_by_no_label", prediction.terminated_by_no_label},
          {"parse_failed", prediction.parse_failed}};
}

nlohmann::json transcript_log_entry(std::string_view span, const CandidateSet& candidates,
                                    const RerankOutcome& outcome) {
  nlohmann::json candidate_list = nlohmann::json::array();
  for (const auto& candidate : candidates.candidates) {
    candidate_list.push_back({{"skill_id", candidate.skill_id},
                              {"label", candidate.label},
                              {"source", to_string(candidate.source)},
                              {"score", candidate.score}});
  }
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& message : outcome.transcript.messages) {
    messages.push_back({{"role", to_string(message.role)}, {"content", message.content}});
  }
  return {{"span", span},
          {"candidates", std::move(candidate_list)},
          {"messages", std::move(messages)},
          {"raw_response", outcome.raw_responses.empty() ? std::string() : outcome.raw_responses.back()},
          {"raw_responses", outcome.raw_responses},
          {"parsed_prediction", to_json(outcome.prediction)}};
}

}  // namespace skillmatch
