#include "skillmatch/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "prompt_assets.hpp"
#include "template.hpp"

namespace skillmatch {

using nlohmann::json;

void DataGenConfig::validate() const {
  if (examples_per_skill <= 0) throw ConfigError("examples_per_skill must be positive");
  if (min_acceptable < 0 || min_acceptable > examples_per_skill) {
    throw ConfigError("min_acceptable must lie in [0, examples_per_skill]");
  }
  for (const auto& [category, quota] : implicit_quota) {
    if (quota < 0 || quota > examples_per_skill) {
      throw ConfigError(fmt::format("implicit quota for {} must lie in [0, examples_per_skill]", to_string(category)));
    }
  }
  if (retries < 0) throw ConfigError("retries must be >= 0");
  if (!(max_transport_failure_fraction >= 0.0 && max_transport_failure_fraction <= 1.0)) {
    throw ConfigError("max_transport_failure_fraction must lie in [0, 1]");
  }
}

std::string_view to_string(SkipReason reason) {
  switch (reason) {
    case SkipReason::kContentFiltered: return "content_filtered";
    case SkipReason::kTransportError: return "transport_error";
    case SkipReason::kParseFailure: return "parse_failure";
    case SkipReason::kMissing: return "missing";
  }
  return "missing";
}

std::string implicit_quota_phrase(SkillCategory category, const DataGenConfig& config) {
  const auto it = config.implicit_quota.find(category);
  const int quota = it == config.implicit_quota.end() ? 0 : it->second;
  std::string words = util::number_to_words(quota);
  std::transform(words.begin(), words.end(), words.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (category != SkillCategory::kGeneral) return words;
  const long percent = std::lround(100.0 * quota / config.examples_per_skill);
  return fmt::format("{}% ({})", percent, words);
}

ChatRequest build_datagen_prompt(const Skill& skill, const DataGenConfig& config) {
  std::string alternatives;
  for (const auto& alt : skill.alt_labels) {
    if (!alternatives.empty()) alternatives += ", ";
    alternatives += alt;
  }
  const std::map<std::string, std::string> slots = {
      {"examples_count", util::number_to_words(config.examples_per_skill)},
      {"implicit_quota", implicit_quota_phrase(skill.category, config)},
      {"alternative_names", alternatives},
      {"target", skill.preferred_label},
  };
  ChatRequest request;
  request.model_id = config.model_id;
  request.temperature = config.temperature;
  request.max_tokens = config.max_tokens;
  for (auto message : detail::split_transcript(assets::datagen_template())) {
    message.content = detail::render_slots(message.content, slots);
    request.messages.push_back(std::move(message));
  }
  return request;
}

namespace {

// Returns the text after a list marker ("12.", "3)", "(4)", "-", "*", "•"),
// or nullopt when the line does not start a list item.
std::optional<std::string_view> strip_item_marker(std::string_view line) {
  line = util::trim(line);
  if (line.empty()) return std::nullopt;
  if (line.starts_with("- ") || line.starts_with("* ") || line == "-" || line == "*") {
    return util::trim(line.substr(1));
  }
  if (line.starts_with("\xE2\x80\xA2")) return util::trim(line.substr(3));  // bullet
  std::size_t i = 0;
  const bool paren = line.front() == '(';
  if (paren) ++i;
  const std::size_t digits_start = i;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == digits_start || i - digits_start > 4 || i == line.size()) return std::nullopt;
  const char terminator = line[i];
  if (paren ? terminator != ')' : (terminator != '.' && terminator != ')' && terminator != ':')) {
    return std::nullopt;
  }
  ++i;
  if (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) return std::nullopt;
  return util::trim(line.substr(i));
}

std::string strip_quotes(std::string_view text) {
  text = util::trim(text);
  constexpr std::pair<std::string_view, std::string_view> kPairs[] = {
      {"\"", "\""}, {"\xE2\x80\x9C", "\xE2\x80\x9D"}, {"'", "'"}, {"\xE2\x80\x98", "\xE2\x80\x99"}};
  for (const auto& [open, close] : kPairs) {
    if (text.size() >= open.size() + close.size() && text.starts_with(open) && text.ends_with(close)) {
      return std::string(util::trim(text.substr(open.size(), text.size() - open.size() - close.size())));
    }
  }
  return std::string(text);
}

}  // namespace

std::vector<std::string> parse_generation(std::string_view response) {
  std::vector<std::string> items;
  std::optional<std::string> current;
  const auto close = [&] {
    if (!current) return;
    std::string text = strip_quotes(*current);
    if (!text.empty()) items.push_back(std::move(text));
    current.reset();
  };
  for (std::string_view line : util::split_lines(response)) {
    const std::string_view trimmed = util::trim(line);
    if (trimmed.empty()) {
      close();
      continue;
    }
    if (const auto body = strip_item_marker(trimmed)) {
      close();
      current = std::string(*body);
    } else if (current) {
      if (!current->empty()) *current += ' ';
      *current += trimmed;
    }
  }
  close();
  if (items.empty()) {
    throw ParseFailure(ParseFailureKind::kNoItems, "generation response contains no list items",
                       std::string(response));
  }
  return items;
}

namespace {

struct SkillOutcome {
  std::vector<std::string> texts;
  std::optional<SkippedSkill> skipped;
};

SkillOutcome generate_for_skill(const Skill& skill, ChatProvider& provider, const DataGenConfig& config) {
  ChatRequest request = build_datagen_prompt(skill, config);
  SkillOutcome outcome;
  std::string last_problem;
  for (int attempt = 0; attempt <= config.retries; ++attempt) {
    std::string response;
    try {
      response = provider.complete_chat(request);
    } catch (const ContentFilteredError& e) {
      return {{}, SkippedSkill{skill.id, SkipReason::kContentFiltered, e.what()}};
    } catch (const TransportError& e) {
      if (!outcome.texts.empty()) break;
      return {{}, SkippedSkill{skill.id, SkipReason::kTransportError, e.what()}};
    } catch (const ProviderError& e) {
      last_problem = e.what();
      break;
    }
    std::string feedback;
    try {
      auto items = parse_generation(response);
      if (items.size() > outcome.texts.size()) outcome.texts = std::move(items);
      if (static_cast<int>(outcome.texts.size()) >= config.min_acceptable) break;
      feedback = fmt::format(
          "Your answer contained only {} usable examples. Please provide the full list of {} examples as a "
          "numbered list, one example per item.",
          outcome.texts.size(), util::number_to_words(config.examples_per_skill));
    } catch (const ParseFailure& e) {
      last_problem = e.what();
      feedback = fmt::format("I could not find a numbered list in your answer. Please provide {} examples as a "
                             "numbered list, one example per item.",
                             util::number_to_words(config.examples_per_skill));
    }
    if (!util::trim(response).empty()) request.messages.push_back({Role::kAssistant, response});
    request.messages.push_back({Role::kUser, std::move(feedback)});
  }
  if (outcome.texts.empty()) {
    outcome.skipped = SkippedSkill{skill.id, SkipReason::kParseFailure, last_problem};
  } else if (outcome.texts.size() > static_cast<std::size_t>(config.examples_per_skill)) {
    outcome.texts.resize(static_cast<std::size_t>(config.examples_per_skill));
  }
  return outcome;
}

void finish_report(GenerationReport& report) {
  if (report.attempted == 0) return;
  std::size_t full = 0;
  std::size_t partial = 0;
  for (const auto& [id, count] : report.counts) {
    if (count >= report.examples_per_skill) {
      ++full;
    } else {
      ++partial;
    }
    if (count < report.min_acceptable) report.skills_below_min.push_back(id);
  }
  const double attempted = static_cast<double>(report.attempted);
  report.skills_full = static_cast<double>(full) / attempted;
  report.skills_partial = static_cast<double>(partial) / attempted;
  report.skipped_fraction = static_cast<double>(report.skipped.size()) / attempted;
}

}  // namespace

GeneratedDataset generate_dataset(const Taxonomy& taxonomy, ChatProvider& provider, const DataGenConfig& config,
                                  std::span<const SyntheticExample> existing) {
  config.validate();
  std::map<std::string, std::vector<const SyntheticExample*>> kept;
  for (const auto& example : existing) {
    if (!taxonomy.find(example.skill_id)) {
      throw FormatError(fmt::format("existing corpus references unknown skill '{}'", example.skill_id));
    }
    kept[example.skill_id].push_back(&example);
  }

  const auto skills = taxonomy.skills();
  std::vector<SkillOutcome> outcomes(skills.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < skills.size(); ++i) {
    if (!kept.contains(skills[i].id)) todo.push_back(i);
  }
  spdlog::info("generating examples for {} skills ({} kept from existing corpus)", todo.size(),
               skills.size() - todo.size());
  util::parallel_for(todo.size(), config.jobs, [&](std::size_t t) {
    const std::size_t i = todo[t];
    outcomes[i] = generate_for_skill(skills[i], provider, config);
  });

  GeneratedDataset result;
  GenerationReport& report = result.report;
  report.attempted = skills.size();
  report.examples_per_skill = config.examples_per_skill;
  report.min_acceptable = config.min_acceptable;
  std::size_t transport_failures = 0;
  for (std::size_t i = 0; i < skills.size(); ++i) {
    const Skill& skill = skills[i];
    if (const auto it = kept.find(skill.id); it != kept.end()) {
      for (const auto* example : it->second) result.examples.push_back(*example);
      report.counts[skill.id] = static_cast<int>(it->second.size());
      continue;
    }
    SkillOutcome& outcome = outcomes[i];
    if (outcome.skipped) {
      if (outcome.skipped->reason == SkipReason::kTransportError) ++transport_failures;
      spdlog::warn("skipping '{}': {}", skill.preferred_label, to_string(outcome.skipped->reason));
      report.skipped.push_back(std::move(*outcome.skipped));
      continue;
    }
    for (std::size_t k = 0; k < outcome.texts.size(); ++k) {
      result.examples.push_back({skill.id, std::move(outcome.texts[k]), static_cast<int>(k)});
    }
    report.counts[skill.id] = static_cast<int>(outcome.texts.size());
  }
  finish_report(report);
  const double failure_fraction = static_cast<double>(transport_failures) / static_cast<double>(skills.size());
  if (failure_fraction > config.max_transport_failure_fraction) {
    throw ProviderError(fmt::format("{} of {} skills failed with transport errors", transport_failures,
                                    skills.size()));
  }
  return result;
}

GenerationReport validate_dataset(std::span<const SyntheticExample> dataset, const Taxonomy& taxonomy,
                                  const DataGenConfig& config) {
  config.validate();
  std::map<std::string, int> counts;
  for (const auto& example : dataset) {
    if (!taxonomy.find(example.skill_id)) {
      throw FormatError(fmt::format("corpus references unknown skill '{}'", example.skill_id));
    }
    if (util::trim(example.text).empty()) {
      throw FormatError(fmt::format("empty example text for skill '{}'", example.skill_id));
    }
    ++counts[example.skill_id];
  }
  GenerationReport report;
  report.attempted = taxonomy.size();
  report.examples_per_skill = config.examples_per_skill;
  report.min_acceptable = config.min_acceptable;
  for (const Skill& skill : taxonomy.skills()) {
    if (const auto it = counts.find(skill.id); it != counts.end()) {
      report.counts.emplace(skill.id, it->second);
    } else {
      report.skipped.push_back({skill.id, SkipReason::kMissing, "no examples in corpus"});
    }
  }
  finish_report(report);
  return report;
}

std::string example_key(const SyntheticExample& example) {
  return fmt::format("{}#{}", example.skill_id, example.ordinal);
}

void write_corpus(const std::string& path, std::span<const SyntheticExample> examples) {
  std::string out;
  for (const auto& example : examples) {
    const json line = {{"skill_id", example.skill_id}, {"text", example.text}, {"ordinal", example.ordinal}};
    out += line.dump(-1, ' ', false, json::error_handler_t::replace);
    out += '\n';
  }
  util::write_file_atomic(path, out);
}

std::vector<SyntheticExample> read_corpus(const std::string& path) {
  const std::string text = util::read_file(path);
  std::vector<SyntheticExample> examples;
  std::size_t line_no = 0;
  for (std::string_view line : util::split_lines(text)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    try {
      const json obj = json::parse(line);
      SyntheticExample example;
      example.skill_id = obj.at("skill_id").get<std::string>();
      example.text = obj.at("text").get<std::string>();
      example.ordinal = obj.at("ordinal").get<int>();
      if (example.skill_id.empty() || util::trim(example.text).empty()) {
        throw FormatError("empty skill_id or text");
      }
      examples.push_back(std::move(example));
    } catch (const std::exception& e) {
      throw FormatError(fmt::format("{}: line {}: {}", path, line_no, e.what()));
    }
  }
  return examples;
}

json report_to_json(const GenerationReport& report) {
  json skipped = json::array();
  for (const auto& s : report.skipped) {
    skipped.push_back({{"skill_id", s.skill_id}, {"reason", to_string(s.reason)}, {"detail", s.detail}});
  }
  return {{"attempted", report.attempted},
          {"examples_per_skill", report.examples_per_skill},
          {"min_acceptable", report.min_acceptable},
          {"skills_full", report.skills_full},
          {"skills_partial", report.skills_partial},
          {"skipped_fraction", report.skipped_fraction},
          {"skills_below_min", report.skills_below_min},
          {"skipped", std::move(skipped)},
          {"counts", report.counts}};
}

std::string render_generation_summary(const GenerationReport& report) {
  std::ostringstream out;
  const auto pct = [](double f) { return fmt::format("{:6.2f}%", 100.0 * f); };
  out << fmt::format("{:<34}{:>10}\n", "skills attempted", report.attempted);
  out << fmt::format("{:<34}{:>10}\n", fmt::format("full ({} examples)", report.examples_per_skill),
                     pct(report.skills_full));
  out << fmt::format("{:<34}{:>10}\n", "partial", pct(report.skills_partial));
  out << fmt::format("{:<34}{:>10}\n", "skipped", pct(report.skipped_fraction));
  out << fmt::format("{:<34}{:>10}\n", fmt::format("below minimum ({})", report.min_acceptable),
                     report.skills_below_min.size());
  for (const auto& s : report.skipped) out << fmt::format("  skipped {} ({})\n", s.skill_id, to_string(s.reason));
  for (const auto& id : report.skills_below_min) {
    out << fmt::format("  below minimum {} ({} examples)\n", id, report.counts.at(id));
  }
  return out.str();
}

std::vector<SyntheticExample> sample_for_review(std::span<const SyntheticExample> corpus, std::size_t count,
                                                std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& example : corpus) {
    if (ids.empty() || ids.back() != example.skill_id) {
      if (std::find(ids.begin(), ids.end(), example.skill_id) == ids.end()) ids.push_back(example.skill_id);
    }
  }
  std::mt19937_64 rng(seed);
  count = std::min(count, ids.size());
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(ids[i], ids[i + util::uniform_below(rng, ids.size() - i)]);
  }
  const std::set<std::string> chosen(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(count));
  std::vector<SyntheticExample> sample;
  for (const auto& example : corpus) {
    if (chosen.contains(example.skill_id)) sample.push_back(example);
  }
  return sample;
}

}  // namespace skillmatch
