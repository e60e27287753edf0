#include <algorithm>
#include <cctype>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "skillmatch/providers.hpp"

namespace skillmatch {

using nlohmann::json;

MockEmbedder::MockEmbedder(std::size_t dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
  if (dimension_ == 0) throw ConfigError("mock embedder dimension must be positive");
}

std::string MockEmbedder::model_id() const { return fmt::format("mock-embedder-d{}-s{}", dimension_, seed_); }

std::vector<std::string> MockEmbedder::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      current += static_cast<char>(std::tolower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<double> MockEmbedder::token_direction(std::string_view token) const {
  std::uint64_t state = seed_ ^ util::fnv1a64(token);
  std::vector<double> direction(dimension_);
  for (double& v : direction) {
    const std::uint64_t bits = util::splitmix64(state) >> 11;
    v = static_cast<double>(bits) * 0x1.0p-53 * 2.0 - 1.0;
  }
  return direction;
}

EmbeddingVector MockEmbedder::embed_text(std::string_view text, EmbedKind) {
  ++calls_;
  const std::string_view trimmed = util::trim(text);
  if (trimmed.empty()) throw ProviderError("cannot embed empty text");
  auto tokens = tokenize(trimmed);
  if (tokens.empty()) tokens.emplace_back(trimmed);
  std::vector<double> sum(dimension_, 0.0);
  for (const auto& token : tokens) {
    const auto direction = token_direction(token);
    for (std::size_t i = 0; i < dimension_; ++i) sum[i] += direction[i];
  }
  return EmbeddingVector::normalized(std::move(sum));
}

// ---------------------------------------------------------------------------

FixtureChatProvider::FixtureChatProvider(std::vector<Rule> rules, std::shared_ptr<ChatProvider> fallback)
    : rules_(std::move(rules)), served_(rules_.size(), 0), fallback_(std::move(fallback)) {
  for (const auto& rule : rules_) {
    if (!rule.content_filter && rule.responses.empty()) {
      throw ConfigError(fmt::format("fixture rule '{}' has no responses", rule.contains));
    }
  }
}

std::vector<FixtureChatProvider::Rule> FixtureChatProvider::load_rules(const std::string& path) {
  json doc;
  try {
    doc = json::parse(util::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  }
  std::vector<Rule> rules;
  try {
    for (const auto& entry : doc.at("rules")) {
      Rule rule;
      rule.contains = entry.at("contains").get<std::string>();
      rule.content_filter = entry.value("content_filter", false);
      if (const auto it = entry.find("responses"); it != entry.end()) {
        rule.responses = it->get<std::vector<std::string>>();
      } else if (const auto single = entry.find("response"); single != entry.end()) {
        rule.responses.push_back(single->get<std::string>());
      }
      rules.push_back(std::move(rule));
    }
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: bad fixture file: {}", path, e.what()));
  }
  return rules;
}

std::string FixtureChatProvider::complete_chat(const ChatRequest& request) {
  request.validate();
  ++calls_;
  {
    std::lock_guard guard(mutex_);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      const Rule& rule = rules_[i];
      const bool matches = std::any_of(request.messages.begin(), request.messages.end(), [&](const auto& m) {
        return m.content.find(rule.contains) != std::string::npos;
      });
      if (!matches) continue;
      if (rule.content_filter) {
        throw ContentFilteredError(fmt::format("fixture '{}' is flagged content_filter", rule.contains));
      }
      const std::size_t slot = std::min(served_[i]++, rule.responses.size() - 1);
      return rule.responses[slot];
    }
  }
  if (fallback_) return fallback_->complete_chat(request);
  throw ProviderError("no fixture matches the chat request");
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kExplicitTemplates[] = {
    "Proficiency in {} is essential for this role.",
    "Candidates must demonstrate solid experience with {}.",
    "You will apply {} in your daily work.",
    "Strong {} skills are required.",
    "Experience in {} is a plus.",
    "The ideal candidate has a proven track record in {}.",
    "Knowledge of {} is highly desirable.",
    "You will be responsible for {} across the team.",
    "We expect working familiarity with {}.",
    "Hands-on {} experience is needed from day one.",
    "A background in {} will help you succeed here.",
    "Demonstrable ability in {}.",
};

constexpr std::string_view kImplicitTemplates[] = {
    "You will regularly draw on {} when working with colleagues and clients.",
    "Day to day, the work involves {} in a busy environment.",
    "We are looking for someone comfortable with {}. You will join a friendly team.",
    "Our clients rely on people who can handle {} with care.",
    "The role centres on {} and on delivering results on time.",
    "You should feel at ease with {} under pressure.",
    "Previous exposure to {} would be appreciated.",
    "This position calls for {}, attention to detail and good judgement.",
};

std::vector<std::string_view> nonempty_lines(std::string_view text) {
  std::vector<std::string_view> out;
  for (auto line : util::split_lines(text)) {
    if (!util::trim(line).empty()) out.push_back(util::trim(line));
  }
  return out;
}

std::string python_string(std::string_view text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '\\' || c == '"') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

OfflineChatModel::OfflineChatModel(std::uint64_t seed) : seed_(seed) {}

std::string OfflineChatModel::complete_chat(const ChatRequest& request) {
  request.validate();
  ++calls_;
  for (const auto& message : request.messages) {
    if (message.role != Role::kUser) continue;
    const std::string_view content = message.content;
    if (content.find("Potential skills:\n") != std::string_view::npos &&
        content.find("\nExtract: ") != std::string_view::npos) {
      const bool as_code = std::any_of(request.messages.begin(), request.messages.end(), [](const auto& m) {
        return m.content.find("rank_skills") != std::string::npos;
      });
      return rank_candidates(content, as_code);
    }
    if (content.find("\nSkill: ") != std::string_view::npos || util::starts_with_ci(content, "Skill: ")) {
      return generate_examples(content);
    }
  }
  throw MalformedReplyError("offline chat model does not recognize the prompt");
}

std::string OfflineChatModel::generate_examples(std::string_view prompt) const {
  std::string skill;
  std::vector<std::string> alternatives;
  int count = 40;
  constexpr std::string_view kAltPrefix = "Extra Information/Alternative Names (you may discard this information if irrelevant): ";
  for (auto line : util::split_lines(prompt)) {
    if (line.starts_with("Skill: ")) skill = std::string(util::trim(line.substr(7)));
    if (line.starts_with(kAltPrefix)) {
      std::string_view rest = line.substr(kAltPrefix.size());
      while (!rest.empty()) {
        const auto comma = rest.find(", ");
        const auto item = util::trim(rest.substr(0, comma));
        if (!item.empty()) alternatives.emplace_back(item);
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 2);
      }
    }
    if (const auto pos = line.find("asked to provide "); pos != std::string_view::npos) {
      const auto words = line.substr(pos + 17);
      for (int n = 1; n <= 200; ++n) {
        if (words.starts_with(util::number_to_words(n) + " examples")) count = n;
      }
    }
  }
  if (skill.empty()) throw MalformedReplyError("generation prompt has no skill line");

  std::mt19937_64 rng(seed_ ^ util::fnv1a64(skill));
  std::string out = fmt::format("Here are {} examples for \"{}\":\n\n", count, skill);
  constexpr std::size_t kExplicitCount = std::size(kExplicitTemplates);
  constexpr std::size_t kImplicitCount = std::size(kImplicitTemplates);
  for (int i = 0; i < count; ++i) {
    std::string sentence;
    if (i % 4 == 3) {
      const std::string& topic =
          alternatives.empty() ? skill : alternatives[util::uniform_below(rng, alternatives.size())];
      sentence = fmt::format(fmt::runtime(kImplicitTemplates[util::uniform_below(rng, kImplicitCount)]), topic);
    } else {
      sentence = fmt::format(fmt::runtime(kExplicitTemplates[util::uniform_below(rng, kExplicitCount)]), skill);
    }
    out += fmt::format("{}. {}\n", i + 1, sentence);
  }
  return out;
}

std::string OfflineChatModel::rank_candidates(std::string_view prompt, bool as_code) const {
  const auto list_start = prompt.find("Potential skills:\n") + 18;
  const auto extract_pos = prompt.find("\nExtract: ", list_start);
  const auto candidates = nonempty_lines(prompt.substr(list_start, extract_pos - list_start));
  std::string_view extract = prompt.substr(extract_pos + 10);
  extract = extract.substr(0, extract.find("\n\n"));

  const auto extract_tokens = MockEmbedder::tokenize(extract);
  const std::set<std::string> extract_set(extract_tokens.begin(), extract_tokens.end());
  std::vector<double> scores(candidates.size(), 0.0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto tokens = MockEmbedder::tokenize(candidates[i]);
    if (tokens.empty()) continue;
    std::size_t shared = 0;
    for (const auto& token : tokens) shared += extract_set.count(token);
    scores[i] = static_cast<double>(shared) / static_cast<double>(tokens.size());
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  order.resize(std::min<std::size_t>(order.size(), 10));

  if (order.empty()) return as_code ? "```python\ndef rank_skills():\n    return [\"NO_LABEL\"]\n```\n" : "NO_LABEL";
  if (as_code) {
    std::string out = "```python\ndef rank_skills():\n    # Ranked by overlap between the extract and each label.\n    return [\n";
    for (auto i : order) out += fmt::format("        {},  # overlap {:.2f}\n", python_string(candidates[i]), scores[i]);
    out += "    ]\n```\n";
    return out;
  }
  std::string out = "Here is my ranking:\n\n";
  for (std::size_t r = 0; r < order.size(); ++r) {
    out += fmt::format("{}. {}\n", r + 1, candidates[order[r]]);
  }
  out += "\nExplanation: labels sharing more words with the extract are ranked higher.\n";
  return out;
}

}  // namespace skillmatch
