#include "skillmatch/eval.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace skillmatch {

std::string_view to_string(Subset subset) { return subset == Subset::kTech ? "tech" : "house"; }

std::optional<Subset> parse_subset(std::string_view text) {
  const std::string lower = util::ascii_lower(util::trim(text));
  if (lower == "house") return Subset::kHouse;
  if (lower == "tech") return Subset::kTech;
  return std::nullopt;
}

double rp_at_k(const std::vector<std::string>& ranked, const std::set<std::string>& gold, int k) {
  if (gold.empty()) throw std::invalid_argument("rp_at_k: empty gold set");
  if (k < 1) throw std::invalid_argument("rp_at_k: k must be >= 1");
  const std::size_t depth = std::min(ranked.size(), static_cast<std::size_t>(k));
  std::set<std::string_view> hits;
  for (std::size_t i = 0; i < depth; ++i) {
    if (gold.contains(ranked[i])) hits.insert(ranked[i]);
  }
  return static_cast<double>(hits.size()) /
         static_cast<double>(std::min(static_cast<std::size_t>(k), gold.size()));
}

double mrr_single(const std::vector<std::string>& ranked, const std::set<std::string>& gold) {
  if (gold.empty()) throw std::invalid_argument("mrr_single: empty gold set");
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (gold.contains(ranked[i])) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

EvalReport evaluate(const std::map<std::string, RankedPrediction>& predictions,
                    const std::vector<EvalExample>& dataset, RunMetadata metadata) {
  std::vector<std::string> missing;
  for (const auto& example : dataset) {
    if (!predictions.contains(example.id)) missing.push_back(example.id);
  }
  if (!missing.empty()) {
    throw Error(fmt::format("no prediction for {} example(s): {}", missing.size(), fmt::join(missing, ", ")));
  }

  // Sum in id order so the result does not depend on dataset ordering.
  std::vector<const EvalExample*> ordered;
  ordered.reserve(dataset.size());
  for (const auto& example : dataset) ordered.push_back(&example);
  std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

  EvalReport report;
  report.metadata = std::move(metadata);
  static const std::vector<std::string> kEmpty;
  for (const auto* example : ordered) {
    const RankedPrediction& prediction = predictions.at(example->id);
    const auto& ranked = prediction.parse_failed ? kEmpty : prediction.ranked;
    SubsetMetrics& metrics = report.subsets[example->subset];
    metrics.mrr += mrr_single(ranked, example->gold);
    for (const int k : kReportedK) metrics.rp[k] += rp_at_k(ranked, example->gold, k);
    ++metrics.count;
  }
  for (auto& [subset, metrics] : report.subsets) {
    const auto n = static_cast<double>(metrics.count);
    metrics.mrr /= n;
    for (auto& [k, value] : metrics.rp) value /= n;
  }
  return report;
}

std::vector<EvalExample> parse_eval_dataset(std::string_view text, const Taxonomy* taxonomy) {
  std::vector<EvalExample> examples;
  std::set<std::string> ids;
  std::size_t line_number = 0;
  for (const auto raw : util::split_lines(text)) {
    ++line_number;
    const auto line = util::trim(raw);
    if (line.empty()) continue;
    const auto fail = [&](std::string_view what) {
      return FormatError(fmt::format("eval dataset line {}: {}", line_number, what));
    };
    nlohmann::json json;
    try {
      json = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(fmt::format("malformed JSON ({})", e.what()));
    }
    if (!json.is_object()) throw fail("expected a JSON object");
    EvalExample example;
    if (!json.contains("span") || !json["span"].is_string()) throw fail("missing string field 'span'");
    example.span = json["span"].get<std::string>();
    if (util::trim(example.span).empty()) throw fail("empty span");
    if (!json.contains("subset") || !json["subset"].is_string()) throw fail("missing string field 'subset'");
    const auto subset = parse_subset(json["subset"].get<std::string>());
    if (!subset) throw fail(fmt::format("unknown subset '{}'", json["subset"].get<std::string>()));
    example.subset = *subset;
    if (!json.contains("gold") || !json["gold"].is_array()) throw fail("missing array field 'gold'");
    for (const auto& id : json["gold"]) {
      if (!id.is_string()) throw fail("gold entries must be strings");
      const auto value = id.get<std::string>();
      if (taxonomy && !taxonomy->find(value)) throw fail(fmt::format("unknown skill id '{}'", value));
      example.gold.insert(value);
    }
    if (example.gold.empty()) throw fail("empty gold set");
    example.id = json.contains("id") ? json["id"].get<std::string>() : fmt::format("line-{}", line_number);
    if (!ids.insert(example.id).second) throw fail(fmt::format("duplicate example id '{}'", example.id));
    examples.push_back(std::move(example));
  }
  return examples;
}

std::vector<EvalExample> load_eval_dataset(const std::string& path, const Taxonomy* taxonomy) {
  try {
    return parse_eval_dataset(util::read_file(path), taxonomy);
  } catch (const FormatError& e) {
    throw FormatError(fmt::format("{}: {}", path, e.what()));
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr Subset kColumnOrder[] = {Subset::kHouse, Subset::kTech};

std::string metric_cells(const EvalReport& report, Subset subset) {
  const auto it = report.subsets.find(subset);
  if (it == report.subsets.end()) return fmt::format("{:>7} {:>7} {:>7} {:>7}", "-", "-", "-", "-");
  const SubsetMetrics& m = it->second;
  const auto rp = [&](int k) {
    const auto found = m.rp.find(k);
    return found == m.rp.end() ? 0.0 : found->second * 100.0;
  };
  return fmt::format("{:>7.3f} {:>7.2f} {:>7.2f} {:>7.2f}", m.mrr, rp(1), rp(5), rp(10));
}

std::string row_label(const EvalReport& report) {
  if (!report.metadata.label.empty()) return report.metadata.label;
  if (report.metadata.sources.empty()) return "run";
  return fmt::format("{} / {}", report.metadata.sources,
                     report.metadata.variant.empty() ? "none" : report.metadata.variant);
}

}  // namespace

std::string render_report_grid(const std::vector<EvalReport>& reports) {
  std::size_t width = 6;
  for (const auto& report : reports) width = std::max(width, row_label(report).size());
  std::string out;
  const std::string group = fmt::format("{:>7} {:>7} {:>7} {:>7}", "MRR", "RP@1", "RP@5", "RP@10");
  out += fmt::format("{:<{}} | {:^31} | {:^31}\n", "", width, "House", "Tech");
  out += fmt::format("{:<{}} | {} | {}\n", "Method", width, group, group);
  out += std::string(width, '-') + "-+-" + std::string(31, '-') + "-+-" + std::string(31, '-') + "\n";
  for (const auto& report : reports) {
    out += fmt::format("{:<{}} | {} | {}\n", row_label(report), width, metric_cells(report, kColumnOrder[0]),
                       metric_cells(report, kColumnOrder[1]));
  }
  return out;
}

std::string render_report(const EvalReport& report) { return render_report_grid({report}); }

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json json = nlohmann::json::object();
  for (const auto& [subset, m] : report.subsets) {
    nlohmann::json entry{{"mrr", m.mrr}, {"n", m.count}};
    for (const auto& [k, value] : m.rp) entry[fmt::format("rp{}", k)] = value;
    json[std::string(to_string(subset))] = std::move(entry);
  }
  const RunMetadata& meta = report.metadata;
  json["metadata"] = {{"label", meta.label},
                      {"variant", meta.variant},
                      {"sources", meta.sources},
                      {"seed", meta.seed},
                      {"model_id", meta.model_id},
                      {"config_hash", meta.config_hash},
                      {"template_version", meta.template_version}};
  return json;
}

EvalReport report_from_json(const nlohmann::json& json) {
  EvalReport report;
  try {
    for (const auto subset : kColumnOrder) {
      const std::string key(to_string(subset));
      if (!json.contains(key)) continue;
      const auto& entry = json.at(key);
      SubsetMetrics m;
      m.mrr = entry.at("mrr").get<double>();
      m.count = entry.at("n").get<std::size_t>();
      for (const int k : kReportedK) {
        const std::string name = fmt::format("rp{}", k);
        if (entry.contains(name)) m.rp[k] = entry.at(name).get<double>();
      }
      report.subsets[subset] = std::move(m);
    }
    const auto& meta = json.at("metadata");
    report.metadata.label = meta.value("label", "");
    report.metadata.variant = meta.value("variant", "");
    report.metadata.sources = meta.value("sources", "");
    report.metadata.seed = meta.value("seed", std::uint64_t{0});
    report.metadata.model_id = meta.value("model_id", "");
    report.metadata.config_hash = meta.value("config_hash", "");
    report.metadata.template_version = meta.value("template_version", "");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("malformed report JSON: {}", e.what()));
  }
  return report;
}

}  // namespace skillmatch
