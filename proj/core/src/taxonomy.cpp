#include "skillmatch/taxonomy.hpp"

#include "skillmatch/common.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace skillmatch {

std::string_view to_string(SkillCategory category) {
  switch (category) {
    case SkillCategory::kTech: return "tech";
    case SkillCategory::kLanguage: return "language";
    case SkillCategory::kGeneral: return "general";
  }
  return "general";
}

std::optional<SkillCategory> parse_skill_category(std::string_view text) {
  if (text == "tech") return SkillCategory::kTech;
  if (text == "language") return SkillCategory::kLanguage;
  if (text == "general") return SkillCategory::kGeneral;
  return std::nullopt;
}

std::optional<TaxonomyFormat> parse_taxonomy_format(std::string_view text) {
  if (text == "esco-csv" || text == "csv") return TaxonomyFormat::kEscoCsv;
  if (text == "jsonl") return TaxonomyFormat::kJsonl;
  return std::nullopt;
}

Taxonomy::Taxonomy(std::vector<Skill> skills) : skills_(std::move(skills)) {
  if (skills_.empty()) throw FormatError("no skills loaded");
  by_id_.reserve(skills_.size());
  by_label_.reserve(skills_.size());
  for (std::size_t i = 0; i < skills_.size(); ++i) {
    const Skill& skill = skills_[i];
    if (skill.id.empty()) throw FormatError(fmt::format("skill #{} has an empty id", i + 1));
    if (util::trim(skill.preferred_label).empty()) {
      throw FormatError(fmt::format("skill '{}' has an empty preferred label", skill.id));
    }
    if (!by_id_.emplace(skill.id, i).second) {
      throw FormatError(fmt::format("duplicate skill id '{}'", skill.id));
    }
    const auto [it, inserted] = by_label_.emplace(util::fold_label(skill.preferred_label), i);
    if (!inserted) {
      throw FormatError(fmt::format("preferred label '{}' of '{}' collides with '{}'",
                                    skill.preferred_label, skill.id, skills_[it->second].id));
    }
  }
}

const Skill* Taxonomy::find(std::string_view id) const {
  const auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &skills_[it->second];
}

const Skill& Taxonomy::at(std::string_view id) const {
  if (const Skill* skill = find(id)) return *skill;
  throw FormatError(fmt::format("unknown skill id '{}'", id));
}

const Skill* Taxonomy::find_by_label(std::string_view label) const {
  const auto it = by_label_.find(util::fold_label(label));
  return it == by_label_.end() ? nullptr : &skills_[it->second];
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  const auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  const auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row.front().empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started) throw FormatError(fmt::format("stray quote in CSV record {}", rows.size() + 1));
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (in_quotes) throw FormatError("unterminated quoted CSV field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

namespace {

std::vector<std::string> split_alt_labels(std::string_view field) {
  std::vector<std::string> labels;
  for (std::string_view line : util::split_lines(field)) {
    const std::string_view label = util::trim(line);
    if (!label.empty()) labels.emplace_back(label);
  }
  return labels;
}

std::vector<Skill> read_esco_csv(const std::string& path, const EscoColumns& columns) {
  const auto rows = parse_csv(util::read_file(path));
  if (rows.empty()) throw FormatError("no skills loaded");
  const auto& header = rows.front();
  const auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (util::trim(header[i]) == name) return i;
    }
    throw FormatError(fmt::format("{}: required column '{}' missing from header", path, name));
  };
  const std::size_t id_col = column(columns.id);
  const std::size_t label_col = column(columns.preferred_label);
  const std::size_t alt_col = column(columns.alt_labels);
  const std::size_t desc_col = column(columns.description);

  std::vector<Skill> skills;
  skills.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t record = r + 1;  // header is record 1
    const auto cell = [&](std::size_t col) -> std::string_view {
      return col < row.size() ? std::string_view(row[col]) : std::string_view();
    };
    Skill skill;
    skill.id = std::string(util::trim(cell(id_col)));
    if (skill.id.empty()) throw FormatError(fmt::format("{}: row {}: missing {}", path, record, columns.id));
    skill.preferred_label = std::string(util::trim(cell(label_col)));
    if (skill.preferred_label.empty()) {
      throw FormatError(fmt::format("{}: row {}: missing {} for '{}'", path, record,
                                    columns.preferred_label, skill.id));
    }
    skill.alt_labels = split_alt_labels(cell(alt_col));
    if (const auto desc = util::trim(cell(desc_col)); !desc.empty()) skill.description = std::string(desc);
    skills.push_back(std::move(skill));
  }
  return skills;
}

std::vector<Skill> read_jsonl(const std::string& path) {
  const std::string text = util::read_file(path);
  std::vector<Skill> skills;
  std::size_t line_no = 0;
  for (std::string_view line : util::split_lines(text)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(fmt::format("{}: line {}: {}", path, line_no, e.what()));
    }
    if (!obj.is_object()) throw FormatError(fmt::format("{}: line {}: expected an object", path, line_no));
    Skill skill;
    skill.id = obj.value("id", "");
    if (skill.id.empty()) throw FormatError(fmt::format("{}: line {}: missing id", path, line_no));
    skill.preferred_label = std::string(util::trim(obj.value("preferred_label", "")));
    if (skill.preferred_label.empty()) {
      throw FormatError(fmt::format("{}: line {}: missing preferred_label for '{}'", path, line_no, skill.id));
    }
    if (const auto it = obj.find("alt_labels"); it != obj.end() && it->is_array()) {
      for (const auto& alt : *it) {
        const std::string label(util::trim(alt.get<std::string>()));
        if (!label.empty()) skill.alt_labels.push_back(label);
      }
    }
    if (const auto it = obj.find("description"); it != obj.end() && it->is_string()) {
      if (!it->get<std::string>().empty()) skill.description = it->get<std::string>();
    }
    if (const auto it = obj.find("category"); it != obj.end() && it->is_string()) {
      const auto category = parse_skill_category(it->get<std::string>());
      if (!category) throw FormatError(fmt::format("{}: line {}: unknown category", path, line_no));
      skill.category = *category;
    }
    skills.push_back(std::move(skill));
  }
  return skills;
}

}  // namespace

Taxonomy load_taxonomy(const std::string& path, TaxonomyFormat format, const EscoColumns& columns) {
  std::vector<Skill> skills =
      format == TaxonomyFormat::kEscoCsv ? read_esco_csv(path, columns) : read_jsonl(path);
  Taxonomy taxonomy(std::move(skills));
  spdlog::info("loaded {} skills from {}", taxonomy.size(), path);
  return taxonomy;
}

CategoryTable load_category_table(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(util::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(fmt::format("{}: {}", path, e.what()));
  }
  if (!doc.is_object()) throw FormatError(fmt::format("{}: category table must be a JSON object", path));
  CategoryTable table;
  for (const auto& [uri, value] : doc.items()) {
    const auto category = value.is_string() ? parse_skill_category(value.get<std::string>()) : std::nullopt;
    if (!category) throw FormatError(fmt::format("{}: bad category for '{}'", path, uri));
    table.emplace(uri, *category);
  }
  return table;
}

SkillCategory categorize_skill(const Skill& skill, const CategoryTable& table) {
  const auto it = table.find(skill.id);
  return it == table.end() ? SkillCategory::kGeneral : it->second;
}

Taxonomy with_categories(const Taxonomy& taxonomy, const CategoryTable& table) {
  std::vector<Skill> skills(taxonomy.skills().begin(), taxonomy.skills().end());
  for (Skill& skill : skills) skill.category = categorize_skill(skill, table);
  return Taxonomy(std::move(skills));
}

const Skill* skill_by_label(const Taxonomy& taxonomy, std::string_view label) {
  return taxonomy.find_by_label(label);
}

}  // namespace skillmatch
