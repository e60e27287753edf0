#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace skillmatch {

// Drives the implicit-mention quota in the data generation prompt.
enum class SkillCategory { kTech, kLanguage, kGeneral };

std::string_view to_string(SkillCategory category);
std::optional<SkillCategory> parse_skill_category(std::string_view text);

struct Skill {
  std::string id;  // ESCO concept URI
  std::string preferred_label;
  std::vector<std::string> alt_labels;
  std::optional<std::string> description;
  SkillCategory category = SkillCategory::kGeneral;

  bool operator==(const Skill&) const = default;
};

enum class TaxonomyFormat { kEscoCsv, kJsonl };

std::optional<TaxonomyFormat> parse_taxonomy_format(std::string_view text);

// ESCO column names the CSV loader requires. Anything else in the file is
// ignored; a missing column is a hard error.
struct EscoColumns {
  std::string id = "conceptUri";
  std::string preferred_label = "preferredLabel";
  std::string alt_labels = "altLabels";
  std::string description = "description";
};

using CategoryTable = std::unordered_map<std::string, SkillCategory>;

// Immutable flat skill list with id and label lookups. Preferred labels are
// unique after trimming and ASCII case folding so that model output can be
// mapped back to exactly one skill.
class Taxonomy {
 public:
  explicit Taxonomy(std::vector<Skill> skills);

  std::span<const Skill> skills() const noexcept { return skills_; }
  std::size_t size() const noexcept { return skills_.size(); }

  const Skill* find(std::string_view id) const;
  const Skill& at(std::string_view id) const;
  const Skill* find_by_label(std::string_view label) const;

  bool operator==(const Taxonomy& other) const { return skills_ == other.skills_; }

 private:
  std::vector<Skill> skills_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::size_t> by_label_;
};

Taxonomy load_taxonomy(const std::string& path, TaxonomyFormat format,
                       const EscoColumns& columns = {});

// Reads the JSON sidecar {uri: "tech" | "language" | "general"}.
CategoryTable load_category_table(const std::string& path);

SkillCategory categorize_skill(const Skill& skill, const CategoryTable& table);

// Copy of `taxonomy` with every skill's category taken from `table`.
Taxonomy with_categories(const Taxonomy& taxonomy, const CategoryTable& table);

const Skill* skill_by_label(const Taxonomy& taxonomy, std::string_view label);

// Parses RFC 4180 CSV (quoted fields may span lines). Exposed for tests.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace skillmatch
