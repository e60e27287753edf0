#include "test_support.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace skillmatch::testing {

namespace fs = std::filesystem;

std::string data_path(const std::string& name) { return (fs::path(SKILLMATCH_TEST_DATA_DIR) / name).string(); }

std::string golden_path(const std::string& name) { return (fs::path(SKILLMATCH_TEST_GOLDEN_DIR) / name).string(); }

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string render_messages(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (const auto& message : messages) out += fmt::format("--- {} ---\n{}\n", to_string(message.role), message.content);
  return out;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device device;
  path_ = fs::temp_directory_path() / fmt::format("skillmatch-test-{}-{}", device(), counter++);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

namespace {

constexpr const char* kQualifiers[] = {"agile",     "cloud",    "data",     "financial", "legal",   "marine",
                                       "medical",   "network",  "retail",   "security",  "social",  "solar",
                                       "structural", "textile", "urban",    "vocal",     "welding", "botanical",
                                       "chemical",  "dental"};
constexpr const char* kNouns[] = {"analysis",   "auditing",  "budgeting", "coaching",  "design",
                                  "engineering", "forecasting", "inspection", "logistics", "maintenance",
                                  "modelling",  "negotiation", "planning", "reporting", "research",
                                  "scheduling", "testing",   "training",  "translation", "writing"};
constexpr const char* kFiller[] = {"experience", "with",   "strong",  "ability", "to",      "in",
                                   "proven",     "skills", "the",     "team",    "required", "our"};

}  // namespace

Taxonomy make_toy_taxonomy(std::size_t count) {
  constexpr std::size_t kQ = std::size(kQualifiers);
  constexpr std::size_t kN = std::size(kNouns);
  if (count > kQ * kN) throw std::invalid_argument("toy taxonomy too large");
  std::vector<Skill> skills;
  for (std::size_t i = 0; i < count; ++i) {
    // Walk the grid diagonally so neighbouring skills share few words.
    const std::size_t q = i % kQ;
    const std::size_t n = (i / kQ + i * 7) % kN;
    Skill skill;
    skill.id = fmt::format("http://example.org/skill/{:04}", i);
    skill.preferred_label = fmt::format("{} {}", kQualifiers[q], kNouns[n]);
    skill.alt_labels = {fmt::format("{} {} skills", kNouns[n], kQualifiers[q])};
    skill.description = fmt::format("Toy skill number {}.", i);
    skill.category = i % 5 == 0 ? SkillCategory::kTech : i % 7 == 0 ? SkillCategory::kLanguage : SkillCategory::kGeneral;
    skills.push_back(std::move(skill));
  }
  return Taxonomy(std::move(skills));
}

std::vector<EvalExample> make_toy_eval(const Taxonomy& taxonomy, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<EvalExample> out;
  const auto pick = [&](std::size_t bound) { return static_cast<std::size_t>(rng() % bound); };
  for (std::size_t i = 0; i < count; ++i) {
    EvalExample example;
    example.id = fmt::format("ex-{:03}", i);
    example.subset = i % 2 == 0 ? Subset::kHouse : Subset::kTech;
    const std::size_t golds = i % 3 == 0 ? 2 : 1;
    std::string span = fmt::format("{} {}", kFiller[pick(std::size(kFiller))], kFiller[pick(std::size(kFiller))]);
    for (std::size_t g = 0; g < golds; ++g) {
      const Skill& skill = taxonomy.skills()[pick(taxonomy.size())];
      example.gold.insert(skill.id);
      span += " " + skill.preferred_label;
      if (g + 1 < golds) span += " and";
    }
    span += " " + std::string(kFiller[pick(std::size(kFiller))]);
    example.span = span;
    out.push_back(std::move(example));
  }
  return out;
}

std::vector<double> random_vector(std::size_t dimension, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(dimension);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<double> random_unit_vector(std::size_t dimension, std::mt19937_64& rng) {
  std::vector<double> v;
  double norm = 0.0;
  do {
    v = random_vector(dimension, rng);
    norm = 0.0;
    for (double x : v) norm += x * x;
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace skillmatch::testing
