#include "skillmatch/pipeline.hpp"

#include <cstdlib>
#include <filesystem>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace skillmatch {

namespace fs = std::filesystem;

std::string_view to_string(CandidateSources sources) {
  switch (sources) {
    case CandidateSources::kClassifier: return "classifier";
    case CandidateSources::kSimilarity: return "similarity";
    case CandidateSources::kBoth: return "both";
  }
  return "both";
}

std::optional<CandidateSources> parse_candidate_sources(std::string_view text) {
  if (text == "classifier") return CandidateSources::kClassifier;
  if (text == "similarity") return CandidateSources::kSimilarity;
  if (text == "both") return CandidateSources::kBoth;
  return std::nullopt;
}

namespace {

// Reads an object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& json, std::string where) : json_(json), where_(std::move(where)) {
    if (!json_.is_object()) throw ConfigError(fmt::format("{}: expected an object", where_));
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!json_.contains(key)) return;
    try {
      out = json_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(fmt::format("{}: bad value for '{}'", where_, key));
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return json_.contains(key) ? &json_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : json_.items()) {
      if (!seen_.contains(key)) throw ConfigError(fmt::format("{}: unknown key '{}'", where_, key));
    }
  }

 private:
  const nlohmann::json& json_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string_view label_text_name(LabelText mode) {
  switch (mode) {
    case LabelText::kPreferredAndAlternatives:
      return "preferred+alt";
    case LabelText::kPreferredAndDescription:
      return "preferred+description";
    case LabelText::kPreferred:
      break;
  }
  return "preferred";
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& json) {
  RunConfig config;
  ObjectReader top(json, "config");
  top.read("taxonomy", config.taxonomy_path);
  std::string format = "esco-csv";
  top.read("taxonomy_format", format);
  const auto parsed_format = parse_taxonomy_format(format);
  if (!parsed_format) throw ConfigError(fmt::format("unknown taxonomy_format '{}'", format));
  config.taxonomy_format = *parsed_format;
  top.read("categories", config.categories_path);
  top.read("corpus", config.corpus_path);
  top.read("generation_report", config.generation_report_path);
  top.read("label_index", config.label_index_path);
  top.read("sentence_index", config.sentence_index_path);
  top.read("classifier_bank", config.bank_path);
  top.read("cache_dir", config.cache_dir);
  top.read("provider", config.provider);
  top.read("chat_endpoint", config.chat_endpoint);
  top.read("embed_endpoint", config.embed_endpoint);
  top.read("embed_model", config.embed_model);
  top.read("embed_dimension", config.embed_dimension);
  top.read("api_key_env", config.api_key_env);
  top.read("chat_fixtures", config.chat_fixtures);
  top.read("max_in_flight", config.max_in_flight);
  top.read("seed", config.seed);
  std::string variant = "natural";
  top.read("variant", variant);
  if (variant == "none") {
    config.rerank = false;
  } else if (const auto v = parse_prompt_variant(variant)) {
    config.variant = *v;
  } else {
    throw ConfigError(fmt::format("unknown variant '{}'", variant));
  }
  std::string sources = "both";
  top.read("sources", sources);
  const auto parsed_sources = parse_candidate_sources(sources);
  if (!parsed_sources) throw ConfigError(fmt::format("unknown sources '{}'", sources));
  config.sources = *parsed_sources;
  nlohmann::json cap;
  top.read("classifier_cap", cap);
  if (cap.is_number_unsigned()) {
    config.classifier_cap = cap.get<std::size_t>();
  } else if (!cap.is_null()) {
    throw ConfigError("classifier_cap must be a non-negative integer or null");
  }
  std::string labels = "preferred";
  top.read("label_text", labels);
  if (labels == "preferred") {
    config.label_text = LabelText::kPreferred;
  } else if (labels == "preferred+alt") {
    config.label_text = LabelText::kPreferredAndAlternatives;
  } else if (labels == "preferred+description") {
    config.label_text = LabelText::kPreferredAndDescription;
  } else {
    throw ConfigError(fmt::format("unknown label_text '{}'", labels));
  }
  top.read("jobs", config.jobs);

  if (const auto* node = top.child("datagen")) {
    ObjectReader r(*node, "datagen");
    auto& d = config.datagen;
    r.read("examples_per_skill", d.examples_per_skill);
    r.read("min_acceptable", d.min_acceptable);
    if (const auto* quota = r.child("implicit_quota")) {
      ObjectReader q(*quota, "datagen.implicit_quota");
      q.read("tech", d.implicit_quota[SkillCategory::kTech]);
      q.read("language", d.implicit_quota[SkillCategory::kLanguage]);
      q.read("general", d.implicit_quota[SkillCategory::kGeneral]);
      q.finish();
    }
    r.read("retries", d.retries);
    r.read("model", d.model_id);
    r.read("temperature", d.temperature);
    r.read("max_tokens", d.max_tokens);
    r.read("max_transport_failure_fraction", d.max_transport_failure_fraction);
    r.finish();
  }
  if (const auto* node = top.child("training")) {
    ObjectReader r(*node, "training");
    auto& t = config.training;
    r.read("neg_ratio", t.neg_ratio);
    r.read("hard_neg_fraction", t.hard_neg_fraction);
    r.read("hard_pool_labels", t.hard_pool_labels);
    r.read("C", t.inverse_reg_c);
    r.read("max_iterations", t.max_iterations);
    r.read("tolerance", t.tolerance);
    r.read("positive_weight", t.positive_weight);
    r.read("threshold", t.threshold);
    r.read("lbfgs_memory", t.lbfgs_memory);
    r.finish();
  }
  if (const auto* node = top.child("rerank")) {
    ObjectReader r(*node, "rerank");
    auto& o = config.rerank_options;
    r.read("model", o.model_id);
    r.read("temperature", o.temperature);
    r.read("max_tokens", o.max_tokens);
    r.read("retries", o.retries);
    r.finish();
  }
  top.finish();
  return config;
}

RunConfig RunConfig::load(const std::string& path) {
  nlohmann::json json;
  try {
    json = nlohmann::json::parse(util::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path, e.what()));
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  RunConfig config = from_json(json);
  // Relative paths in a config file are relative to the file.
  const fs::path base = fs::path(path).parent_path();
  for (std::string* p : {&config.taxonomy_path, &config.categories_path, &config.corpus_path,
                         &config.generation_report_path, &config.label_index_path, &config.sentence_index_path,
                         &config.bank_path, &config.cache_dir, &config.chat_fixtures}) {
    if (!p->empty() && fs::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
  return config;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json quota = nlohmann::json::object();
  for (const auto& [category, value] : datagen.implicit_quota) quota[std::string(skillmatch::to_string(category))] = value;
  return {
      {"taxonomy", taxonomy_path},
      {"taxonomy_format", taxonomy_format == TaxonomyFormat::kJsonl ? "jsonl" : "esco-csv"},
      {"categories", categories_path},
      {"corpus", corpus_path},
      {"generation_report", generation_report_path},
      {"label_index", label_index_path},
      {"sentence_index", sentence_index_path},
      {"classifier_bank", bank_path},
      {"cache_dir", cache_dir},
      {"provider", provider},
      {"chat_endpoint", chat_endpoint},
      {"embed_endpoint", embed_endpoint},
      {"embed_model", embed_model},
      {"embed_dimension", embed_dimension},
      {"api_key_env", api_key_env},
      {"chat_fixtures", chat_fixtures},
      {"max_in_flight", max_in_flight},
      {"seed", seed},
      {"variant", rerank ? std::string(skillmatch::to_string(variant)) : std::string("none")},
      {"sources", skillmatch::to_string(sources)},
      {"classifier_cap", classifier_cap == kUnlimited ? nlohmann::json(nullptr) : nlohmann::json(classifier_cap)},
      {"label_text", label_text_name(label_text)},
      {"jobs", jobs},
      {"datagen",
       {{"examples_per_skill", datagen.examples_per_skill},
        {"min_acceptable", datagen.min_acceptable},
        {"implicit_quota", quota},
        {"retries", datagen.retries},
        {"model", datagen.model_id},
        {"temperature", datagen.temperature},
        {"max_tokens", datagen.max_tokens},
        {"max_transport_failure_fraction", datagen.max_transport_failure_fraction}}},
      {"training",
       {{"neg_ratio", training.neg_ratio},
        {"hard_neg_fraction", training.hard_neg_fraction},
        {"hard_pool_labels", training.hard_pool_labels},
        {"C", training.inverse_reg_c},
        {"max_iterations", training.max_iterations},
        {"tolerance", training.tolerance},
        {"positive_weight", training.positive_weight},
        {"threshold", training.threshold},
        {"lbfgs_memory", training.lbfgs_memory}}},
      {"rerank",
       {{"model", rerank_options.model_id},
        {"temperature", rerank_options.temperature},
        {"max_tokens", rerank_options.max_tokens},
        {"retries", rerank_options.retries}}},
  };
}

std::size_t RunConfig::effective_embed_dimension() const {
  if (embed_dimension != 0) return embed_dimension;
  return provider == "mock" ? 128 : 1024;
}

std::string RunConfig::config_hash() const {
  nlohmann::json semantic = to_json();
  for (const char* key : {"taxonomy", "categories", "corpus", "generation_report", "label_index", "sentence_index",
                          "classifier_bank", "cache_dir", "chat_endpoint", "embed_endpoint", "api_key_env",
                          "chat_fixtures", "max_in_flight", "jobs"}) {
    semantic.erase(key);
  }
  semantic["embed_dimension"] = effective_embed_dimension();
  return util::sha256_hex(semantic.dump()).substr(0, 16);
}

void RunConfig::finalize() {
  if (provider != "mock" && provider != "remote") {
    throw ConfigError(fmt::format("unknown provider '{}' (expected mock or remote)", provider));
  }
  if (jobs == 0) throw ConfigError("jobs must be positive");
  if (max_in_flight == 0) throw ConfigError("max_in_flight must be positive");
  if (rerank_options.retries < 0) throw ConfigError("rerank retries must be >= 0");
  datagen.jobs = jobs;
  training.jobs = jobs;
  training.seed = seed;
  datagen.validate();
  training.validate();
  if (api_key.empty() && !api_key_env.empty()) {
    if (const char* value = std::getenv(api_key_env.c_str())) api_key = value;
  }
}

nlohmann::json artifact_metadata(const RunConfig& config) {
  return {{"seed", config.seed}, {"config_hash", config.config_hash()}, {"template_version", template_version()}};
}

Providers make_providers(const RunConfig& config) {
  Providers providers;
  if (config.provider == "mock") {
    providers.embedder = std::make_shared<MockEmbedder>(config.effective_embed_dimension(), config.seed);
    std::shared_ptr<ChatProvider> offline = std::make_shared<OfflineChatModel>(config.seed);
    if (!config.chat_fixtures.empty()) {
      providers.chat = std::make_shared<FixtureChatProvider>(FixtureChatProvider::load_rules(config.chat_fixtures),
                                                             offline);
    } else {
      providers.chat = offline;
    }
  } else {
    if (config.api_key.empty()) {
      spdlog::warn("no API key in ${}; sending unauthenticated requests", config.api_key_env);
    }
    HttpOptions http;
    http.api_key = config.api_key;
    http.max_in_flight = config.max_in_flight;
    if (!config.chat_endpoint.empty()) {
      http.endpoint = config.chat_endpoint;
      providers.chat = std::make_shared<HttpChatProvider>(http);
    }
    if (!config.embed_endpoint.empty()) {
      HttpEmbeddingOptions options;
      options.http = http;
      options.http.endpoint = config.embed_endpoint;
      options.model_id = config.embed_model;
      options.dimension = config.effective_embed_dimension();
      providers.embedder = std::make_shared<HttpEmbeddingProvider>(options);
    }
  }
  if (!config.cache_dir.empty()) {
    providers.cache = std::make_shared<ResponseCache>(config.cache_dir);
    if (providers.chat) providers.chat = std::make_shared<CachingChatProvider>(providers.chat, providers.cache);
    if (providers.embedder) {
      providers.embedder = std::make_shared<CachingEmbeddingProvider>(providers.embedder, providers.cache);
    }
  }
  return providers;
}

Taxonomy load_configured_taxonomy(const RunConfig& config) {
  if (config.taxonomy_path.empty()) throw ConfigError("no taxonomy configured");
  if (!fs::exists(config.taxonomy_path)) throw ConfigError(fmt::format("taxonomy '{}' not found", config.taxonomy_path));
  Taxonomy taxonomy = load_taxonomy(config.taxonomy_path, config.taxonomy_format);
  if (config.categories_path.empty()) return taxonomy;
  if (!fs::exists(config.categories_path)) {
    throw ConfigError(fmt::format("category table '{}' not found", config.categories_path));
  }
  return with_categories(taxonomy, load_category_table(config.categories_path));
}

std::string label_text(const Skill& skill, LabelText mode) {
  if (mode == LabelText::kPreferredAndDescription) {
    return skill.description && !skill.description->empty() ? skill.preferred_label + ": " + *skill.description
                                                            : skill.preferred_label;
  }
  if (mode == LabelText::kPreferred || skill.alt_labels.empty()) return skill.preferred_label;
  std::string text = skill.preferred_label;
  for (const auto& alt : skill.alt_labels) text += ", " + alt;
  return text;
}

GeneratedDataset run_generation(const RunConfig& config, const Taxonomy& taxonomy, ChatProvider& chat, bool resume) {
  std::vector<SyntheticExample> existing;
  if (resume && fs::exists(config.corpus_path)) {
    existing = read_corpus(config.corpus_path);
    spdlog::info("resuming from {} existing examples", existing.size());
  }
  GeneratedDataset dataset = generate_dataset(taxonomy, chat, config.datagen, existing);
  write_corpus(config.corpus_path, dataset.examples);
  nlohmann::json report = report_to_json(dataset.report);
  report["metadata"] = artifact_metadata(config);
  util::write_file_atomic(config.generation_report_path, report.dump(2) + "\n");
  return dataset;
}

Indices run_embedding(const RunConfig& config, const Taxonomy& taxonomy, std::span<const SyntheticExample> corpus,
                      EmbeddingProvider& embedder) {
  std::vector<IndexItem> label_items;
  label_items.reserve(taxonomy.size());
  for (const auto& skill : taxonomy.skills()) {
    label_items.push_back({skill.id, label_text(skill, config.label_text), skill.id});
  }
  std::vector<IndexItem> sentence_items;
  sentence_items.reserve(corpus.size());
  for (const auto& example : corpus) {
    if (!taxonomy.find(example.skill_id)) {
      throw FormatError(fmt::format("corpus references unknown skill '{}'", example.skill_id));
    }
    sentence_items.push_back({example_key(example), example.text, example.skill_id});
  }
  const std::string metadata = artifact_metadata(config).dump();
  Indices indices{build_index(label_items, embedder, IndexKind::kLabels, EmbedKind::kPassage, config.jobs),
                  build_index(sentence_items, embedder, IndexKind::kSentences, EmbedKind::kPassage, config.jobs)};
  indices.labels.set_metadata(metadata);
  indices.sentences.set_metadata(metadata);
  indices.labels.save(config.label_index_path);
  indices.sentences.save(config.sentence_index_path);
  return indices;
}

ClassifierBank run_training(const RunConfig& config, std::span<const SyntheticExample> corpus,
                            const VectorIndex& sentences) {
  ClassifierBank bank = train_classifier_bank(corpus, sentences, config.training);
  bank.metadata = artifact_metadata(config).dump();
  bank.save(config.bank_path);
  return bank;
}

// ---------------------------------------------------------------------------

Matcher::Matcher(const Taxonomy& taxonomy, const VectorIndex& labels, const VectorIndex& sentences,
                 const ClassifierBank* bank, EmbeddingProvider& embedder, std::size_t classifier_cap)
    : taxonomy_(taxonomy),
      labels_(labels),
      sentences_(sentences),
      bank_(bank),
      embedder_(embedder),
      classifier_cap_(classifier_cap) {
  if (labels.dimension() != embedder.dimension() || sentences.dimension() != embedder.dimension()) {
    throw ConfigError(fmt::format("index dimension ({}, {}) does not match embedder dimension {}", labels.dimension(),
                                  sentences.dimension(), embedder.dimension()));
  }
}

CandidateSet Matcher::candidates(std::string_view span, CandidateSources sources) const {
  const EmbeddingVector query = embedder_.embed_text(span, EmbedKind::kQuery);
  std::vector<Candidate> classifier, label_sim, sentence_sim;
  if (sources != CandidateSources::kSimilarity) {
    if (!bank_) throw ConfigError("classifier candidates requested without a classifier bank");
    classifier = classifier_candidates(query.values(), bank_->models);
  }
  if (sources != CandidateSources::kClassifier) {
    label_sim = label_similarity_candidates(query.values(), labels_);
    sentence_sim = sentence_similarity_candidates(query.values(), sentences_);
  }
  CandidateSet set = merge_candidates(classifier, label_sim, sentence_sim, kSimilarityCap, classifier_cap_);
  set.span_text = std::string(span);
  attach_labels(set, taxonomy_);
  return set;
}

RankedPrediction unranked_prediction(const CandidateSet& candidates) {
  RankedPrediction prediction;
  for (const auto& candidate : candidates.candidates) {
    if (prediction.ranked.size() == kMaxRanked) break;
    prediction.ranked.push_back(candidate.skill_id);
  }
  return prediction;
}

EvalRun run_evaluation(const RunConfig& config, const Matcher& matcher, const std::vector<EvalExample>& dataset,
                       ChatProvider* chat, CandidateSources sources, std::optional<PromptVariant> variant) {
  if (variant && !chat) throw ConfigError("reranking requested without a chat provider");
  std::vector<RankedPrediction> predictions(dataset.size());
  std::vector<std::optional<nlohmann::json>> logs(dataset.size());
  util::parallel_for(dataset.size(), config.jobs, [&](std::size_t i) {
    const EvalExample& example = dataset[i];
    const CandidateSet set = matcher.candidates(example.span, sources);
    if (!variant) {
      predictions[i] = unranked_prediction(set);
      return;
    }
    if (set.empty()) return;  // nothing to rank: empty prediction
    RerankOutcome outcome = rerank(example.span, set, *chat, *variant, config.rerank_options);
    logs[i] = transcript_log_entry(example.span, set, outcome);
    (*logs[i])["example_id"] = example.id;
    predictions[i] = std::move(outcome.prediction);
  });

  std::map<std::string, RankedPrediction> by_id;
  for (std::size_t i = 0; i < dataset.size(); ++i) by_id.emplace(dataset[i].id, std::move(predictions[i]));

  RunMetadata metadata;
  metadata.variant = variant ? std::string(to_string(*variant)) : "none";
  metadata.sources = std::string(to_string(sources));
  metadata.label = fmt::format("{} / {}", metadata.sources, metadata.variant);
  metadata.seed = config.seed;
  metadata.model_id = variant ? config.rerank_options.model_id : "";
  metadata.config_hash = config.config_hash();
  metadata.template_version = template_version();

  EvalRun run;
  run.report = evaluate(by_id, dataset, std::move(metadata));
  for (auto& log : logs) {
    if (log) run.transcripts.push_back(std::move(*log));
  }
  return run;
}

std::string serialize_report(const EvalReport& report) { return report_to_json(report).dump(2) + "\n"; }

}  // namespace skillmatch
