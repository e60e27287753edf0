#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "skillmatch/pipeline.hpp"

namespace fs = std::filesystem;
using namespace skillmatch;

namespace {

struct Overrides {
  std::string config_path;
  std::string taxonomy, taxonomy_format, categories, corpus, generation_report, label_index, sentence_index, bank;
  std::string cache_dir, provider, chat_endpoint, embed_endpoint, embed_model, chat_fixtures, api_key_env;
  std::size_t embed_dimension = 0;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string variant, sources;
  bool verbose = false;
};

// Flags > config file > defaults.
RunConfig resolve_config(const CLI::App& app, const Overrides& o) {
  RunConfig config = o.config_path.empty() ? RunConfig{} : RunConfig::load(o.config_path);
  const auto given = [&](const char* name) { return app.count(name) > 0; };
  if (given("--taxonomy")) config.taxonomy_path = o.taxonomy;
  if (given("--taxonomy-format")) {
    const auto format = parse_taxonomy_format(o.taxonomy_format);
    if (!format) throw ConfigError(fmt::format("unknown taxonomy format '{}'", o.taxonomy_format));
    config.taxonomy_format = *format;
  }
  if (given("--categories")) config.categories_path = o.categories;
  if (given("--corpus")) config.corpus_path = o.corpus;
  if (given("--generation-report")) config.generation_report_path = o.generation_report;
  if (given("--label-index")) config.label_index_path = o.label_index;
  if (given("--sentence-index")) config.sentence_index_path = o.sentence_index;
  if (given("--bank")) config.bank_path = o.bank;
  if (given("--cache-dir")) config.cache_dir = o.cache_dir;
  if (given("--provider")) config.provider = o.provider;
  if (given("--chat-endpoint")) config.chat_endpoint = o.chat_endpoint;
  if (given("--embed-endpoint")) config.embed_endpoint = o.embed_endpoint;
  if (given("--embed-model")) config.embed_model = o.embed_model;
  if (given("--embed-dimension")) config.embed_dimension = o.embed_dimension;
  if (given("--chat-fixtures")) config.chat_fixtures = o.chat_fixtures;
  if (given("--api-key-env")) config.api_key_env = o.api_key_env;
  if (given("--seed")) config.seed = o.seed;
  if (given("--jobs")) config.jobs = o.jobs;
  config.finalize();
  return config;
}

void apply_variant(RunConfig& config, const std::string& variant) {
  if (variant.empty()) return;
  if (variant == "none") {
    config.rerank = false;
    return;
  }
  const auto parsed = parse_prompt_variant(variant);
  if (!parsed) throw ConfigError(fmt::format("unknown variant '{}' (natural, code or none)", variant));
  config.variant = *parsed;
  config.rerank = true;
}

void apply_sources(RunConfig& config, const std::string& sources) {
  if (sources.empty()) return;
  const auto parsed = parse_candidate_sources(sources);
  if (!parsed) throw ConfigError(fmt::format("unknown sources '{}' (classifier, similarity or both)", sources));
  config.sources = *parsed;
}

void require_file(const std::string& path, std::string_view what) {
  if (path.empty()) throw ConfigError(fmt::format("no {} configured", what));
  if (!fs::exists(path)) throw ConfigError(fmt::format("{} '{}' not found", what, path));
}

void write_output(const std::string& path, const std::string& contents) {
  if (path.empty() || path == "-") {
    std::cout << contents;
  } else {
    util::write_file_atomic(path, contents);
    spdlog::info("wrote {}", path);
  }
}

struct LoadedArtifacts {
  Taxonomy taxonomy;
  VectorIndex labels;
  VectorIndex sentences;
  std::optional<ClassifierBank> bank;
};

LoadedArtifacts load_artifacts(const RunConfig& config, bool need_bank) {
  require_file(config.label_index_path, "label index");
  require_file(config.sentence_index_path, "sentence index");
  std::optional<ClassifierBank> bank;
  if (need_bank) {
    require_file(config.bank_path, "classifier bank");
    bank = ClassifierBank::load(config.bank_path);
  }
  return {load_configured_taxonomy(config), VectorIndex::load(config.label_index_path),
          VectorIndex::load(config.sentence_index_path), std::move(bank)};
}

std::shared_ptr<EmbeddingProvider> need_embedder(const Providers& providers) {
  if (!providers.embedder) throw ConfigError("no embedding provider configured (set embed_endpoint)");
  return providers.embedder;
}

std::shared_ptr<ChatProvider> need_chat(const Providers& providers) {
  if (!providers.chat) throw ConfigError("no chat provider configured (set chat_endpoint)");
  return providers.chat;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& config) {
  const Taxonomy taxonomy = load_configured_taxonomy(config);
  std::map<std::string, std::size_t> per_category;
  std::size_t alternatives = 0;
  for (const auto& skill : taxonomy.skills()) {
    ++per_category[std::string(to_string(skill.category))];
    alternatives += skill.alt_labels.size();
  }
  fmt::print("skills: {}\nalternative labels: {}\n", taxonomy.size(), alternatives);
  for (const auto& [category, count] : per_category) fmt::print("  {:<10}{:>8}\n", category, count);
  return 0;
}

int cmd_gen_data(const RunConfig& config, bool resume) {
  const Taxonomy taxonomy = load_configured_taxonomy(config);
  const Providers providers = make_providers(config);
  const GeneratedDataset dataset = run_generation(config, taxonomy, *need_chat(providers), resume);
  fmt::print("{}", render_generation_summary(dataset.report));
  spdlog::info("wrote {} examples to {}", dataset.examples.size(), config.corpus_path);
  return 0;
}

int cmd_embed(const RunConfig& config) {
  require_file(config.corpus_path, "corpus");
  const Taxonomy taxonomy = load_configured_taxonomy(config);
  const auto corpus = read_corpus(config.corpus_path);
  const Providers providers = make_providers(config);
  const Indices indices = run_embedding(config, taxonomy, corpus, *need_embedder(providers));
  fmt::print("label index: {} rows -> {}\nsentence index: {} rows -> {}\n", indices.labels.size(),
             config.label_index_path, indices.sentences.size(), config.sentence_index_path);
  return 0;
}

int cmd_train(const RunConfig& config) {
  require_file(config.corpus_path, "corpus");
  require_file(config.sentence_index_path, "sentence index");
  const auto corpus = read_corpus(config.corpus_path);
  const VectorIndex sentences = VectorIndex::load(config.sentence_index_path);
  const ClassifierBank bank = run_training(config, corpus, sentences);
  const ConvergenceSummary summary = bank.summary();
  fmt::print("models: {}\nconverged: {} ({:.2f}%)\niterations:\n", summary.models, summary.converged,
             summary.models ? 100.0 * static_cast<double>(summary.converged) / static_cast<double>(summary.models)
                            : 0.0);
  for (const auto& [bucket, count] : summary.iteration_histogram) fmt::print("  {:<12}{:>8}\n", bucket, count);
  return 0;
}

int cmd_match(const RunConfig& config, const std::string& span, bool as_json) {
  if (util::trim(span).empty()) throw ConfigError("--span must not be empty");
  const bool need_bank = config.sources != CandidateSources::kSimilarity;
  const LoadedArtifacts artifacts = load_artifacts(config, need_bank);
  const Providers providers = make_providers(config);
  const Matcher matcher(artifacts.taxonomy, artifacts.labels, artifacts.sentences,
                        artifacts.bank ? &*artifacts.bank : nullptr, *need_embedder(providers),
                        config.classifier_cap);
  const CandidateSet set = matcher.candidates(span, config.sources);
  RankedPrediction prediction;
  if (!config.rerank) {
    prediction = unranked_prediction(set);
  } else if (!set.empty()) {
    prediction = rerank(span, set, *need_chat(providers), config.variant, config.rerank_options).prediction;
  }

  if (as_json) {
    nlohmann::json candidates = nlohmann::json::array();
    for (const auto& c : set.candidates) {
      candidates.push_back(
          {{"skill_id", c.skill_id}, {"label", c.label}, {"source", to_string(c.source)}, {"score", c.score}});
    }
    nlohmann::json out{{"span", span},
                       {"candidates", candidates},
                       {"classifier_count", set.classifier_count},
                       {"prediction", to_json(prediction)},
                       {"metadata", artifact_metadata(config)}};
    std::cout << out.dump(2) << "\n";
    return 0;
  }
  fmt::print("candidates ({}, {} from classifiers):\n", set.candidates.size(), set.classifier_count);
  for (std::size_t i = 0; i < set.candidates.size(); ++i) {
    const auto& c = set.candidates[i];
    fmt::print("  {:>3}. {:<12} {:.4f}  {}\n", i + 1, to_string(c.source), c.score, c.label);
  }
  fmt::print("ranked ({}):\n", config.rerank ? to_string(config.variant) : "none");
  for (std::size_t i = 0; i < prediction.ranked.size(); ++i) {
    const Skill& skill = artifacts.taxonomy.at(prediction.ranked[i]);
    fmt::print("  {:>2}. {}  <{}>\n", i + 1, skill.preferred_label, skill.id);
  }
  if (prediction.terminated_by_no_label) fmt::print("  (NO_LABEL)\n");
  if (prediction.hallucinated_count > 0) fmt::print("hallucinated labels dropped: {}\n", prediction.hallucinated_count);
  if (prediction.parse_failed) fmt::print("reranker output could not be parsed\n");
  return 0;
}

struct EvalArgs {
  std::string dataset;
  std::string out;
  std::string transcripts;
  bool grid = false;
};

int cmd_eval(const RunConfig& config, const EvalArgs& args) {
  require_file(args.dataset, "eval dataset");
  std::vector<std::pair<CandidateSources, std::optional<PromptVariant>>> runs;
  if (args.grid) {
    for (const auto sources : {CandidateSources::kClassifier, CandidateSources::kSimilarity, CandidateSources::kBoth}) {
      runs.emplace_back(sources, std::nullopt);
      runs.emplace_back(sources, PromptVariant::kNatural);
      runs.emplace_back(sources, PromptVariant::kCode);
    }
  } else {
    runs.emplace_back(config.sources, config.rerank ? std::optional(config.variant) : std::nullopt);
  }
  bool need_bank = false;
  bool need_chat_provider = false;
  for (const auto& [sources, variant] : runs) {
    need_bank = need_bank || sources != CandidateSources::kSimilarity;
    need_chat_provider = need_chat_provider || variant.has_value();
  }
  const LoadedArtifacts artifacts = load_artifacts(config, need_bank);
  const auto dataset = load_eval_dataset(args.dataset, &artifacts.taxonomy);
  const Providers providers = make_providers(config);
  const Matcher matcher(artifacts.taxonomy, artifacts.labels, artifacts.sentences,
                        artifacts.bank ? &*artifacts.bank : nullptr, *need_embedder(providers),
                        config.classifier_cap);
  std::shared_ptr<ChatProvider> chat = need_chat_provider ? need_chat(providers) : nullptr;

  std::vector<EvalReport> reports;
  std::string transcript_log;
  for (const auto& [sources, variant] : runs) {
    spdlog::info("evaluating sources={} variant={}", to_string(sources), variant ? to_string(*variant) : "none");
    EvalRun run = run_evaluation(config, matcher, dataset, chat.get(), sources, variant);
    for (const auto& entry : run.transcripts) {
      nlohmann::json line = entry;
      line["run"] = run.report.metadata.label;
      transcript_log += line.dump() + "\n";
    }
    reports.push_back(std::move(run.report));
  }
  std::cout << render_report_grid(reports);
  if (!args.out.empty()) {
    std::string json;
    if (args.grid) {
      nlohmann::json all = nlohmann::json::array();
      for (const auto& report : reports) all.push_back(report_to_json(report));
      json = all.dump(2) + "\n";
    } else {
      json = serialize_report(reports.front());
    }
    write_output(args.out, json);
  }
  if (!args.transcripts.empty()) write_output(args.transcripts, transcript_log);
  return 0;
}

int cmd_cache(const RunConfig& config, const std::string& action, const std::string& key) {
  if (config.cache_dir.empty()) throw ConfigError("no cache_dir configured");
  const ResponseCache cache(config.cache_dir);
  if (action == "stats") {
    const CacheStats stats = cache.stats();
    fmt::print("directory: {}\nentries: {}\nbytes: {}\n", cache.directory(), stats.entries, stats.bytes);
  } else if (action == "clear") {
    fmt::print("removed {} entries\n", cache.clear());
  } else if (action == "show") {
    if (key.empty()) throw ConfigError("cache show needs a key");
    const auto response = cache.get(key);
    if (!response) {
      spdlog::error("no cache entry for {}", key);
      return 1;
    }
    std::cout << *response << "\n";
  } else {
    throw ConfigError(fmt::format("unknown cache action '{}'", action));
  }
  return 0;
}

int cmd_sample(const RunConfig& config, std::size_t count) {
  require_file(config.corpus_path, "corpus");
  const auto corpus = read_corpus(config.corpus_path);
  std::string current;
  for (const auto& example : sample_for_review(corpus, count, config.seed)) {
    if (example.skill_id != current) {
      current = example.skill_id;
      fmt::print("\n{}\n", current);
    }
    fmt::print("  {:>2}. {}\n", example.ordinal, example.text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skill matching against a skills taxonomy: synthetic data, retrieval, LLM reranking"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("-c,--config", o.config_path, "JSON config file");
  app.add_option("--taxonomy", o.taxonomy, "Taxonomy file");
  app.add_option("--taxonomy-format", o.taxonomy_format, "esco-csv or jsonl");
  app.add_option("--categories", o.categories, "Category table (JSON object id -> tech|language|general)");
  app.add_option("--corpus", o.corpus, "Synthetic corpus JSONL");
  app.add_option("--generation-report", o.generation_report, "Generation report JSON");
  app.add_option("--label-index", o.label_index, "Label embedding index");
  app.add_option("--sentence-index", o.sentence_index, "Sentence embedding index");
  app.add_option("--bank", o.bank, "Classifier bank");
  app.add_option("--cache-dir", o.cache_dir, "Response cache directory");
  app.add_option("--provider", o.provider, "mock or remote");
  app.add_option("--chat-endpoint", o.chat_endpoint, "Chat completions URL");
  app.add_option("--embed-endpoint", o.embed_endpoint, "Embeddings URL");
  app.add_option("--embed-model", o.embed_model, "Embedding model id");
  app.add_option("--embed-dimension", o.embed_dimension, "Embedding dimension");
  app.add_option("--chat-fixtures", o.chat_fixtures, "Fixture rules for the mock chat provider");
  app.add_option("--api-key-env", o.api_key_env, "Environment variable holding the API key");
  app.add_option("--seed", o.seed, "Random seed");
  app.add_option("-j,--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", o.verbose, "Debug logging");

  app.add_subcommand("ingest", "Load and validate the taxonomy");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  bool resume = false;
  gen->add_flag("--resume", resume, "Keep skills already present in the corpus");

  app.add_subcommand("embed", "Build the label and sentence indices");
  app.add_subcommand("train", "Train the classifier bank");

  auto* match = app.add_subcommand("match", "Match one span");
  std::string span;
  bool as_json = false;
  match->add_option("--span", span, "Text span")->required();
  match->add_option("--sources", o.sources, "classifier, similarity or both");
  match->add_option("--variant", o.variant, "natural, code or none");
  match->add_flag("--json", as_json, "Print JSON");

  auto* eval = app.add_subcommand("eval", "Evaluate on an annotated dataset");
  EvalArgs eval_args;
  eval->add_option("--dataset", eval_args.dataset, "Eval JSONL")->required();
  eval->add_option("--sources", o.sources, "classifier, similarity or both");
  eval->add_option("--variant", o.variant, "natural, code or none");
  eval->add_flag("--grid", eval_args.grid, "All sources x {none, natural, code}");
  eval->add_option("-o,--out", eval_args.out, "Report JSON path");
  eval->add_option("--transcripts", eval_args.transcripts, "Reranker transcript log (JSONL)");

  auto* cache = app.add_subcommand("cache", "Inspect or clear the response cache");
  std::string cache_action = "stats";
  std::string cache_key;
  cache->add_option("action", cache_action, "stats, clear or show")->check(CLI::IsMember({"stats", "clear", "show"}));
  cache->add_option("key", cache_key, "Cache key for show");

  auto* sample = app.add_subcommand("sample", "Print generated examples of random skills");
  std::size_t sample_count = 5;
  sample->add_option("-n,--count", sample_count, "Number of skills");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto logger = spdlog::stderr_color_mt("skillmatch");
  spdlog::set_default_logger(logger);
  spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    RunConfig config = resolve_config(app, o);
    apply_variant(config, o.variant);
    apply_sources(config, o.sources);
    const auto* command = app.get_subcommands().front();
    const std::string name = command->get_name();
    if (name == "ingest") return cmd_ingest(config);
    if (name == "gen-data") return cmd_gen_data(config, resume);
    if (name == "embed") return cmd_embed(config);
    if (name == "train") return cmd_train(config);
    if (name == "match") return cmd_match(config, span, as_json);
    if (name == "eval") return cmd_eval(config, eval_args);
    if (name == "cache") return cmd_cache(config, cache_action, cache_key);
    if (name == "sample") return cmd_sample(config, sample_count);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}
