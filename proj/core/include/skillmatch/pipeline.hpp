#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillmatch/candidates.hpp"
#include "skillmatch/datagen.hpp"
#include "skillmatch/eval.hpp"
#include "skillmatch/index.hpp"
#include "skillmatch/providers.hpp"
#include "skillmatch/reranker.hpp"
#include "skillmatch/taxonomy.hpp"

namespace skillmatch {

enum class CandidateSources { kClassifier, kSimilarity, kBoth };

std::string_view to_string(CandidateSources sources);
std::optional<CandidateSources> parse_candidate_sources(std::string_view text);

enum class LabelText { kPreferred, kPreferredAndAlternatives, kPreferredAndDescription };

struct RunConfig {
  // inputs and artifacts
  std::string taxonomy_path;
  TaxonomyFormat taxonomy_format = TaxonomyFormat::kEscoCsv;
  std::string categories_path;
  std::string corpus_path = "corpus.jsonl";
  std::string generation_report_path = "generation_report.json";
  std::string label_index_path = "labels.idx";
  std::string sentence_index_path = "sentences.idx";
  std::string bank_path = "classifiers.bin";
  std::string cache_dir;  // empty disables the response cache

  // providers: "mock" or "remote"
  std::string provider = "mock";
  std::string chat_endpoint;
  std::string embed_endpoint;
  std::string embed_model = "intfloat/e5-large-v2";
  std::size_t embed_dimension = 0;  // 0: 1024 remote, 128 mock
  std::string api_key_env = "SKILLMATCH_API_KEY";
  std::string api_key;  // filled from the environment
  std::string chat_fixtures;  // mock only: FixtureChatProvider rules
  std::size_t max_in_flight = 4;

  std::uint64_t seed = 0;
  PromptVariant variant = PromptVariant::kNatural;
  bool rerank = true;
  CandidateSources sources = CandidateSources::kBoth;
  std::size_t classifier_cap = kUnlimited;
  LabelText label_text = LabelText::kPreferred;
  std::size_t jobs = 1;

  DataGenConfig datagen;
  TrainingConfig training;
  RerankOptions rerank_options;

  static RunConfig from_json(const nlohmann::json& json);
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;

  std::size_t effective_embed_dimension() const;

  // Hash of the fields that change results (paths and credentials excluded).
  std::string config_hash() const;

  // Propagates seed and jobs into the stage configs and checks ranges.
  void finalize();
};

// {seed, config_hash, template_version}
nlohmann::json artifact_metadata(const RunConfig& config);

struct Providers {
  std::shared_ptr<ChatProvider> chat;
  std::shared_ptr<EmbeddingProvider> embedder;
  std::shared_ptr<ResponseCache> cache;
};

Providers make_providers(const RunConfig& config);

Taxonomy load_configured_taxonomy(const RunConfig& config);

// Label index text for a skill.
std::string label_text(const Skill& skill, LabelText mode);

GeneratedDataset run_generation(const RunConfig& config, const Taxonomy& taxonomy, ChatProvider& chat,
                                bool resume);

struct Indices {
  VectorIndex labels;
  VectorIndex sentences;
};

Indices run_embedding(const RunConfig& config, const Taxonomy& taxonomy, std::span<const SyntheticExample> corpus,
                      EmbeddingProvider& embedder);

ClassifierBank run_training(const RunConfig& config, std::span<const SyntheticExample> corpus,
                            const VectorIndex& sentences);

// Loaded artifacts needed to match spans.
class Matcher {
 public:
  Matcher(const Taxonomy& taxonomy, const VectorIndex& labels, const VectorIndex& sentences,
          const ClassifierBank* bank, EmbeddingProvider& embedder, std::size_t classifier_cap = kUnlimited);

  CandidateSet candidates(std::string_view span, CandidateSources sources) const;

 private:
  const Taxonomy& taxonomy_;
  const VectorIndex& labels_;
  const VectorIndex& sentences_;
  const ClassifierBank* bank_;
  EmbeddingProvider& embedder_;
  std::size_t classifier_cap_;
};

// Without reranking the prediction is the first 10 merged candidates.
RankedPrediction unranked_prediction(const CandidateSet& candidates);

struct EvalRun {
  EvalReport report;
  std::vector<nlohmann::json> transcripts;  // in dataset order, reranked runs only
};

// Candidates and (optionally) reranking for every example, then scoring.
EvalRun run_evaluation(const RunConfig& config, const Matcher& matcher, const std::vector<EvalExample>& dataset,
                       ChatProvider* chat, CandidateSources sources, std::optional<PromptVariant> variant);

// Report with sorted keys and fixed float formatting, one trailing newline.
std::string serialize_report(const EvalReport& report);

}  // namespace skillmatch
