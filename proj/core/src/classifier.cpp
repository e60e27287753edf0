#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "binary_io.hpp"
#include "skillmatch/candidates.hpp"

namespace skillmatch {

namespace {

constexpr std::string_view kBankMagic = "SKMCLF01";
constexpr std::uint32_t kBankVersion = 1;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double dot_row(std::span<const double> w, std::span<const float> x) {
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) sum += w[i] * static_cast<double>(x[i]);
  return sum;
}

double norm2(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

}  // namespace

void TrainingConfig::validate() const {
  if (!(neg_ratio > 0.0)) throw ConfigError("neg_ratio must be positive");
  if (!(hard_neg_fraction >= 0.0 && hard_neg_fraction <= 1.0)) throw ConfigError("hard_neg_fraction must lie in [0, 1]");
  if (hard_pool_labels == 0) throw ConfigError("hard_pool_labels must be positive");
  if (!(inverse_reg_c > 0.0)) throw ConfigError("inverse_reg_c must be positive");
  if (max_iterations <= 0) throw ConfigError("max_iterations must be positive");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (!(positive_weight > 0.0)) throw ConfigError("positive_weight must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (lbfgs_memory == 0) throw ConfigError("lbfgs_memory must be positive");
}

double ClassifierModel::probability(std::span<const double> x) const {
  double z = bias;
  for (std::size_t i = 0; i < weights.size(); ++i) z += weights[i] * x[i];
  return sigmoid(z);
}

double accumulate_data_term(std::span<const double> weights, double bias, std::span<const TrainingRow> rows,
                            double positive_weight, std::span<double> grad_w, double& grad_b) {
  double loss = 0.0;
  for (const TrainingRow& row : rows) {
    const double y = row.positive ? 1.0 : -1.0;
    const double c = row.positive ? positive_weight : 1.0;
    const double margin = y * (dot_row(weights, row.x) + bias);
    loss += c * softplus(-margin);
    const double dz = -c * y * sigmoid(-margin);
    for (std::size_t i = 0; i < grad_w.size(); ++i) grad_w[i] += dz * static_cast<double>(row.x[i]);
    grad_b += dz;
  }
  return loss;
}

ObjectiveValue logistic_objective(std::span<const double> weights, double bias, std::span<const TrainingRow> rows,
                                  const TrainingConfig& config) {
  ObjectiveValue value;
  value.grad_w.assign(weights.size(), 0.0);
  double reg = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    reg += weights[i] * weights[i];
    value.grad_w[i] = weights[i] / config.inverse_reg_c;
  }
  value.loss = reg / (2.0 * config.inverse_reg_c) +
               accumulate_data_term(weights, bias, rows, config.positive_weight, value.grad_w, value.grad_b);
  if (!std::isfinite(value.loss) || !std::isfinite(value.grad_b)) {
    throw Error(fmt::format("non-finite logistic objective (loss={}, grad_b={}, rows={})", value.loss,
                            value.grad_b, rows.size()));
  }
  return value;
}

ClassifierModel train_classifier(std::string skill_id, std::span<const TrainingRow> rows, std::size_t dimension,
                                 const TrainingConfig& config, std::vector<double>* loss_trace) {
  config.validate();
  if (rows.empty()) throw FormatError(fmt::format("no training rows for '{}'", skill_id));
  for (const auto& row : rows) {
    if (row.x.size() != dimension) throw FormatError(fmt::format("training row dimension mismatch for '{}'", skill_id));
  }
  const std::size_t n = dimension + 1;  // weights then bias
  std::vector<double> theta(n, 0.0);
  const auto evaluate = [&](const std::vector<double>& params, std::vector<double>& grad) {
    const std::span<const double> w(params.data(), dimension);
    ObjectiveValue value = logistic_objective(w, params[dimension], rows, config);
    grad.assign(value.grad_w.begin(), value.grad_w.end());
    grad.push_back(value.grad_b);
    return value.loss;
  };

  std::vector<double> grad;
  double loss = evaluate(theta, grad);
  std::deque<std::pair<std::vector<double>, std::vector<double>>> memory;  // (s, y)
  std::deque<double> rho;
  std::vector<double> direction(n), alpha(config.lbfgs_memory), next(n), next_grad;

  ClassifierModel model;
  model.skill_id = std::move(skill_id);
  model.threshold = config.threshold;
  int iteration = 0;
  bool converged = norm2(grad) <= config.tolerance;
  while (!converged && iteration < config.max_iterations) {
    // Two-loop recursion: direction = -H * grad.
    direction = grad;
    for (std::size_t j = memory.size(); j-- > 0;) {
      const auto& [s, y] = memory[j];
      alpha[j] = rho[j] * std::inner_product(s.begin(), s.end(), direction.begin(), 0.0);
      for (std::size_t i = 0; i < n; ++i) direction[i] -= alpha[j] * y[i];
    }
    if (!memory.empty()) {
      const auto& [s, y] = memory.back();
      const double gamma = std::inner_product(s.begin(), s.end(), y.begin(), 0.0) /
                           std::inner_product(y.begin(), y.end(), y.begin(), 0.0);
      for (double& d : direction) d *= gamma;
    } else {
      const double scale = 1.0 / std::max(1.0, norm2(grad));
      for (double& d : direction) d *= scale;
    }
    for (std::size_t j = 0; j < memory.size(); ++j) {
      const auto& [s, y] = memory[j];
      const double beta = rho[j] * std::inner_product(y.begin(), y.end(), direction.begin(), 0.0);
      for (std::size_t i = 0; i < n; ++i) direction[i] += s[i] * (alpha[j] - beta);
    }
    for (double& d : direction) d = -d;
    double slope = std::inner_product(grad.begin(), grad.end(), direction.begin(), 0.0);
    if (!(slope < 0.0)) {
      // Not a descent direction; restart from steepest descent.
      memory.clear();
      rho.clear();
      const double scale = 1.0 / std::max(1.0, norm2(grad));
      for (std::size_t i = 0; i < n; ++i) direction[i] = -grad[i] * scale;
      slope = std::inner_product(grad.begin(), grad.end(), direction.begin(), 0.0);
    }

    // Backtracking line search; the loss never increases.
    double step = 1.0;
    double next_loss = 0.0;
    bool accepted = false;
    const double grad_norm = norm2(grad);
    for (int tries = 0; tries < 60; ++tries) {
      for (std::size_t i = 0; i < n; ++i) next[i] = theta[i] + step * direction[i];
      next_loss = evaluate(next, next_grad);
      if (next_loss <= loss + 1e-4 * step * slope ||
          (next_loss <= loss && norm2(next_grad) < grad_norm)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // stalled at floating-point resolution

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = next[i] - theta[i];
      y[i] = next_grad[i] - grad[i];
    }
    const double sy = std::inner_product(s.begin(), s.end(), y.begin(), 0.0);
    if (sy > 1e-12 * std::inner_product(y.begin(), y.end(), y.begin(), 0.0)) {
      if (memory.size() == config.lbfgs_memory) {
        memory.pop_front();
        rho.pop_front();
      }
      memory.emplace_back(std::move(s), std::move(y));
      rho.push_back(1.0 / sy);
    }
    theta.swap(next);
    grad.swap(next_grad);
    loss = next_loss;
    ++iteration;
    if (loss_trace) loss_trace->push_back(loss);
    converged = norm2(grad) <= config.tolerance;
  }

  model.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(dimension));
  model.bias = theta[dimension];
  model.converged = converged;
  model.iterations_used = iteration;
  model.final_loss = loss;
  return model;
}

ClassifierModel train_classifier(std::string skill_id, std::span<const SyntheticExample> positives,
                                 std::span<const SyntheticExample> negatives, const VectorIndex& embeddings,
                                 const TrainingConfig& config) {
  std::vector<TrainingRow> rows;
  rows.reserve(positives.size() + negatives.size());
  const auto add = [&](const SyntheticExample& example, bool positive) {
    const auto slot = embeddings.find(example_key(example));
    if (!slot) throw FormatError(fmt::format("no embedding for example '{}'", example_key(example)));
    rows.push_back({embeddings.row(*slot), positive});
  };
  for (const auto& example : positives) add(example, true);
  for (const auto& example : negatives) add(example, false);
  return train_classifier(std::move(skill_id), rows, embeddings.dimension(), config);
}

ConvergenceSummary ClassifierBank::summary() const {
  ConvergenceSummary summary;
  summary.models = models.size();
  const std::pair<int, std::string> buckets[] = {
      {10, "1-10"}, {100, "11-100"}, {1000, "101-1000"}, {10000, "1001-10000"}};
  std::map<std::size_t, std::size_t> counts;
  for (const auto& model : models) {
    if (model.converged) ++summary.converged;
    std::size_t b = std::size(buckets);
    for (std::size_t i = 0; i < std::size(buckets); ++i) {
      if (model.iterations_used <= buckets[i].first) {
        b = i;
        break;
      }
    }
    ++counts[b];
  }
  for (std::size_t i = 0; i <= std::size(buckets); ++i) {
    const std::string label = i < std::size(buckets) ? buckets[i].second : ">10000";
    summary.iteration_histogram.emplace_back(label, counts[i]);
  }
  return summary;
}

void ClassifierBank::save(const std::string& path) const {
  detail::ByteWriter payload;
  payload.f64(config.neg_ratio);
  payload.f64(config.hard_neg_fraction);
  payload.u64(config.hard_pool_labels);
  payload.f64(config.inverse_reg_c);
  payload.u32(static_cast<std::uint32_t>(config.max_iterations));
  payload.f64(config.tolerance);
  payload.f64(config.positive_weight);
  payload.f64(config.threshold);
  payload.u64(config.seed);
  payload.str(metadata);
  for (const auto& model : models) {
    if (model.weights.size() != dimension) throw FormatError("classifier weight dimension mismatch");
    payload.str(model.skill_id);
    for (double w : model.weights) payload.f32(static_cast<float>(w));
    payload.f64(model.bias);
    payload.f64(model.threshold);
    payload.u8(model.converged ? 1 : 0);
    payload.u32(static_cast<std::uint32_t>(model.iterations_used));
  }
  detail::ByteWriter file;
  file.raw(kBankMagic);
  file.u32(kBankVersion);
  file.u32(static_cast<std::uint32_t>(dimension));
  file.u64(models.size());
  file.u64(util::fnv1a64(payload.bytes()));
  file.raw(payload.bytes());
  util::write_file_atomic(path, file.bytes());
}

ClassifierBank ClassifierBank::load(const std::string& path) {
  const std::string bytes = util::read_file(path);
  detail::ByteReader in(bytes, path);
  if (in.raw(kBankMagic.size()) != kBankMagic) throw FormatError(path + ": not a classifier bank file");
  if (const auto version = in.u32(); version != kBankVersion) {
    throw FormatError(fmt::format("{}: unsupported classifier bank version {}", path, version));
  }
  ClassifierBank bank;
  bank.dimension = in.u32();
  const std::uint64_t count = in.u64();
  const std::uint64_t checksum = in.u64();
  if (util::fnv1a64(std::string_view(bytes).substr(in.position())) != checksum) {
    throw FormatError(path + ": checksum mismatch");
  }
  bank.config.neg_ratio = in.f64();
  bank.config.hard_neg_fraction = in.f64();
  bank.config.hard_pool_labels = in.u64();
  bank.config.inverse_reg_c = in.f64();
  bank.config.max_iterations = static_cast<int>(in.u32());
  bank.config.tolerance = in.f64();
  bank.config.positive_weight = in.f64();
  bank.config.threshold = in.f64();
  bank.config.seed = in.u64();
  bank.metadata = in.str();
  bank.models.reserve(count);
  for (std::uint64_t m = 0; m < count; ++m) {
    ClassifierModel model;
    model.skill_id = in.str();
    model.weights.resize(bank.dimension);
    for (double& w : model.weights) w = in.f32();
    model.bias = in.f64();
    model.threshold = in.f64();
    model.converged = in.u8() != 0;
    model.iterations_used = static_cast<int>(in.u32());
    bank.models.push_back(std::move(model));
  }
  if (in.remaining() != 0) throw FormatError(path + ": trailing bytes");
  return bank;
}

ClassifierBank train_classifier_bank(std::span<const SyntheticExample> corpus, const VectorIndex& sentence_index,
                                     const TrainingConfig& config) {
  config.validate();
  std::vector<std::string> skills;
  std::map<std::string, std::vector<SyntheticExample>> positives;
  for (const auto& example : corpus) {
    auto [it, inserted] = positives.try_emplace(example.skill_id);
    if (inserted) skills.push_back(example.skill_id);
    it->second.push_back(example);
  }
  ClassifierBank bank;
  bank.dimension = sentence_index.dimension();
  bank.config = config;
  bank.models.resize(skills.size());
  spdlog::info("training {} classifiers", skills.size());
  util::parallel_for(skills.size(), config.jobs, [&](std::size_t i) {
    const std::string& skill = skills[i];
    std::mt19937_64 rng(skill_seed(config.seed, skill));
    const auto negatives = sample_negatives(skill, corpus, sentence_index, config, rng);
    bank.models[i] = train_classifier(skill, positives.at(skill), negatives, sentence_index, config);
  });
  const auto summary = bank.summary();
  spdlog::info("{} of {} classifiers converged", summary.converged, summary.models);
  return bank;
}

}  // namespace skillmatch
