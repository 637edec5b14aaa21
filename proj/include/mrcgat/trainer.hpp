#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrcgat/copula.hpp"
#include "mrcgat/dataset.hpp"
#include "mrcgat/graph.hpp"
#include "mrcgat/metrics.hpp"
#include "mrcgat/model.hpp"
#include "mrcgat/rng.hpp"

namespace mrcgat {

enum class OptimizerKind { kAdam, kSgd };
enum class CopulaScope { kEpisode, kSplit };

// Defaults: q=10 supports per class,
// 32 episodes per iteration, 1200 iterations, k=6, tau=1, Adam at 0.01,
// dropout 0.2 on attention, five folds.
struct TrainingConfig {
  std::size_t q = 10;
  std::size_t batch_size = 32;
  std::size_t iterations = 1200;
  std::size_t k = 6;
  double tau = 1.0;
  double learning_rate = 0.01;
  double dropout = 0.2;
  double focal_gamma = 2.0;
  std::optional<double> lambda;
  std::uint64_t seed = 0;
  bool label_channel = true;
  std::size_t fold_count = 5;
  std::size_t infer_ensemble = 5;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  FallbackPolicy fallback = FallbackPolicy::kNearestNeighbor;
  CopulaScope copula_scope = CopulaScope::kEpisode;
  std::size_t layer1_width = 16;
  std::size_t layer2_width = 32;
  std::size_t hidden_width = 32;
  // Worker threads; never changes results.
  std::size_t threads = 1;

  void validate() const;
  ModelConfig model_config(std::size_t feature_dim, std::size_t class_count) const;
};

struct ConfigKey {
  const char* name;
  const char* description;
};
// Every accepted config key with its documentation, in file order.
const std::vector<ConfigKey>& config_keys();
// Applies one `key = value` pair; throws ConfigError on unknown keys or bad values.
void apply_config_value(TrainingConfig& config, const std::string& key, const std::string& value);
// Flat `key = value` document; `#` starts a comment.
void apply_config_file(TrainingConfig& config, std::istream& in);
std::string config_value(const TrainingConfig& config, const std::string& key);
// The resolved configuration, one `key = value` per line.
std::string describe_config(const TrainingConfig& config);

// One few-shot task: C*q supports (class-major, ascending record index within
// a class) followed by the query as the last node.
struct Episode {
  std::vector<std::string> node_ids;
  // Support labels; the query's entry holds its true label when known. Never
  // fed to the model for the query node.
  std::vector<std::optional<std::size_t>> node_labels;
  std::vector<std::size_t> support_records;
  std::array<RelationSimilarity, kRelationCount> similarity;
  GraphInput input;
  // Stream id for dropout masks during training.
  std::uint64_t dropout_stream = 0;

  std::size_t node_count() const { return node_ids.size(); }
  std::size_t query() const { return node_ids.size() - 1; }
  std::optional<std::size_t> query_label() const { return node_labels.back(); }
};

struct EpisodeDraw {
  std::vector<std::size_t> support;  // record indices, class-major
  std::optional<std::size_t> query;
};

// Draws q supports per class without replacement from `pool_by_class` and,
// when `draw_query` is set, one query uniformly from the remaining subjects.
// Subjects listed in `exclude` are never drawn. Throws SamplingError naming
// the class that cannot supply q subjects.
EpisodeDraw draw_episode(const std::vector<std::vector<std::size_t>>& pool_by_class, std::size_t q,
                         RngStream& rng, bool draw_query, const std::vector<std::size_t>& exclude = {},
                         const std::vector<std::string>& class_names = {});

// Builds copula features, distances, graphs and GAT inputs for the supports
// `support` of `pool` plus `query`. `reference` enables split-scope ranks.
Episode build_episode(const Dataset& pool, const std::vector<std::size_t>& support, const SubjectRecord& query,
                      bool query_in_pool, const TrainingConfig& config, const CopulaReference* reference = nullptr);

// Training-mode episode: supports and query both drawn from `pool`.
Episode sample_episode(const Dataset& pool, std::size_t q, RngStream& rng, const TrainingConfig& config,
                       const CopulaReference* reference = nullptr);

// -(1 - p_c)^gamma * log(max(p_c, 1e-12)).
double focal_loss(std::span<const double> probabilities, std::size_t true_class, double gamma);

struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(const ModelParameters& params);
};

// Applies one optimizer step with gradient `grads`.
void apply_update(ModelParameters& params, const std::vector<Matrix>& grads, AdamState& state,
                  const TrainingConfig& config);

struct BatchResult {
  double loss = 0.0;
  std::vector<double> episode_losses;
  std::vector<Matrix> gradient;
};

// Mean query focal loss of the batch and its gradient. Per-episode results
// are reduced in ascending-loss order, so the result does not depend on the
// order of `episodes` or on the thread count. Throws NumericalError on a
// non-finite loss.
BatchResult batch_gradient(const ModelParameters& params, std::span<const Episode> episodes,
                           const TrainingConfig& config, std::size_t iteration = 0);

// batch_gradient followed by one optimizer step; returns the batch loss.
double meta_update(ModelParameters& params, std::span<const Episode> episodes, AdamState& state,
                   const TrainingConfig& config, std::size_t iteration = 0);

struct TrainResult {
  ModelParameters params;
  std::vector<double> loss_trace;
};

using ProgressFn = std::function<void(std::size_t iteration, double loss)>;

TrainResult train(const Dataset& data, const TrainingConfig& config, const ProgressFn& progress = {});

std::string loss_trace_csv(std::span<const double> trace);

// Per query: mean of infer_ensemble softmax outputs over independently drawn
// balanced supports from `pool`. Dropout off; the query's label channel is zero.
std::vector<std::vector<double>> infer(const ModelParameters& params, const Dataset& pool,
                                       std::span<const SubjectRecord> queries, const TrainingConfig& config);

struct FoldResult {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  MetricsReport report;
};

struct CrossValidationResult {
  std::vector<FoldResult> folds;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double micro_auc_mean = 0.0;
  double micro_auc_std = 0.0;
  // Metrics over every held-out prediction of every fold.
  MetricsReport pooled;
};

// Stratified fold index per record (labeled records only; unlabeled get nullopt).
std::vector<std::optional<std::size_t>> stratified_folds(const Dataset& data, std::size_t fold_count,
                                                         std::uint64_t seed);

CrossValidationResult cross_validate(const Dataset& data, const TrainingConfig& config,
                                     const ProgressFn& progress = {});

nlohmann::json to_json(const CrossValidationResult& result);

// Runs fn(i) for i in [0, n) across `threads` workers with a static assignment.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace mrcgat
