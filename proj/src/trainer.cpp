#include "mrcgat/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "mrcgat/errors.hpp"
#include "mrcgat/rng.hpp"

namespace mrcgat {

// ---------------------------------------------------------------------------
// Configuration

void TrainingConfig::validate() const {
  if (q < 1) throw ConfigError("q must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(focal_gamma >= 0.0)) throw ConfigError("focal_gamma must be >= 0");
  if (lambda && !(*lambda >= 0.0 && *lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (fold_count < 2) throw ConfigError("fold_count must be >= 2");
  if (infer_ensemble < 1) throw ConfigError("infer_ensemble must be >= 1");
  if (layer1_width < 1 || layer2_width < 1 || hidden_width < 1) throw ConfigError("layer widths must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

ModelConfig TrainingConfig::model_config(std::size_t feature_dim, std::size_t class_count) const {
  ModelConfig m;
  m.feature_dim = feature_dim;
  m.class_count = class_count;
  m.label_channel = label_channel;
  m.layer1_width = layer1_width;
  m.layer2_width = layer2_width;
  m.hidden_width = hidden_width;
  return m;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"q", "support subjects per class in every episode (default 10)"},
      {"batch_size", "episodes per meta-update (default 32)"},
      {"iterations", "meta-updates (default 1200)"},
      {"k", "KNN in-neighbor budget per node (default 6)"},
      {"tau", "distance threshold for keeping an edge (default 1)"},
      {"learning_rate", "optimizer step size (default 0.01)"},
      {"dropout", "inverted dropout rate on attention coefficients (default 0.2)"},
      {"focal_gamma", "focal loss focusing exponent (default 2)"},
      {"lambda", "fixed covariance shrinkage in [0,1]; 'auto' for Ledoit-Wolf with floor 0.05 (default auto)"},
      {"seed", "master seed (default 0)"},
      {"label_channel", "append one-hot support labels to GAT inputs: true|false (default true)"},
      {"fold_count", "cross-validation folds (default 5)"},
      {"infer_ensemble", "support redraws averaged per inference query (default 5)"},
      {"optimizer", "adam|sgd (default adam)"},
      {"fallback", "isolated-node handling after thresholding: on|error (default on)"},
      {"copula_scope", "rank statistics per episode or against the whole training split: episode|split "
                       "(default episode)"},
      {"layer1_width", "first-layer width per head, 4 heads concatenated (default 16)"},
      {"layer2_width", "second-layer width per head, 2 heads averaged (default 32)"},
      {"hidden_width", "classifier hidden width (default 32)"},
      {"threads", "worker threads; results do not depend on it (default 1)"},
  };
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty())
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) throw ConfigError("config key '" + key + "': value must be finite");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw ConfigError("config key '" + key + "': expected true|false, got '" + value + "'");
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

void apply_config_value(TrainingConfig& c, const std::string& key_in, const std::string& value_in) {
  const std::string key = trim(key_in);
  const std::string value = trim(value_in);
  if (key == "q") c.q = parse_number<std::size_t>(key, value);
  else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "iterations") c.iterations = parse_number<std::size_t>(key, value);
  else if (key == "k") c.k = parse_number<std::size_t>(key, value);
  else if (key == "tau") c.tau = value == "inf" ? INFINITY : parse_number<double>(key, value);
  else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, value);
  else if (key == "dropout") c.dropout = parse_number<double>(key, value);
  else if (key == "focal_gamma") c.focal_gamma = parse_number<double>(key, value);
  else if (key == "lambda") {
    if (value == "auto") c.lambda.reset();
    else c.lambda = parse_number<double>(key, value);
  } else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "label_channel") c.label_channel = parse_bool(key, value);
  else if (key == "fold_count") c.fold_count = parse_number<std::size_t>(key, value);
  else if (key == "infer_ensemble") c.infer_ensemble = parse_number<std::size_t>(key, value);
  else if (key == "optimizer") {
    if (value == "adam") c.optimizer = OptimizerKind::kAdam;
    else if (value == "sgd") c.optimizer = OptimizerKind::kSgd;
    else throw ConfigError("optimizer must be adam|sgd");
  } else if (key == "fallback") {
    if (value == "on") c.fallback = FallbackPolicy::kNearestNeighbor;
    else if (value == "error") c.fallback = FallbackPolicy::kError;
    else throw ConfigError("fallback must be on|error");
  } else if (key == "copula_scope") {
    if (value == "episode") c.copula_scope = CopulaScope::kEpisode;
    else if (value == "split") c.copula_scope = CopulaScope::kSplit;
    else throw ConfigError("copula_scope must be episode|split");
  } else if (key == "layer1_width") c.layer1_width = parse_number<std::size_t>(key, value);
  else if (key == "layer2_width") c.layer2_width = parse_number<std::size_t>(key, value);
  else if (key == "hidden_width") c.hidden_width = parse_number<std::size_t>(key, value);
  else if (key == "threads") c.threads = parse_number<std::size_t>(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_file(TrainingConfig& config, std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    apply_config_value(config, line.substr(0, eq), line.substr(eq + 1));
  }
}

std::string config_value(const TrainingConfig& c, const std::string& key) {
  if (key == "q") return std::to_string(c.q);
  if (key == "batch_size") return std::to_string(c.batch_size);
  if (key == "iterations") return std::to_string(c.iterations);
  if (key == "k") return std::to_string(c.k);
  if (key == "tau") return std::isinf(c.tau) ? "inf" : fmt(c.tau);
  if (key == "learning_rate") return fmt(c.learning_rate);
  if (key == "dropout") return fmt(c.dropout);
  if (key == "focal_gamma") return fmt(c.focal_gamma);
  if (key == "lambda") return c.lambda ? fmt(*c.lambda) : "auto";
  if (key == "seed") return std::to_string(c.seed);
  if (key == "label_channel") return c.label_channel ? "true" : "false";
  if (key == "fold_count") return std::to_string(c.fold_count);
  if (key == "infer_ensemble") return std::to_string(c.infer_ensemble);
  if (key == "optimizer") return c.optimizer == OptimizerKind::kAdam ? "adam" : "sgd";
  if (key == "fallback") return c.fallback == FallbackPolicy::kNearestNeighbor ? "on" : "error";
  if (key == "copula_scope") return c.copula_scope == CopulaScope::kEpisode ? "episode" : "split";
  if (key == "layer1_width") return std::to_string(c.layer1_width);
  if (key == "layer2_width") return std::to_string(c.layer2_width);
  if (key == "hidden_width") return std::to_string(c.hidden_width);
  if (key == "threads") return std::to_string(c.threads);
  throw ConfigError("unknown config key '" + key + "'");
}

std::string describe_config(const TrainingConfig& config) {
  std::string out;
  for (const auto& key : config_keys()) out += std::string(key.name) + " = " + config_value(config, key.name) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Episodes

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

EpisodeDraw draw_episode(const std::vector<std::vector<std::size_t>>& pool_by_class, std::size_t q, RngStream& rng,
                         bool draw_query, const std::vector<std::size_t>& exclude,
                         const std::vector<std::string>& class_names) {
  EpisodeDraw draw;
  std::vector<std::size_t> leftovers;
  for (std::size_t c = 0; c < pool_by_class.size(); ++c) {
    std::vector<std::size_t> candidates;
    for (std::size_t idx : pool_by_class[c])
      if (std::find(exclude.begin(), exclude.end(), idx) == exclude.end()) candidates.push_back(idx);
    if (candidates.size() < q) {
      const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
      throw SamplingError("class " + name + " has " + std::to_string(candidates.size()) +
                          " subjects available, episode needs q=" + std::to_string(q));
    }
    // Partial Fisher-Yates: the first q slots become the draw.
    for (std::size_t i = 0; i < q; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
      std::swap(candidates[i], candidates[j]);
    }
    std::sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(q));
    draw.support.insert(draw.support.end(), candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(q));
    leftovers.insert(leftovers.end(), candidates.begin() + static_cast<std::ptrdiff_t>(q), candidates.end());
  }
  if (draw_query) {
    if (leftovers.empty()) throw SamplingError("no subject left over for the episode query");
    std::sort(leftovers.begin(), leftovers.end());
    draw.query = leftovers[static_cast<std::size_t>(rng.below(leftovers.size()))];
  }
  return draw;
}

Episode build_episode(const Dataset& pool, const std::vector<std::size_t>& support, const SubjectRecord& query,
                      bool query_in_pool, const TrainingConfig& config, const CopulaReference* reference) {
  const std::size_t n = support.size() + 1;
  const std::size_t f = pool.feature_count();
  const std::size_t classes = pool.class_count();
  if (query.features.size() != f) throw ShapeError("query feature length does not match the support pool");

  Episode ep;
  ep.support_records = support;
  Matrix raw(n, f);
  for (std::size_t i = 0; i < n; ++i) {
    const SubjectRecord& rec = i + 1 < n ? pool.records.at(support[i]) : query;
    if (i + 1 < n && !rec.label) throw SamplingError("support subject '" + rec.subject_id + "' is unlabeled");
    ep.node_ids.push_back(rec.subject_id);
    ep.node_labels.push_back(rec.label);
    for (std::size_t c = 0; c < f; ++c) raw(i, c) = rec.features[c];
  }

  Matrix copula;
  const Matrix* copula_override = nullptr;
  if (config.copula_scope == CopulaScope::kSplit) {
    if (!reference) throw ConfigError("split-scope copula needs a reference sample");
    std::vector<bool> in_reference(n, true);
    in_reference.back() = query_in_pool;
    copula = reference->transform(raw, in_reference);
    copula_override = &copula;
  }
  ep.similarity = relation_similarities(raw, pool.partition, config.lambda, copula_override);

  std::array<Matrix, kRelationCount> distances;
  for (std::size_t g = 0; g < kRelationCount; ++g) distances[g] = ep.similarity[g].distance;
  ep.input.graphs = build_relational_graphs(distances, config.k, config.tau, config.fallback);
  ep.input.query = n - 1;

  const std::size_t width = f + (config.label_channel ? classes : 0);
  ep.input.features = Matrix(n, width);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t col = 0;
    for (std::size_t g = 0; g < kRelationCount; ++g) {
      const Matrix& z = ep.similarity[g].copula;
      for (std::size_t c = 0; c < z.cols(); ++c) ep.input.features(i, col++) = z(i, c);
    }
    if (config.label_channel && i + 1 < n) ep.input.features(i, f + *ep.node_labels[i]) = 1.0;
  }
  return ep;
}

Episode sample_episode(const Dataset& pool, std::size_t q, RngStream& rng, const TrainingConfig& config,
                       const CopulaReference* reference) {
  const EpisodeDraw draw = draw_episode(pool.indices_by_class(), q, rng, true, {}, pool.class_names);
  return build_episode(pool, draw.support, pool.records[*draw.query], true, config, reference);
}

double focal_loss(std::span<const double> probabilities, std::size_t true_class, double gamma) {
  const double p = probabilities[true_class];
  return -std::pow(1.0 - p, gamma) * std::log(std::max(p, 1e-12));
}

// ---------------------------------------------------------------------------
// Optimization

AdamState::AdamState(const ModelParameters& params) {
  for (const Matrix& t : params.tensors()) {
    first.emplace_back(t.rows(), t.cols());
    second.emplace_back(t.rows(), t.cols());
  }
}

void apply_update(ModelParameters& params, const std::vector<Matrix>& grads, AdamState& state,
                  const TrainingConfig& config) {
  if (grads.size() != params.size()) throw ShapeError("gradient count does not match parameter count");
  if (config.optimizer == OptimizerKind::kSgd) {
    for (std::size_t t = 0; t < params.size(); ++t)
      for (std::size_t i = 0; i < grads[t].size(); ++i) params.tensor(t)[i] -= config.learning_rate * grads[t][i];
    return;
  }
  ++state.step;
  const double step = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, step);
  const double c2 = 1.0 - std::pow(state.beta2, step);
  for (std::size_t t = 0; t < params.size(); ++t) {
    Matrix& p = params.tensor(t);
    Matrix& m = state.first[t];
    Matrix& v = state.second[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = grads[t][i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      p[i] -= config.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.epsilon);
    }
  }
}

BatchResult batch_gradient(const ModelParameters& params, std::span<const Episode> episodes,
                           const TrainingConfig& config, std::size_t iteration) {
  if (episodes.empty()) throw ConfigError("a meta-update needs at least one episode");
  const std::size_t b = episodes.size();
  std::vector<double> losses(b);
  std::vector<std::vector<Matrix>> grads(b);
  parallel_for(b, config.threads, [&](std::size_t e) {
    const Episode& ep = episodes[e];
    if (!ep.query_label()) throw SamplingError("training episode query has no label");
    ForwardOptions opts;
    opts.training = true;
    opts.dropout = config.dropout;
    opts.dropout_seed = config.seed;
    opts.dropout_stream = ep.dropout_stream;
    losses[e] = query_loss(params, ep.input, *ep.query_label(), config.focal_gamma, opts, &grads[e]);
  });
  for (std::size_t e = 0; e < b; ++e) {
    if (!std::isfinite(losses[e]))
      throw NumericalError("non-finite loss at iteration " + std::to_string(iteration) + ", episode stream " +
                           std::to_string(episodes[e].dropout_stream) + ", seed " + std::to_string(config.seed));
  }

  std::vector<std::size_t> order(b);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return losses[x] < losses[y]; });

  BatchResult out;
  out.episode_losses = losses;
  out.gradient.reserve(params.size());
  for (const Matrix& t : params.tensors()) out.gradient.emplace_back(t.rows(), t.cols());
  double total = 0.0;
  for (std::size_t e : order) {
    total += losses[e];
    for (std::size_t t = 0; t < params.size(); ++t) out.gradient[t] += grads[e][t];
  }
  const double inv = 1.0 / static_cast<double>(b);
  out.loss = total * inv;
  for (Matrix& g : out.gradient) g *= inv;
  for (const Matrix& g : out.gradient)
    if (!g.all_finite())
      throw NumericalError("non-finite gradient at iteration " + std::to_string(iteration) + ", seed " +
                           std::to_string(config.seed));
  return out;
}

double meta_update(ModelParameters& params, std::span<const Episode> episodes, AdamState& state,
                   const TrainingConfig& config, std::size_t iteration) {
  BatchResult batch = batch_gradient(params, episodes, config, iteration);
  apply_update(params, batch.gradient, state, config);
  return batch.loss;
}

namespace {

std::unique_ptr<CopulaReference> make_reference(const Dataset& pool, const TrainingConfig& config) {
  if (config.copula_scope != CopulaScope::kSplit) return nullptr;
  Matrix all(pool.records.size(), pool.feature_count());
  for (std::size_t i = 0; i < pool.records.size(); ++i)
    for (std::size_t c = 0; c < pool.feature_count(); ++c) all(i, c) = pool.records[i].features[c];
  return std::make_unique<CopulaReference>(all);
}

Dataset labeled_only(const Dataset& data) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.records.size(); ++i)
    if (data.records[i].label) keep.push_back(i);
  return data.subset(keep);
}

}  // namespace

TrainResult train(const Dataset& data_in, const TrainingConfig& config, const ProgressFn& progress) {
  config.validate();
  const Dataset data = labeled_only(data_in);
  TrainResult result{ModelParameters::initialize(config.model_config(data.feature_count(), data.class_count()),
                                                 config.seed),
                     {}};
  if (config.iterations == 0) return result;

  const auto reference = make_reference(data, config);
  AdamState adam(result.params);
  std::vector<Episode> batch(config.batch_size);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    parallel_for(config.batch_size, config.threads, [&](std::size_t b) {
      RngStream rng(config.seed, stream_id(StreamPurpose::kEpisode, it, b));
      batch[b] = sample_episode(data, config.q, rng, config, reference.get());
      batch[b].dropout_stream = stream_id(StreamPurpose::kDropout, it, b);
    });
    const double loss = meta_update(result.params, batch, adam, config, it);
    result.loss_trace.push_back(loss);
    if (progress) progress(it, loss);
  }
  return result;
}

std::string loss_trace_csv(std::span<const double> trace) {
  std::string out = "iteration,mean_loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out += std::to_string(i + 1) + "," + format_double(trace[i]) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Inference and evaluation

std::vector<std::vector<double>> infer(const ModelParameters& params, const Dataset& pool_in,
                                       std::span<const SubjectRecord> queries, const TrainingConfig& config) {
  config.validate();
  const Dataset pool = labeled_only(pool_in);
  if (params.config().class_count != pool.class_count() || params.config().feature_dim != pool.feature_count())
    throw SchemaError("model does not match the support pool's classes or feature count");
  if (params.config().label_channel != config.label_channel)
    throw ConfigError("label_channel setting differs from the model's");
  const auto by_class = pool.indices_by_class();
  const auto reference = make_reference(pool, config);

  std::vector<std::vector<double>> out(queries.size());
  parallel_for(queries.size(), config.threads, [&](std::size_t qi) {
    const SubjectRecord& query = queries[qi];
    std::vector<std::size_t> exclude;
    for (std::size_t i = 0; i < pool.records.size(); ++i)
      if (pool.records[i].subject_id == query.subject_id) exclude.push_back(i);
    std::vector<double> mean(pool.class_count(), 0.0);
    for (std::size_t r = 0; r < config.infer_ensemble; ++r) {
      RngStream rng(config.seed, stream_id(StreamPurpose::kInference, qi, r));
      const EpisodeDraw draw = draw_episode(by_class, config.q, rng, false, exclude, pool.class_names);
      for (std::size_t s : draw.support)
        if (pool.records[s].subject_id == query.subject_id)
          throw Error("leakage: query '" + query.subject_id + "' drawn into its own support set");
      const Episode ep = build_episode(pool, draw.support, query, false, config, reference.get());
      const auto probs = predict(params, ep.input);
      for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += probs[c];
    }
    for (double& v : mean) v /= static_cast<double>(config.infer_ensemble);
    out[qi] = std::move(mean);
  });
  return out;
}

std::vector<std::optional<std::size_t>> stratified_folds(const Dataset& data, std::size_t fold_count,
                                                         std::uint64_t seed) {
  std::vector<std::optional<std::size_t>> fold(data.records.size());
  auto by_class = data.indices_by_class();
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    RngStream rng(seed, stream_id(StreamPurpose::kFolds, c));
    rng.shuffle(by_class[c]);
    for (std::size_t j = 0; j < by_class[c].size(); ++j) fold[by_class[c][j]] = j % fold_count;
  }
  return fold;
}

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

CrossValidationResult cross_validate(const Dataset& data, const TrainingConfig& config, const ProgressFn& progress) {
  config.validate();
  const auto fold = stratified_folds(data, config.fold_count, config.seed);
  CrossValidationResult result;
  std::vector<double> accs;
  std::vector<double> aucs;
  std::vector<ScoredPrediction> pooled;
  for (std::size_t f = 0; f < config.fold_count; ++f) {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      if (!fold[i]) continue;
      (*fold[i] == f ? test_idx : train_idx).push_back(i);
    }
    const Dataset train_set = data.subset(train_idx);
    const Dataset test_set = data.subset(test_idx);

    FoldResult fr;
    for (const auto& r : train_set.records) fr.train_ids.push_back(r.subject_id);
    for (const auto& r : test_set.records) fr.test_ids.push_back(r.subject_id);
    const std::set<std::string> train_ids(fr.train_ids.begin(), fr.train_ids.end());
    for (const auto& id : fr.test_ids)
      if (train_ids.count(id)) throw Error("leakage: subject '" + id + "' is in both train and test folds");

    TrainingConfig fold_config = config;
    fold_config.seed = mix64(config.seed ^ (0xF01D0000ULL + f));
    const TrainResult trained = train(train_set, fold_config, progress);
    const auto probs = infer(trained.params, train_set, test_set.records, fold_config);

    std::vector<ScoredPrediction> preds;
    for (std::size_t i = 0; i < test_set.records.size(); ++i)
      preds.push_back({test_set.records[i].subject_id, *test_set.records[i].label, probs[i]});
    pooled.insert(pooled.end(), preds.begin(), preds.end());
    fr.report = evaluate(std::move(preds), data.class_names);
    accs.push_back(fr.report.accuracy);
    if (fr.report.micro_auc) aucs.push_back(*fr.report.micro_auc);
    result.folds.push_back(std::move(fr));
  }
  result.accuracy_mean = mean_of(accs);
  result.accuracy_std = sample_std(accs);
  if (!aucs.empty()) {
    result.micro_auc_mean = mean_of(aucs);
    result.micro_auc_std = sample_std(aucs);
  }
  result.pooled = evaluate(std::move(pooled), data.class_names);
  return result;
}

nlohmann::json to_json(const CrossValidationResult& result) {
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t f = 0; f < result.folds.size(); ++f) {
    nlohmann::json fj = to_json(result.folds[f].report);
    fj["fold"] = f;
    fj["train_size"] = result.folds[f].train_ids.size();
    folds.push_back(std::move(fj));
  }
  return {{"mode", "cross_validation"},
          {"fold_count", result.folds.size()},
          {"accuracy_mean", result.accuracy_mean},
          {"accuracy_std", result.accuracy_std},
          {"micro_auc_mean", result.micro_auc_mean},
          {"micro_auc_std", result.micro_auc_std},
          {"folds", folds},
          {"pooled", to_json(result.pooled)}};
}

}  // namespace mrcgat
