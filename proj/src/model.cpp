#include "mrcgat/model.hpp"

#include <cmath>
#include <fstream>

#include "mrcgat/errors.hpp"
#include "mrcgat/rng.hpp"

namespace mrcgat {

nlohmann::json to_json(const ModelConfig& c) {
  return {{"feature_dim", c.feature_dim},   {"class_count", c.class_count},   {"label_channel", c.label_channel},
          {"layer1_width", c.layer1_width}, {"layer1_heads", c.layer1_heads}, {"layer2_width", c.layer2_width},
          {"layer2_heads", c.layer2_heads}, {"hidden_width", c.hidden_width}, {"leaky_slope", c.leaky_slope}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.class_count = j.at("class_count").get<std::size_t>();
    c.label_channel = j.at("label_channel").get<bool>();
    c.layer1_width = j.at("layer1_width").get<std::size_t>();
    c.layer1_heads = j.at("layer1_heads").get<std::size_t>();
    c.layer2_width = j.at("layer2_width").get<std::size_t>();
    c.layer2_heads = j.at("layer2_heads").get<std::size_t>();
    c.hidden_width = j.at("hidden_width").get<std::size_t>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model config: ") + e.what());
  }
}

void ModelParameters::add(std::string name, std::size_t rows, std::size_t cols, bool vector) {
  names_.push_back(std::move(name));
  tensors_.emplace_back(rows, cols);
  is_vector_.push_back(vector);
}

ModelParameters::ModelParameters(const ModelConfig& config) : config_(config) {
  if (config.feature_dim == 0 || config.class_count < 2 || config.layer1_width == 0 || config.layer1_heads == 0 ||
      config.layer2_width == 0 || config.layer2_heads == 0 || config.hidden_width == 0)
    throw ConfigError("model widths, head counts and class count must be positive (class count >= 2)");
  const std::size_t d_in = config.input_width();
  const std::size_t d1 = config.layer1_width;
  const std::size_t d2 = config.layer2_width;
  for (std::size_t g = 0; g < kRelationCount; ++g) {
    const std::string rel = std::string("l1.") + kRelationNames[g];
    for (std::size_t m = 0; m < config.layer1_heads; ++m) {
      add(rel + ".head" + std::to_string(m) + ".W", d1, d_in, false);
      add(rel + ".head" + std::to_string(m) + ".a", 2 * d1, 1, true);
    }
    add(rel + ".gate", config.layer1_output(), 1, true);
  }
  for (std::size_t g = 0; g < kRelationCount; ++g) {
    const std::string rel = std::string("l2.") + kRelationNames[g];
    for (std::size_t m = 0; m < config.layer2_heads; ++m) {
      add(rel + ".head" + std::to_string(m) + ".W", d2, config.layer1_output(), false);
      add(rel + ".head" + std::to_string(m) + ".a", 2 * d2, 1, true);
    }
    add(rel + ".gate", d2, 1, true);
  }
  add("classifier.W1", config.hidden_width, d2, false);
  add("classifier.b1", 1, config.hidden_width, true);
  add("classifier.W2", config.class_count, config.hidden_width, false);
  add("classifier.b2", 1, config.class_count, true);
}

std::size_t ModelParameters::layer1_weight(std::size_t relation, std::size_t head) const {
  return relation * (2 * config_.layer1_heads + 1) + 2 * head;
}
std::size_t ModelParameters::layer1_attention(std::size_t relation, std::size_t head) const {
  return layer1_weight(relation, head) + 1;
}
std::size_t ModelParameters::layer1_gate(std::size_t relation) const {
  return relation * (2 * config_.layer1_heads + 1) + 2 * config_.layer1_heads;
}
std::size_t ModelParameters::layer2_weight(std::size_t relation, std::size_t head) const {
  return kRelationCount * (2 * config_.layer1_heads + 1) + relation * (2 * config_.layer2_heads + 1) + 2 * head;
}
std::size_t ModelParameters::layer2_attention(std::size_t relation, std::size_t head) const {
  return layer2_weight(relation, head) + 1;
}
std::size_t ModelParameters::layer2_gate(std::size_t relation) const {
  return kRelationCount * (2 * config_.layer1_heads + 1) + relation * (2 * config_.layer2_heads + 1) +
         2 * config_.layer2_heads;
}

ModelParameters ModelParameters::initialize(const ModelConfig& config, std::uint64_t seed) {
  ModelParameters p(config);
  for (std::size_t i = 0; i < p.size(); ++i) {
    Matrix& t = p.tensors_[i];
    const std::string& n = p.names_[i];
    if (n == "classifier.b1" || n == "classifier.b2") continue;
    const double bound = p.is_vector_[i] ? std::sqrt(6.0 / static_cast<double>(t.size()))
                                         : std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
    RngStream rng(seed, stream_id(StreamPurpose::kInit, i));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
  }
  return p;
}

nlohmann::json ModelParameters::to_json() const {
  nlohmann::json tensors = nlohmann::json::object();
  for (std::size_t i = 0; i < size(); ++i) {
    const Matrix& t = tensors_[i];
    nlohmann::json shape = is_vector_[i] ? nlohmann::json::array({t.size()}) : nlohmann::json::array({t.rows(), t.cols()});
    tensors[names_[i]] = {{"shape", shape}, {"values", t.data()}};
  }
  return {{"format_version", kModelFormatVersion}, {"config", mrcgat::to_json(config_)}, {"tensors", tensors}};
}

ModelParameters ModelParameters::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion)
      throw SchemaError("unsupported model format_version " + j.at("format_version").dump());
    ModelParameters p(model_config_from_json(j.at("config")));
    const auto& tensors = j.at("tensors");
    if (tensors.size() != p.size()) throw SchemaError("model file has " + std::to_string(tensors.size()) +
                                                      " tensors, config implies " + std::to_string(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
      Matrix& t = p.tensors_[i];
      if (!tensors.contains(p.names_[i])) throw SchemaError("model file lacks tensor '" + p.names_[i] + "'");
      const auto& entry = tensors.at(p.names_[i]);
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      const std::vector<std::size_t> expected =
          p.is_vector_[i] ? std::vector<std::size_t>{t.size()} : std::vector<std::size_t>{t.rows(), t.cols()};
      if (shape != expected) throw SchemaError("tensor '" + p.names_[i] + "' has the wrong shape");
      auto values = entry.at("values").get<std::vector<double>>();
      if (values.size() != t.size()) throw SchemaError("tensor '" + p.names_[i] + "' has the wrong value count");
      t = Matrix(t.rows(), t.cols(), std::move(values));
      if (!t.all_finite()) throw SchemaError("tensor '" + p.names_[i] + "' has non-finite values");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model file: ") + e.what());
  }
}

void ModelParameters::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path + "'");
  out << to_json().dump(1) << '\n';
}

ModelParameters ModelParameters::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("model file: ") + e.what());
  }
}

namespace {

struct EdgeIndex {
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
};

EdgeIndex edge_index(const RelationalGraph& graph) {
  EdgeIndex idx;
  for (const Edge& e : graph.edges) {
    idx.src.push_back(e.src);
    idx.dst.push_back(e.dst);
  }
  return idx;
}

class ForwardBuilder {
 public:
  ForwardBuilder(const ModelParameters& params, const GraphInput& input, const ForwardOptions& options,
                 ForwardPass& pass)
      : params_(params), input_(input), options_(options), pass_(pass), tape_(pass.tape),
        dropout_rng_(options.dropout_seed, options.dropout_stream) {
    const std::size_t n = input.features.rows();
    for (std::size_t g = 0; g < kRelationCount; ++g) {
      if (input.graphs[g].node_count != n) throw ShapeError("graph node count does not match feature rows");
      const auto deg = input.graphs[g].in_degree();
      for (std::size_t i = 0; i < n; ++i)
        if (deg[i] == 0) throw DegenerateEpisodeError("node " + std::to_string(i) + " has no in-edges");
      edges_[g] = edge_index(input.graphs[g]);
    }
    for (const Matrix& t : params.tensors())
      pass.params.push_back(options.with_gradients ? tape_.parameter(t) : tape_.constant(t));
  }

  void run() {
    const std::size_t n = input_.features.rows();
    const ModelConfig& cfg = params_.config();
    if (input_.features.cols() != cfg.input_width())
      throw ShapeError("node features have " + std::to_string(input_.features.cols()) + " columns, model expects " +
                       std::to_string(cfg.input_width()));
    if (input_.query >= n) throw ShapeError("query index out of range");

    const Tape::Var x = tape_.constant(input_.features);

    std::array<Tape::Var, kRelationCount> layer1;
    for (std::size_t g = 0; g < kRelationCount; ++g) {
      std::vector<Tape::Var> heads;
      for (std::size_t m = 0; m < cfg.layer1_heads; ++m)
        heads.push_back(attention_head(0, g, m, x, param(params_.layer1_weight(g, m)),
                                       param(params_.layer1_attention(g, m))));
      layer1[g] = tape_.concat(heads, Tape::Axis::kCols);
    }
    pass_.fused[0] = gated_fusion(0, layer1, [&](std::size_t g) { return param(params_.layer1_gate(g)); });

    std::array<Tape::Var, kRelationCount> layer2;
    for (std::size_t g = 0; g < kRelationCount; ++g) {
      Tape::Var sum{};
      for (std::size_t m = 0; m < cfg.layer2_heads; ++m) {
        const Tape::Var h = attention_head(1, g, m, pass_.fused[0], param(params_.layer2_weight(g, m)),
                                           param(params_.layer2_attention(g, m)));
        sum = m == 0 ? h : tape_.add(sum, h);
      }
      layer2[g] = cfg.layer2_heads == 1 ? sum : tape_.scale(sum, 1.0 / static_cast<double>(cfg.layer2_heads));
    }
    pass_.fused[1] = gated_fusion(1, layer2, [&](std::size_t g) { return param(params_.layer2_gate(g)); });

    const Tape::Var query = tape_.gather_rows(pass_.fused[1], {input_.query});
    const Tape::Var hidden = tape_.relu(
        tape_.add(tape_.matmul_nt(query, param(params_.classifier_w1())), param(params_.classifier_b1())));
    const Tape::Var logits =
        tape_.add(tape_.matmul_nt(hidden, param(params_.classifier_w2())), param(params_.classifier_b2()));
    pass_.probabilities = tape_.segment_softmax(logits, std::vector<std::size_t>(cfg.class_count, 0), 1);
  }

 private:
  Tape::Var param(std::size_t i) const { return pass_.params[i]; }

  // One head: alpha over each destination's in-edges, then ELU of the
  // alpha-weighted sum of projected source rows.
  Tape::Var attention_head(std::size_t layer, std::size_t g, std::size_t head, Tape::Var h, Tape::Var w,
                           Tape::Var a) {
    const std::size_t n = input_.features.rows();
    const EdgeIndex& idx = edges_[g];
    const Tape::Var projected = tape_.matmul_nt(h, w);
    const std::array<Tape::Var, 2> pair = {tape_.gather_rows(projected, idx.dst),
                                           tape_.gather_rows(projected, idx.src)};
    const Tape::Var logits = tape_.leaky_relu(tape_.matmul(tape_.concat(pair, Tape::Axis::kCols), a),
                                              params_.config().leaky_slope);
    Tape::Var alpha = tape_.segment_softmax(logits, idx.dst, n);
    pass_.record.alpha[layer][g].push_back(tape_.value(alpha).data());
    if (options_.training && options_.dropout > 0.0) {
      Matrix mask(idx.src.size(), 1);
      const double keep = 1.0 / (1.0 - options_.dropout);
      for (double& v : mask.data()) v = dropout_rng_.uniform() < options_.dropout ? 0.0 : keep;
      alpha = tape_.dropout(alpha, std::move(mask));
    }
    return tape_.elu(tape_.weighted_neighbor_sum(alpha, projected, idx.src, idx.dst, n));
  }

  template <typename GateFn>
  Tape::Var gated_fusion(std::size_t layer, const std::array<Tape::Var, kRelationCount>& embeddings, GateFn gate) {
    const std::size_t n = input_.features.rows();
    std::array<Tape::Var, kRelationCount> scores;
    for (std::size_t g = 0; g < kRelationCount; ++g) scores[g] = tape_.matmul(embeddings[g], gate(g));
    std::vector<std::size_t> segment(n * kRelationCount);
    std::vector<std::size_t> src(n * kRelationCount);
    std::vector<std::size_t> dst(n * kRelationCount);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t g = 0; g < kRelationCount; ++g) {
        segment[i * kRelationCount + g] = i;
        src[i * kRelationCount + g] = g * n + i;
        dst[i * kRelationCount + g] = i;
      }
    const Tape::Var gamma = tape_.segment_softmax(tape_.concat(scores, Tape::Axis::kCols), segment, n);
    pass_.record.gates[layer] = tape_.value(gamma);
    const Tape::Var stacked = tape_.concat(embeddings, Tape::Axis::kRows);
    return tape_.weighted_neighbor_sum(gamma, stacked, std::move(src), std::move(dst), n);
  }

  const ModelParameters& params_;
  const GraphInput& input_;
  const ForwardOptions& options_;
  ForwardPass& pass_;
  Tape& tape_;
  RngStream dropout_rng_;
  std::array<EdgeIndex, kRelationCount> edges_;
};

}  // namespace

ForwardPass forward(const ModelParameters& params, const GraphInput& input, const ForwardOptions& options) {
  ForwardPass pass;
  ForwardBuilder builder(params, input, options, pass);
  builder.run();
  return pass;
}

std::vector<double> predict(const ModelParameters& params, const GraphInput& input) {
  ForwardPass pass = forward(params, input, ForwardOptions{});
  return pass.tape.value(pass.probabilities).data();
}

double query_loss(const ModelParameters& params, const GraphInput& input, std::size_t true_class, double gamma,
                  const ForwardOptions& options, std::vector<Matrix>* gradients) {
  ForwardOptions opts = options;
  opts.with_gradients = gradients != nullptr;
  ForwardPass pass = forward(params, input, opts);
  if (true_class >= params.config().class_count) throw ShapeError("true class out of range");
  Matrix one_hot(params.config().class_count, 1);
  one_hot(true_class, 0) = 1.0;
  const Tape::Var p = pass.tape.matmul(pass.probabilities, pass.tape.constant(std::move(one_hot)));
  const Tape::Var loss = pass.tape.focal_loss(p, gamma);
  const double value = pass.tape.value(loss)[0];
  if (gradients) {
    pass.tape.backward(loss);
    gradients->clear();
    for (const Tape::Var v : pass.params) gradients->push_back(pass.tape.grad(v));
  }
  return value;
}

}  // namespace mrcgat
