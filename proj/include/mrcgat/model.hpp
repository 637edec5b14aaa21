#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mrcgat/dataset.hpp"
#include "mrcgat/graph.hpp"
#include "mrcgat/matrix.hpp"
#include "mrcgat/tape.hpp"

namespace mrcgat {

struct ModelConfig {
  std::size_t feature_dim = 0;
  std::size_t class_count = 3;
  bool label_channel = true;
  std::size_t layer1_width = 16;  // per head
  std::size_t layer1_heads = 4;   // concatenated
  std::size_t layer2_width = 32;  // per head
  std::size_t layer2_heads = 2;   // averaged
  std::size_t hidden_width = 32;
  double leaky_slope = 0.2;

  std::size_t input_width() const { return feature_dim + (label_channel ? class_count : 0); }
  std::size_t layer1_output() const { return layer1_width * layer1_heads; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// All trainable tensors, held in a fixed order so that optimizer state,
// gradient buffers and the model file line up by index.
class ModelParameters {
 public:
  ModelParameters() = default;
  // Zero-filled tensors of the right shapes.
  explicit ModelParameters(const ModelConfig& config);

  // Weight matrices uniform in +-sqrt(6 / (fan_in + fan_out)), attention and
  // gate vectors uniform in +-sqrt(6 / length), biases zero.
  static ModelParameters initialize(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t size() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix& tensor(std::size_t i) { return tensors_[i]; }
  const Matrix& tensor(std::size_t i) const { return tensors_[i]; }
  std::vector<Matrix>& tensors() noexcept { return tensors_; }
  const std::vector<Matrix>& tensors() const noexcept { return tensors_; }

  std::size_t layer1_weight(std::size_t relation, std::size_t head) const;
  std::size_t layer1_attention(std::size_t relation, std::size_t head) const;
  std::size_t layer1_gate(std::size_t relation) const;
  std::size_t layer2_weight(std::size_t relation, std::size_t head) const;
  std::size_t layer2_attention(std::size_t relation, std::size_t head) const;
  std::size_t layer2_gate(std::size_t relation) const;
  std::size_t classifier_w1() const { return size() - 4; }
  std::size_t classifier_b1() const { return size() - 3; }
  std::size_t classifier_w2() const { return size() - 2; }
  std::size_t classifier_b2() const { return size() - 1; }

  nlohmann::json to_json() const;
  // Throws SchemaError on version, name or shape mismatch.
  static ModelParameters from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static ModelParameters load(const std::string& path);

  friend bool operator==(const ModelParameters&, const ModelParameters&) = default;

 private:
  std::size_t relation_block() const;
  void add(std::string name, std::size_t rows, std::size_t cols, bool vector);

  ModelConfig config_;
  std::vector<std::string> names_;
  std::vector<Matrix> tensors_;
  std::vector<bool> is_vector_;
};

inline constexpr int kModelFormatVersion = 1;

// Node features plus the three relation graphs of one episode.
struct GraphInput {
  Matrix features;  // N x input_width
  std::array<RelationalGraph, kRelationCount> graphs;
  std::size_t query = 0;
};

// Attention and gate values of one forward pass. alpha[layer][relation][head]
// is aligned with graphs[relation].edges and holds pre-dropout coefficients;
// gates[layer] is N x 3 (columns RF, COG, MRI).
struct AttentionRecord {
  std::array<std::array<std::vector<std::vector<double>>, kRelationCount>, 2> alpha;
  std::array<Matrix, 2> gates;
};

struct ForwardOptions {
  bool training = false;
  double dropout = 0.2;
  // Dropout masks come from this stream when training with dropout > 0.
  std::uint64_t dropout_seed = 0;
  std::uint64_t dropout_stream = 0;
  // Register parameters as differentiable leaves.
  bool with_gradients = false;
};

struct ForwardPass {
  Tape tape;
  std::vector<Tape::Var> params;
  Tape::Var probabilities;  // 1 x C for the query node
  std::array<Tape::Var, 2> fused;  // H1, H2
  AttentionRecord record;
};

// Two relational attention layers with node-wise gated fusion after each,
// then the ReLU MLP head on the query row.
ForwardPass forward(const ModelParameters& params, const GraphInput& input, const ForwardOptions& options);

std::vector<double> predict(const ModelParameters& params, const GraphInput& input);

// Query focal loss; fills `gradients` (one per tensor) when non-null.
double query_loss(const ModelParameters& params, const GraphInput& input, std::size_t true_class, double gamma,
                  const ForwardOptions& options, std::vector<Matrix>* gradients);

}  // namespace mrcgat
