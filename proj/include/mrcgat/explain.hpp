#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrcgat/model.hpp"
#include "mrcgat/trainer.hpp"

namespace mrcgat {

struct EvaluatedEpisode {
  std::size_t id = 0;
  Episode episode;
  AttentionRecord record;
  std::vector<double> probabilities;
};

// Runs an inference-mode forward pass and keeps its attention record.
EvaluatedEpisode evaluate_episode(const ModelParameters& params, Episode episode, std::size_t id);

// `count` episodes drawn from `data` on the explain streams of `config.seed`,
// each evaluated without dropout.
std::vector<EvaluatedEpisode> explain_episodes(const ModelParameters& params, const Dataset& data,
                                               const TrainingConfig& config, std::size_t count);

// `episode,layer,gamma_rf,gamma_cog,gamma_mri` for the query node, layers 1 and 2.
std::string gating_csv(const std::vector<EvaluatedEpisode>& episodes);
// Same columns, averaged over every node of the episode.
std::string gating_node_mean_csv(const std::vector<EvaluatedEpisode>& episodes);

// Nodes with class and query flag plus, per relation and layer, every edge
// with its head-averaged and per-head attention.
nlohmann::json attention_json(const EvaluatedEpisode& episode, const std::vector<std::string>& class_names);
// `relation layer src dst alpha` per edge, alpha head-averaged with 6 decimals.
std::string attention_edge_list(const EvaluatedEpisode& episode);

}  // namespace mrcgat
