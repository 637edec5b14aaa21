#include "mrcgat/explain.hpp"

#include <cstdio>

#include "mrcgat/rng.hpp"

namespace mrcgat {

EvaluatedEpisode evaluate_episode(const ModelParameters& params, Episode episode, std::size_t id) {
  ForwardOptions opts;
  opts.training = false;
  ForwardPass pass = forward(params, episode.input, opts);
  EvaluatedEpisode out;
  out.id = id;
  out.record = std::move(pass.record);
  out.probabilities = pass.tape.value(pass.probabilities).data();
  out.episode = std::move(episode);
  return out;
}

std::vector<EvaluatedEpisode> explain_episodes(const ModelParameters& params, const Dataset& data,
                                               const TrainingConfig& config, std::size_t count) {
  std::vector<EvaluatedEpisode> out(count);
  parallel_for(count, config.threads, [&](std::size_t e) {
    RngStream rng(config.seed, stream_id(StreamPurpose::kExplain, e));
    out[e] = evaluate_episode(params, sample_episode(data, config.q, rng, config), e);
  });
  return out;
}

namespace {

std::string gating_rows(const std::vector<EvaluatedEpisode>& episodes, bool node_mean) {
  std::string out = "episode,layer,gamma_rf,gamma_cog,gamma_mri\n";
  for (const auto& ep : episodes) {
    for (std::size_t layer = 0; layer < 2; ++layer) {
      const Matrix& gates = ep.record.gates[layer];
      out += std::to_string(ep.id) + "," + std::to_string(layer + 1);
      for (std::size_t g = 0; g < kRelationCount; ++g) {
        double v = 0.0;
        if (node_mean) {
          for (std::size_t i = 0; i < gates.rows(); ++i) v += gates(i, g);
          v /= static_cast<double>(gates.rows());
        } else {
          v = gates(ep.episode.query(), g);
        }
        out += "," + format_double(v);
      }
      out += "\n";
    }
  }
  return out;
}

std::vector<double> head_mean(const std::vector<std::vector<double>>& heads) {
  std::vector<double> mean(heads.front().size(), 0.0);
  for (const auto& h : heads)
    for (std::size_t e = 0; e < mean.size(); ++e) mean[e] += h[e];
  for (double& v : mean) v /= static_cast<double>(heads.size());
  return mean;
}

}  // namespace

std::string gating_csv(const std::vector<EvaluatedEpisode>& episodes) { return gating_rows(episodes, false); }

std::string gating_node_mean_csv(const std::vector<EvaluatedEpisode>& episodes) {
  return gating_rows(episodes, true);
}

nlohmann::json attention_json(const EvaluatedEpisode& ep, const std::vector<std::string>& class_names) {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t i = 0; i < ep.episode.node_count(); ++i) {
    const bool is_query = i == ep.episode.query();
    nlohmann::json node = {{"index", i}, {"subject_id", ep.episode.node_ids[i]}, {"query", is_query}};
    const auto& label = ep.episode.node_labels[i];
    node["class"] = label && *label < class_names.size() ? nlohmann::json(class_names[*label]) : nlohmann::json();
    nodes.push_back(std::move(node));
  }
  nlohmann::json relations = nlohmann::json::object();
  for (std::size_t g = 0; g < kRelationCount; ++g) {
    const auto& edges = ep.episode.input.graphs[g].edges;
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t layer = 0; layer < 2; ++layer) {
      const auto& heads = ep.record.alpha[layer][g];
      const auto mean = head_mean(heads);
      nlohmann::json list = nlohmann::json::array();
      for (std::size_t e = 0; e < edges.size(); ++e) {
        std::vector<double> per_head;
        for (const auto& h : heads) per_head.push_back(h[e]);
        list.push_back({{"src", edges[e].src},
                        {"dst", edges[e].dst},
                        {"fallback", edges[e].fallback},
                        {"alpha_mean", mean[e]},
                        {"alpha_heads", per_head}});
      }
      layers.push_back({{"layer", layer + 1}, {"edges", std::move(list)}});
    }
    relations[kRelationNames[g]] = std::move(layers);
  }
  std::vector<double> probs = ep.probabilities;
  return {{"episode", ep.id}, {"nodes", nodes}, {"relations", relations}, {"query_probabilities", probs}};
}

std::string attention_edge_list(const EvaluatedEpisode& ep) {
  std::string out;
  char buf[160];
  for (std::size_t g = 0; g < kRelationCount; ++g) {
    const auto& edges = ep.episode.input.graphs[g].edges;
    for (std::size_t layer = 0; layer < 2; ++layer) {
      const auto mean = head_mean(ep.record.alpha[layer][g]);
      for (std::size_t e = 0; e < edges.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%s %zu %zu %zu %.6f\n", kRelationNames[g], layer + 1, edges[e].src,
                      edges[e].dst, mean[e]);
        out += buf;
      }
    }
  }
  return out;
}

}  // namespace mrcgat
