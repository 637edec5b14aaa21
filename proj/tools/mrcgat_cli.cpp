#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mrcgat/errors.hpp"
#include "mrcgat/explain.hpp"
#include "mrcgat/trainer.hpp"

namespace fs = std::filesystem;
using namespace mrcgat;

namespace {

std::string flag_name(const std::string& key) {
  if (key == "fold_count") return "folds";
  std::string out = key;
  for (char& c : out)
    if (c == '_') c = '-';
  return out;
}

// Training options shared by every model-facing subcommand.
struct ConfigFlags {
  std::map<std::string, std::string> values;
  std::string config_file;
  std::string classes;

  void attach(CLI::App* app, bool with_classes = true) {
    const TrainingConfig defaults;
    for (const auto& key : config_keys()) {
      const std::string name = key.name;
      auto* opt = app->add_option("--" + flag_name(name), values[name], key.description);
      opt->default_str(config_value(defaults, name));
      opt->type_name("");
    }
    app->add_option("--config", config_file, "flat 'key = value' file; its entries override flags");
    if (with_classes) app->add_option("--classes", classes, "comma-separated class subset, e.g. CN,AD");
  }

  TrainingConfig resolve(const CLI::App* app) const {
    TrainingConfig config;
    if (const char* env = std::getenv("MRCGAT_THREADS"); env && *env) apply_config_value(config, "threads", env);
    for (const auto& key : config_keys()) {
      const std::string name = key.name;
      if (app->count("--" + flag_name(name)) > 0) apply_config_value(config, name, values.at(name));
    }
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw ConfigError("cannot open config file '" + config_file + "'");
      apply_config_file(config, in);
    }
    config.validate();
    return config;
  }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

Dataset load_data(const std::string& path, const std::string& classes) {
  Dataset data = load_csv(path);
  if (!classes.empty()) data = data.filter_classes(split_list(classes));
  return data;
}

void print_config(const std::string& command, const TrainingConfig& config) {
  std::cout << "# mrcgat " << command << "\n" << describe_config(config) << std::flush;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

void save_model(const ModelParameters& params, const Dataset& data, const std::string& path) {
  nlohmann::json j = params.to_json();
  j["class_names"] = data.class_names;
  j["feature_names"] = data.feature_names;
  write_text(path, j.dump(1) + "\n");
}

struct LoadedModel {
  ModelParameters params;
  std::vector<std::string> class_names;
};

LoadedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("model file '" + path + "': " + e.what());
  }
  LoadedModel m{ModelParameters::from_json(j), {}};
  if (j.contains("class_names")) m.class_names = j["class_names"].get<std::vector<std::string>>();
  return m;
}

// Aligns the data's classes with the model's and copies the model's architecture into the config.
Dataset match_model(const LoadedModel& model, Dataset data, TrainingConfig& config) {
  if (!model.class_names.empty() && model.class_names != data.class_names)
    data = data.filter_classes(model.class_names);
  const ModelConfig& mc = model.params.config();
  if (mc.feature_dim != data.feature_count() || mc.class_count != data.class_count())
    throw SchemaError("model expects " + std::to_string(mc.feature_dim) + " features and " +
                      std::to_string(mc.class_count) + " classes");
  config.label_channel = mc.label_channel;
  config.layer1_width = mc.layer1_width;
  config.layer2_width = mc.layer2_width;
  config.hidden_width = mc.hidden_width;
  return data;
}

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> dims;
  for (const auto& item : split_list(text)) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v == 0) throw ConfigError("--dims expects three positive integers, got '" + text + "'");
    dims.push_back(v);
  }
  if (dims.size() != 3) throw ConfigError("--dims expects dRF,dCOG,dMRI");
  return dims;
}

ProgressFn progress_printer(std::size_t iterations) {
  const std::size_t every = std::max<std::size_t>(1, iterations / 10);
  return [every](std::size_t it, double loss) {
    if ((it + 1) % every == 0) std::cerr << "iteration " << it + 1 << " loss " << format_double(loss) << "\n";
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-relational copula graph attention for few-shot diagnosis"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic three-class cohort CSV");
  SynthOptions synth_opts;
  std::string synth_dims = "5,8,20";
  std::string synth_signal = "1,1,1";
  std::string synth_out;
  synth->add_option("--seed", synth_opts.seed, "generator seed")->default_str("7");
  synth->add_option("--n-per-class", synth_opts.n_per_class, "subjects per class")->default_str("50");
  synth->add_option("--dims", synth_dims, "dRF,dCOG,dMRI")->default_str("5,8,20");
  synth->add_option("--separation", synth_opts.separation, "class mean spacing in latent units")->default_str("3");
  synth->add_option("--noise", synth_opts.noise, "latent within-class noise SD")->default_str("1");
  synth->add_option("--signal", synth_signal, "per-relation multiplier of the separation")->default_str("1,1,1");
  synth->add_option("--out", synth_out, "output CSV")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "episodic training on a labeled CSV");
  ConfigFlags train_flags;
  std::string train_data, train_out, train_trace;
  train_cmd->add_option("--data", train_data, "training CSV")->required();
  train_cmd->add_option("--out", train_out, "model JSON to write")->required();
  train_cmd->add_option("--trace", train_trace, "loss trace CSV to write");
  train_flags.attach(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "cross-validated or single-split evaluation");
  ConfigFlags eval_flags;
  std::string eval_data, eval_model, eval_support, eval_report, eval_roc;
  bool eval_no_cv = false;
  eval_cmd->add_option("--data", eval_data, "labeled CSV")->required();
  eval_cmd->add_option("--model", eval_model, "model JSON, used with --no-cv");
  eval_cmd->add_flag("--no-cv", eval_no_cv, "score --data with --model instead of retraining per fold");
  eval_cmd->add_option("--support", eval_support, "support pool CSV for --no-cv (default: --data)");
  eval_cmd->add_option("--report", eval_report, "report JSON to write")->required();
  eval_cmd->add_option("--roc", eval_roc, "ROC points CSV to write");
  eval_flags.attach(eval_cmd);

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "class probabilities for query subjects");
  ConfigFlags infer_flags;
  std::string infer_data, infer_model, infer_support, infer_out;
  infer_cmd->add_option("--data", infer_data, "query CSV (label column may be empty)")->required();
  infer_cmd->add_option("--support", infer_support, "labeled support pool CSV")->required();
  infer_cmd->add_option("--model", infer_model, "model JSON")->required();
  infer_cmd->add_option("--out", infer_out, "predictions CSV (default stdout)");
  infer_flags.attach(infer_cmd);

  // explain
  auto* explain_cmd = app.add_subcommand("explain", "export gating and attention data");
  ConfigFlags explain_flags;
  std::string explain_data, explain_model, explain_dir;
  std::size_t explain_count = 10;
  bool explain_graphs = false;
  explain_cmd->add_option("--data", explain_data, "labeled CSV episodes are drawn from")->required();
  explain_cmd->add_option("--model", explain_model, "model JSON")->required();
  explain_cmd->add_option("--episodes", explain_count, "episodes to export")->default_str("10");
  explain_cmd->add_option("--out-dir", explain_dir, "output directory")->required();
  explain_cmd->add_flag("--graphs", explain_graphs, "also write each episode's thresholded graphs");
  explain_flags.attach(explain_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      const auto dims = parse_dims(synth_dims);
      const auto signal = split_list(synth_signal);
      if (signal.size() != 3) throw ConfigError("--signal expects three values");
      for (std::size_t g = 0; g < 3; ++g) {
        synth_opts.dims[g] = dims[g];
        synth_opts.relation_signal[g] = std::stod(signal[g]);
      }
      std::cout << "# mrcgat synth\nseed = " << synth_opts.seed << "\nn_per_class = " << synth_opts.n_per_class
                << "\ndims = " << synth_dims << "\nseparation = " << format_double(synth_opts.separation)
                << "\nnoise = " << format_double(synth_opts.noise)  << "\nsignal = " << synth_signal << "\n";
      const Dataset data = synth_generate(synth_opts);
      save_csv(data, synth_out);
      std::cout << "wrote " << data.records.size() << " subjects, " << data.class_count() << " classes, "
                << data.feature_count() << " features to " << synth_out << "\n";
    } else if (train_cmd->parsed()) {
      TrainingConfig config = train_flags.resolve(train_cmd);
      print_config("train", config);
      const Dataset data = load_data(train_data, train_flags.classes);
      const TrainResult result = train(data, config, progress_printer(config.iterations));
      save_model(result.params, data, train_out);
      if (!train_trace.empty()) write_text(train_trace, loss_trace_csv(result.loss_trace));
      std::cout << "trained " << config.iterations << " iterations on " << data.records.size()
                << " subjects; model written to " << train_out << "\n";
    } else if (eval_cmd->parsed()) {
      TrainingConfig config = eval_flags.resolve(eval_cmd);
      Dataset data = load_data(eval_data, eval_flags.classes);
      nlohmann::json report;
      if (eval_no_cv) {
        if (eval_model.empty()) throw ConfigError("--no-cv needs --model");
        const LoadedModel model = load_model(eval_model);
        data = match_model(model, std::move(data), config);
        Dataset pool = eval_support.empty() ? data : match_model(model, load_csv(eval_support), config);
        print_config("eval", config);
        std::vector<SubjectRecord> queries;
        for (const auto& r : data.records)
          if (r.label) queries.push_back(r);
        const auto probs = infer(model.params, pool, queries, config);
        std::vector<ScoredPrediction> preds;
        for (std::size_t i = 0; i < queries.size(); ++i)
          preds.push_back({queries[i].subject_id, *queries[i].label, probs[i]});
        const MetricsReport metrics = evaluate(std::move(preds), data.class_names);
        report = to_json(metrics);
        report["mode"] = "single_split";
        if (!eval_roc.empty()) write_text(eval_roc, roc_points_csv(metrics));
        std::cout << "accuracy " << format_double(metrics.accuracy) << "\n";
      } else {
        print_config("eval", config);
        const auto cv = cross_validate(data, config, progress_printer(config.iterations));
        report = to_json(cv);
        if (!eval_roc.empty()) write_text(eval_roc, roc_points_csv(cv.pooled));
        std::cout << "accuracy " << format_double(cv.accuracy_mean) << " +- " << format_double(cv.accuracy_std)
                  << ", micro-AUC " << format_double(cv.micro_auc_mean) << " +- "
                  << format_double(cv.micro_auc_std) << "\n";
      }
      report["config"] = nlohmann::json::object();
      for (const auto& key : config_keys())
        if (std::string(key.name) != "threads") report["config"][key.name] = config_value(config, key.name);
      write_text(eval_report, report.dump(1) + "\n");
    } else if (infer_cmd->parsed()) {
      TrainingConfig config = infer_flags.resolve(infer_cmd);
      const LoadedModel model = load_model(infer_model);
      Dataset pool = match_model(model, load_data(infer_support, infer_flags.classes), config);
      const Dataset queries = load_csv(infer_data);
      print_config("infer", config);
      const auto probs = infer(model.params, pool, queries.records, config);
      std::string out = "subject_id";
      for (const auto& name : pool.class_names) out += ",p_" + name;
      out += ",predicted\n";
      for (std::size_t i = 0; i < probs.size(); ++i) {
        out += queries.records[i].subject_id;
        for (double p : probs[i]) out += "," + format_double(p);
        out += "," + pool.class_names[predicted_class(probs[i])] + "\n";
      }
      if (infer_out.empty()) std::cout << out;
      else write_text(infer_out, out);
    } else if (explain_cmd->parsed()) {
      TrainingConfig config = explain_flags.resolve(explain_cmd);
      const LoadedModel model = load_model(explain_model);
      const Dataset data = match_model(model, load_data(explain_data, explain_flags.classes), config);
      print_config("explain", config);
      const auto episodes = explain_episodes(model.params, data, config, explain_count);
      const fs::path dir(explain_dir);
      fs::create_directories(dir);
      write_text(dir / "gating.csv", gating_csv(episodes));
      write_text(dir / "gating_node_mean.csv", gating_node_mean_csv(episodes));
      for (const auto& ep : episodes) {
        const std::string stem = "episode_" + std::to_string(ep.id);
        write_text(dir / (stem + "_attention.json"), attention_json(ep, data.class_names).dump(1) + "\n");
        write_text(dir / (stem + "_edges.txt"), attention_edge_list(ep));
        if (explain_graphs) write_text(dir / (stem + "_graph.txt"), format_graph_edges(ep.episode.input.graphs));
      }
      std::cout << "wrote " << episodes.size() << " episodes to " << dir.string() << "\n";
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 2;
  } catch (const SamplingError& e) {
    std::cerr << "sampling error: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateEpisodeError& e) {
    std::cerr << "degenerate episode: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
