#include "mrcgat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "mrcgat/errors.hpp"

namespace mrcgat {

std::size_t predicted_class(std::span<const double> probabilities) {
  if (probabilities.empty()) throw ShapeError("predicted_class: empty probability vector");
  std::size_t best = 0;
  for (std::size_t c = 1; c < probabilities.size(); ++c)
    if (probabilities[c] > probabilities[best]) best = c;
  return best;
}

double accuracy(std::span<const ScoredPrediction> predictions) {
  if (predictions.empty()) throw ShapeError("accuracy: no predictions");
  std::size_t correct = 0;
  for (const auto& p : predictions)
    if (predicted_class(p.probabilities) == p.true_class) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

ConfusionMatrix confusion_matrix(std::span<const ScoredPrediction> predictions, std::size_t class_count) {
  if (predictions.empty()) throw ShapeError("confusion_matrix: no predictions");
  ConfusionMatrix cm;
  cm.counts.assign(class_count, std::vector<std::size_t>(class_count, 0));
  for (const auto& p : predictions) ++cm.counts.at(p.true_class).at(predicted_class(p.probabilities));
  cm.normalized = Matrix(class_count, class_count);
  for (std::size_t r = 0; r < class_count; ++r) {
    const std::size_t total = std::accumulate(cm.counts[r].begin(), cm.counts[r].end(), std::size_t{0});
    if (total == 0) continue;
    for (std::size_t c = 0; c < class_count; ++c)
      cm.normalized(r, c) = static_cast<double>(cm.counts[r][c]) / static_cast<double>(total);
  }
  return cm;
}

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: scores and labels differ in length");
  std::size_t positives = 0;
  for (int l : labels) positives += l == 1 ? 1 : 0;
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw UndefinedAucError("roc_auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult out;
  out.curve.fpr.push_back(0.0);
  out.curve.tpr.push_back(0.0);
  out.curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  std::size_t tp = 0;
  std::size_t fp = 0;
  double area = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    const std::size_t prev_tp = tp;
    const std::size_t prev_fp = fp;
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    // Trapezoid in count units; normalized once at the end.
    area += static_cast<double>(fp - prev_fp) * static_cast<double>(tp + prev_tp) * 0.5;
    out.curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(negatives));
    out.curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(positives));
    out.curve.thresholds.push_back(threshold);
  }
  out.auc = area / (static_cast<double>(positives) * static_cast<double>(negatives));
  return out;
}

RocResult micro_roc(std::span<const ScoredPrediction> predictions, std::size_t class_count) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& p : predictions) {
    if (p.probabilities.size() != class_count) throw ShapeError("micro_roc: probability vector has wrong length");
    for (std::size_t c = 0; c < class_count; ++c) {
      scores.push_back(p.probabilities[c]);
      labels.push_back(p.true_class == c ? 1 : 0);
    }
  }
  return roc_auc(scores, labels);
}

double micro_auc(std::span<const ScoredPrediction> predictions, std::size_t class_count) {
  return micro_roc(predictions, class_count).auc;
}

namespace {

struct Point {
  double x;
  double y;
};

// Portion of the polyline between where it first reaches x = lo and where it
// last leaves x = hi.
std::vector<Point> clip_polyline(const RocCurve& curve, double lo, double hi) {
  std::vector<Point> out;
  const std::size_t n = curve.fpr.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    Point a{curve.fpr[i], curve.tpr[i]};
    Point b{curve.fpr[i + 1], curve.tpr[i + 1]};
    if (b.x < lo || a.x > hi) continue;
    if (a.x < lo) a = {lo, a.y + (b.y - a.y) * (lo - a.x) / (b.x - a.x)};
    if (b.x > hi) b = {hi, a.y + (b.y - a.y) * (hi - a.x) / (b.x - a.x)};
    if (out.empty()) out.push_back(a);
    out.push_back(b);
  }
  return out;
}

}  // namespace

DeepRocGroup deeproc_group(const RocCurve& curve, double fpr_lo, double fpr_hi) {
  DeepRocGroup g;
  g.fpr_lo = fpr_lo;
  g.fpr_hi = fpr_hi;
  const std::vector<Point> path = clip_polyline(curve, fpr_lo, fpr_hi);
  if (path.empty()) return g;
  g.tpr_lo = path.front().y;
  g.tpr_hi = path.back().y;

  double area_x = 0.0;  // integral of y dx
  double area_y = 0.0;  // integral of (1 - x) dy
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Point a = path[i];
    const Point b = path[i + 1];
    area_x += (b.x - a.x) * 0.5 * (a.y + b.y);
    area_y += (b.y - a.y) * (1.0 - 0.5 * (a.x + b.x));
  }
  const double dx = fpr_hi - fpr_lo;
  const double dy = g.tpr_hi - g.tpr_lo;
  g.partial_auc = area_x;
  g.mean_sensitivity = dx > 0.0 ? area_x / dx : g.tpr_lo;
  if (dy > 0.0) {
    g.mean_specificity = area_y / dy;
  } else if (g.tpr_lo >= 1.0) {
    // Saturated at TPR = 1: reported as zero specificity.
    g.mean_specificity = 0.0;
  } else {
    // Flat curve: pointwise 1 - r^{-1}(y) with the leftmost x reaching y.
    double x_at = curve.fpr.back();
    for (std::size_t i = 0; i < curve.fpr.size(); ++i)
      if (curve.tpr[i] >= g.tpr_lo) {
        x_at = curve.fpr[i];
        if (i > 0 && curve.tpr[i] > curve.tpr[i - 1]) {
          const double t = (g.tpr_lo - curve.tpr[i - 1]) / (curve.tpr[i] - curve.tpr[i - 1]);
          x_at = curve.fpr[i - 1] + t * (curve.fpr[i] - curve.fpr[i - 1]);
        }
        break;
      }
    g.mean_specificity = 1.0 - x_at;
  }
  g.auc_ni = (dx * g.mean_sensitivity + dy * g.mean_specificity) / (dx + dy);
  return g;
}

std::vector<DeepRocGroup> deeproc_table(const RocCurve& curve) {
  std::vector<DeepRocGroup> out;
  for (const auto& [lo, hi] : kDeepRocGroups) out.push_back(deeproc_group(curve, lo, hi));
  return out;
}

MetricsReport evaluate(std::vector<ScoredPrediction> predictions, const std::vector<std::string>& class_names) {
  MetricsReport r;
  const std::size_t classes = class_names.size();
  r.class_names = class_names;
  r.accuracy = accuracy(predictions);
  r.confusion = confusion_matrix(predictions, classes);

  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& p : predictions) {
      scores.push_back(p.probabilities.at(c));
      labels.push_back(p.true_class == c ? 1 : 0);
    }
    try {
      r.per_class_auc.push_back(roc_auc(scores, labels).auc);
    } catch (const UndefinedAucError&) {
      r.per_class_auc.push_back(std::nullopt);
    }
  }
  try {
    r.micro_auc = micro_auc(predictions, classes);
  } catch (const UndefinedAucError&) {
  }

  for (std::size_t neg = 0; neg < classes; ++neg) {
    for (std::size_t pos = neg + 1; pos < classes; ++pos) {
      std::vector<double> scores;
      std::vector<int> labels;
      for (const auto& p : predictions) {
        if (p.true_class != neg && p.true_class != pos) continue;
        const double total = p.probabilities[neg] + p.probabilities[pos];
        scores.push_back(total > 0.0 ? p.probabilities[pos] / total : 0.5);
        labels.push_back(p.true_class == pos ? 1 : 0);
      }
      BinaryTask task;
      task.name = class_names[neg] + "_vs_" + class_names[pos];
      task.negative = neg;
      task.positive = pos;
      try {
        task.roc = roc_auc(scores, labels);
      } catch (const UndefinedAucError&) {
        continue;
      }
      task.deeproc = deeproc_table(task.roc.curve);
      r.pairs.push_back(std::move(task));
    }
  }
  r.predictions = std::move(predictions);
  return r;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

nlohmann::json matrix_rows(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto span = m.row_span(r);
    rows.push_back(std::vector<double>(span.begin(), span.end()));
  }
  return rows;
}

}  // namespace

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["class_names"] = report.class_names;
  j["n"] = report.predictions.size();
  j["accuracy"] = report.accuracy;
  j["micro_auc"] = optional_json(report.micro_auc);
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t c = 0; c < report.class_names.size(); ++c)
    per_class[report.class_names[c]] = optional_json(report.per_class_auc[c]);
  j["per_class_auc"] = per_class;
  j["confusion"] = {{"counts", report.confusion.counts}, {"normalized", matrix_rows(report.confusion.normalized)}};
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& task : report.pairs) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : task.deeproc) {
      groups.push_back({{"fpr", {g.fpr_lo, g.fpr_hi}},
                        {"tpr", {g.tpr_lo, g.tpr_hi}},
                        {"partial_auc", g.partial_auc},
                        {"mean_sensitivity", g.mean_sensitivity},
                        {"mean_specificity", g.mean_specificity},
                        {"auc_ni", g.auc_ni}});
    }
    pairs.push_back({{"task", task.name},
                     {"negative", report.class_names[task.negative]},
                     {"positive", report.class_names[task.positive]},
                     {"auc", task.roc.auc},
                     {"deeproc", groups}});
  }
  j["deeproc"] = pairs;
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& p : report.predictions) {
    preds.push_back({{"subject_id", p.subject_id},
                     {"true", report.class_names[p.true_class]},
                     {"predicted", report.class_names[predicted_class(p.probabilities)]},
                     {"probabilities", p.probabilities}});
  }
  j["predictions"] = preds;
  return j;
}

std::string roc_points_csv(const MetricsReport& report) {
  std::string out = "task,fpr,tpr,threshold\n";
  char line[160];
  auto emit = [&](const std::string& task, const RocCurve& curve) {
    for (std::size_t i = 0; i < curve.fpr.size(); ++i) {
      std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g\n", task.c_str(), curve.fpr[i], curve.tpr[i],
                    curve.thresholds[i]);
      out += line;
    }
  };
  const std::size_t classes = report.class_names.size();
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& p : report.predictions) {
      scores.push_back(p.probabilities[c]);
      labels.push_back(p.true_class == c ? 1 : 0);
    }
    try {
      emit(report.class_names[c] + "_vs_rest", roc_auc(scores, labels).curve);
    } catch (const UndefinedAucError&) {
    }
  }
  try {
    emit("micro", micro_roc(report.predictions, classes).curve);
  } catch (const UndefinedAucError&) {
  }
  for (const auto& task : report.pairs) emit(task.name, task.roc.curve);
  return out;
}

}  // namespace mrcgat
