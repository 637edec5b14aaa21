#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mrcgat/matrix.hpp"

namespace mrcgat {

struct ScoredPrediction {
  std::string subject_id;
  std::size_t true_class = 0;
  std::vector<double> probabilities;
};

// Argmax with ties resolved to the lowest class index.
std::size_t predicted_class(std::span<const double> probabilities);

double accuracy(std::span<const ScoredPrediction> predictions);

struct ConfusionMatrix {
  std::vector<std::vector<std::size_t>> counts;  // rows true, columns predicted
  Matrix normalized;                             // rows sum to 1 (0 for empty rows)
};

ConfusionMatrix confusion_matrix(std::span<const ScoredPrediction> predictions, std::size_t class_count);

// Empirical ROC polyline from (0,0) to (1,1). Scores sharing a value cross the
// threshold together, producing one diagonal segment.
struct RocCurve {
  std::vector<double> fpr;
  std::vector<double> tpr;
  std::vector<double> thresholds;  // score at which each point is reached; +inf for (0,0)
};

struct RocResult {
  RocCurve curve;
  double auc = 0.0;
};

// Trapezoidal AUC of the empirical ROC; labels are 1 (positive) or 0.
// Throws UndefinedAucError unless both classes are present.
RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);

// One-vs-rest pooling of every (sample, class) pair into a single ROC.
RocResult micro_roc(std::span<const ScoredPrediction> predictions, std::size_t class_count);
double micro_auc(std::span<const ScoredPrediction> predictions, std::size_t class_count);

struct DeepRocGroup {
  double fpr_lo = 0.0;
  double fpr_hi = 0.0;
  double tpr_lo = 0.0;
  double tpr_hi = 0.0;
  double partial_auc = 0.0;       // integral of r(x) over [fpr_lo, fpr_hi]
  double mean_sensitivity = 0.0;  // partial_auc / delta x
  double mean_specificity = 0.0;  // mean of 1 - r^{-1}(y) over [tpr_lo, tpr_hi]
  double auc_ni = 0.0;
};

// FPR groups [0,1], [0,0.33], [0.33,0.67], [0.67,1].
inline constexpr std::array<std::array<double, 2>, 4> kDeepRocGroups = {
    {{0.0, 1.0}, {0.0, 0.33}, {0.33, 0.67}, {0.67, 1.0}}};

DeepRocGroup deeproc_group(const RocCurve& curve, double fpr_lo, double fpr_hi);
std::vector<DeepRocGroup> deeproc_table(const RocCurve& curve);

struct BinaryTask {
  std::string name;  // e.g. "CN_vs_AD"
  std::size_t negative = 0;
  std::size_t positive = 0;
  RocResult roc;
  std::vector<DeepRocGroup> deeproc;
};

struct MetricsReport {
  std::vector<std::string> class_names;
  std::vector<ScoredPrediction> predictions;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
  std::vector<std::optional<double>> per_class_auc;
  std::optional<double> micro_auc;
  std::vector<BinaryTask> pairs;
};

// Full report; class-pair tasks score p_pos / (p_pos + p_neg) over subjects
// of the two classes and are skipped when either class is absent.
MetricsReport evaluate(std::vector<ScoredPrediction> predictions, const std::vector<std::string>& class_names);

nlohmann::json to_json(const MetricsReport& report);
// `task,fpr,tpr,threshold` rows for per-class, micro and class-pair curves.
std::string roc_points_csv(const MetricsReport& report);

}  // namespace mrcgat
