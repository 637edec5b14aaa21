#pragma once

#include <array>
#include <optional>
#include <vector>

#include "mrcgat/dataset.hpp"
#include "mrcgat/matrix.hpp"

namespace mrcgat {

inline constexpr double kLambdaFloor = 0.05;

// Column-wise Gaussian copula transform: 0-based ranks r (ties get the mean
// of their tied ranks), u = (r + 1) / (N + 1), output inv_norm_cdf(u).
// Throws DegenerateEpisodeError when N < 2.
Matrix rank_gaussianize(const Matrix& x);

// Copula transform whose ranks are taken against a fixed reference sample
// (for example a whole training split) instead of the rows themselves.
class CopulaReference {
 public:
  explicit CopulaReference(const Matrix& reference);

  // `in_reference[i]` tells whether row i of x is itself one of the reference
  // rows; its own copy is then not counted twice.
  Matrix transform(const Matrix& x, const std::vector<bool>& in_reference) const;

 private:
  std::vector<std::vector<double>> sorted_columns_;
};

struct ShrunkCovariance {
  Matrix sigma;
  double lambda_used = 0.0;
};

// Ledoit-Wolf optimal shrinkage intensity towards (tr(S)/d) I, unclamped, in [0, 1].
double ledoit_wolf_intensity(const Matrix& z);

// (1 - lambda) S + lambda (tr(S)/d) I with S = Z^T Z / (N - 1). With no
// lambda given, the Ledoit-Wolf estimate is used, clamped to [lambda_floor, 1].
ShrunkCovariance shrink_covariance(const Matrix& z, std::optional<double> lambda = std::nullopt,
                                   double lambda_floor = kLambdaFloor);

// Squared Mahalanobis distances D_ij = (z_i - z_j)^T Sigma^{-1} (z_i - z_j),
// evaluated by whitening the rows with the Cholesky factor of Sigma.
Matrix mahalanobis_matrix(const Matrix& z, const Matrix& sigma);

Matrix select_columns(const Matrix& x, const ColumnRange& range);

struct RelationSimilarity {
  Matrix copula;
  ShrunkCovariance covariance;
  Matrix distance;
};

// Copula features, shrunk covariance and distances for every relation.
// `copula_features` overrides the per-episode rank transform when set.
std::array<RelationSimilarity, kRelationCount> relation_similarities(
    const Matrix& features, const ModalityPartition& partition, std::optional<double> lambda,
    const Matrix* copula_features = nullptr);

}  // namespace mrcgat
