#include "mrcgat/copula.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "mrcgat/errors.hpp"
#include "mrcgat/numeric.hpp"

namespace mrcgat {

Matrix rank_gaussianize(const Matrix& x) {
  const std::size_t n = x.rows();
  if (n < 2) throw DegenerateEpisodeError("rank_gaussianize: need at least 2 samples, got " + std::to_string(n));
  Matrix out(n, x.cols());
  std::vector<std::size_t> order(n);
  for (std::size_t c = 0; c < x.cols(); ++c) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x(a, c) < x(b, c); });
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i + 1;
      while (j < n && x(order[j], c) == x(order[i], c)) ++j;
      const double rank = 0.5 * static_cast<double>(i + j - 1);
      const double z = inv_norm_cdf((rank + 1.0) / static_cast<double>(n + 1));
      for (std::size_t k = i; k < j; ++k) out(order[k], c) = z;
      i = j;
    }
  }
  return out;
}

CopulaReference::CopulaReference(const Matrix& reference) : sorted_columns_(reference.cols()) {
  if (reference.rows() < 1) throw DegenerateEpisodeError("copula reference sample is empty");
  for (std::size_t c = 0; c < reference.cols(); ++c) {
    auto& col = sorted_columns_[c];
    col.resize(reference.rows());
    for (std::size_t r = 0; r < reference.rows(); ++r) col[r] = reference(r, c);
    std::sort(col.begin(), col.end());
  }
}

Matrix CopulaReference::transform(const Matrix& x, const std::vector<bool>& in_reference) const {
  if (x.cols() != sorted_columns_.size()) throw ShapeError("copula reference column count mismatch");
  if (in_reference.size() != x.rows()) throw ShapeError("copula reference flag count mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    const auto& col = sorted_columns_[c];
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double v = x(r, c);
      const auto lo = std::lower_bound(col.begin(), col.end(), v);
      const auto hi = std::upper_bound(lo, col.end(), v);
      const double less = static_cast<double>(lo - col.begin());
      double ties = static_cast<double>(hi - lo);
      double total = static_cast<double>(col.size());
      if (in_reference[r]) {
        ties -= 1.0;
      } else {
        total += 1.0;
      }
      const double rank = less + 0.5 * ties;
      out(r, c) = inv_norm_cdf((rank + 1.0) / (total + 1.0));
    }
  }
  return out;
}

namespace {

Matrix gram(const Matrix& z, double divisor) {
  Matrix s = matmul_tn(z, z);
  s *= 1.0 / divisor;
  return s;
}

double trace(const Matrix& m) {
  double t = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) t += m(i, i);
  return t;
}

}  // namespace

double ledoit_wolf_intensity(const Matrix& z) {
  const std::size_t n = z.rows();
  const std::size_t d = z.cols();
  const Matrix emp = gram(z, static_cast<double>(n));
  const double mu = trace(emp) / static_cast<double>(d);

  double dispersion = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double v = emp(i, j) - (i == j ? mu : 0.0);
      dispersion += v * v;
    }
  if (dispersion <= 0.0) return 1.0;

  double error = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double v = z(k, i) * z(k, j) - emp(i, j);
        error += v * v;
      }
  }
  error /= static_cast<double>(n) * static_cast<double>(n);
  return std::min(error, dispersion) / dispersion;
}

ShrunkCovariance shrink_covariance(const Matrix& z, std::optional<double> lambda, double lambda_floor) {
  const std::size_t n = z.rows();
  const std::size_t d = z.cols();
  if (n < 2) throw DegenerateEpisodeError("shrink_covariance: need at least 2 samples");
  if (lambda && !(*lambda >= 0.0 && *lambda <= 1.0))
    throw ConfigError("shrinkage lambda must lie in [0, 1], got " + std::to_string(*lambda));

  ShrunkCovariance out;
  out.lambda_used = lambda ? *lambda : std::clamp(ledoit_wolf_intensity(z), lambda_floor, 1.0);
  const Matrix s = gram(z, static_cast<double>(n - 1));
  const double target = trace(s) / static_cast<double>(d);
  const double keep = 1.0 - out.lambda_used;
  out.sigma = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.sigma(i, j) = keep * s(i, j);
    out.sigma(i, i) += out.lambda_used * target;
  }
  return out;
}

Matrix mahalanobis_matrix(const Matrix& z, const Matrix& sigma) {
  if (sigma.rows() != z.cols() || sigma.cols() != z.cols())
    throw ShapeError("mahalanobis_matrix: covariance shape does not match feature count");
  const Matrix l = cholesky(sigma);
  const Matrix white = forward_substitute(l, z.transpose());  // d x N
  const std::size_t n = z.rows();
  Matrix dist(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < white.rows(); ++k) {
        const double diff = white(k, i) - white(k, j);
        s += diff * diff;
      }
      dist(i, j) = s;
      dist(j, i) = s;
    }
  }
  return dist;
}

Matrix select_columns(const Matrix& x, const ColumnRange& range) {
  if (range.end > x.cols()) throw ShapeError("select_columns: range exceeds matrix width");
  Matrix out(x.rows(), range.size());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = range.begin; c < range.end; ++c) out(r, c - range.begin) = x(r, c);
  return out;
}

std::array<RelationSimilarity, kRelationCount> relation_similarities(const Matrix& features,
                                                                     const ModalityPartition& partition,
                                                                     std::optional<double> lambda,
                                                                     const Matrix* copula_features) {
  std::array<RelationSimilarity, kRelationCount> out;
  for (std::size_t g = 0; g < kRelationCount; ++g) {
    const ColumnRange& range = partition.range(g);
    out[g].copula = copula_features ? select_columns(*copula_features, range)
                                    : rank_gaussianize(select_columns(features, range));
    out[g].covariance = shrink_covariance(out[g].copula, lambda);
    out[g].distance = mahalanobis_matrix(out[g].copula, out[g].covariance.sigma);
  }
  return out;
}

}  // namespace mrcgat
