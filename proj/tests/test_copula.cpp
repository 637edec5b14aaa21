#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mrcgat/copula.hpp"
#include "mrcgat/errors.hpp"
#include "mrcgat/numeric.hpp"
#include "mrcgat/rng.hpp"

using namespace mrcgat;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.normal();
  return m;
}

// Cyclic Jacobi rotations; returns the eigenvalues of a symmetric matrix.
std::vector<double> jacobi_eigenvalues(Matrix a) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  return ev;
}

// Gauss-Jordan inverse; only for the oracle.
Matrix invert(Matrix a) {
  const std::size_t n = a.rows();
  Matrix inv = Matrix::identity(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    for (std::size_t k = 0; k < n; ++k) {
      std::swap(a(c, k), a(piv, k));
      std::swap(inv(c, k), inv(piv, k));
    }
    const double d = a(c, c);
    for (std::size_t k = 0; k < n; ++k) {
      a(c, k) /= d;
      inv(c, k) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      for (std::size_t k = 0; k < n; ++k) {
        a(r, k) -= f * a(c, k);
        inv(r, k) -= f * inv(c, k);
      }
    }
  }
  return inv;
}

double normal_cdf_oracle(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("rank gaussianize examples") {
  const Matrix z = rank_gaussianize(Matrix{{10.0}, {20.0}, {30.0}});
  CHECK(z(0, 0) == doctest::Approx(-0.6744897501960817).epsilon(1e-12));
  CHECK(z(1, 0) == 0.0);
  CHECK(z(2, 0) == -z(0, 0));
  const Matrix tied = rank_gaussianize(Matrix{{5.0}, {5.0}});
  CHECK(tied(0, 0) == 0.0);
  CHECK(tied(1, 0) == 0.0);
  // ranks of (3, 1, 3, 2): 1 -> 0, 2 -> 1, both 3s -> 2.5
  const Matrix mixed = rank_gaussianize(Matrix{{3.0}, {1.0}, {3.0}, {2.0}});
  CHECK(mixed(0, 0) == inv_norm_cdf(3.5 / 5.0));
  CHECK(mixed(2, 0) == mixed(0, 0));
  CHECK(mixed(1, 0) == inv_norm_cdf(0.2));
  CHECK_THROWS_AS(rank_gaussianize(Matrix(1, 3)), DegenerateEpisodeError);
}

TEST_CASE("copula marginals at N=500") {
  RngStream rng(11, 0);
  Matrix x(500, 3);
  for (std::size_t i = 0; i < 500; ++i) {
    x(i, 0) = rng.uniform();
    x(i, 1) = std::exp(3.0 * rng.normal());
    x(i, 2) = static_cast<double>(i) * 0.5 - 7.0;
  }
  const Matrix z = rank_gaussianize(x);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> col(500);
    for (std::size_t i = 0; i < 500; ++i) col[i] = z(i, c);
    double mean = 0.0;
    for (double v : col) mean += v;
    CHECK(std::abs(mean / 500.0) <= 1e-9);
    std::sort(col.begin(), col.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < col.size(); ++i) {
      const double f = normal_cdf_oracle(col[i]);
      ks = std::max({ks, std::abs(f - static_cast<double>(i) / 500.0), std::abs(f - static_cast<double>(i + 1) / 500.0)});
    }
    CHECK(ks <= 0.08);
  }
  Matrix y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::atan(3.0 * y[i]) + 2.0 * y[i];
  CHECK(rank_gaussianize(y) == z);
  Matrix scaled = x;
  for (std::size_t i = 0; i < 500; ++i) scaled(i, 1) *= 17.25;
  CHECK(rank_gaussianize(scaled) == z);
}

TEST_CASE("split-scope copula against a reference") {
  const Matrix ref{{1.0}, {2.0}, {3.0}, {4.0}};
  const CopulaReference cr(ref);
  // Reference rows themselves reproduce the plain transform.
  CHECK(cr.transform(ref, {true, true, true, true}) == rank_gaussianize(ref));
  // An outside value between 2 and 3 joins the sample: rank 2 of N=5.
  const Matrix out = cr.transform(Matrix{{2.5}}, {false});
  CHECK(out(0, 0) == doctest::Approx(inv_norm_cdf(3.0 / 6.0)));
  // Tie with a reference value shares its rank.
  const Matrix tie = cr.transform(Matrix{{3.0}}, {false});
  CHECK(tie(0, 0) == doctest::Approx(inv_norm_cdf(3.5 / 6.0)));
}

TEST_CASE("shrinkage") {
  RngStream rng(3, 1);
  const Matrix z = rank_gaussianize(random_matrix(12, 5, rng));
  const ShrunkCovariance full = shrink_covariance(z, 1.0);
  const Matrix s = matmul_tn(z, z) * (1.0 / 11.0);
  double tr = 0.0;
  for (std::size_t i = 0; i < 5; ++i) tr += s(i, i);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(full.sigma(i, j) == (i == j ? tr / 5.0 : 0.0));
  CHECK(shrink_covariance(z, 0.0).sigma == s);
  CHECK_THROWS_AS(shrink_covariance(z, 1.5), ConfigError);

  // N=4, d=6, lambda 0.05: rank-deficient S still gives a PD estimate.
  const Matrix small = random_matrix(4, 6, rng);
  const ShrunkCovariance sc = shrink_covariance(small, 0.05);
  const Matrix ss = matmul_tn(small, small) * (1.0 / 3.0);
  double tr6 = 0.0;
  for (std::size_t i = 0; i < 6; ++i) tr6 += ss(i, i);
  const auto ev = jacobi_eigenvalues(sc.sigma);
  CHECK(*std::min_element(ev.begin(), ev.end()) >= 0.05 * tr6 / 6.0 - 1e-12);
}

TEST_CASE("ledoit-wolf intensity matches a per-sample oracle") {
  RngStream rng(4, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + trial;
    const std::size_t d = 2 + trial % 7;
    const Matrix z = random_matrix(n, d, rng);
    const Matrix emp = matmul_tn(z, z) * (1.0 / static_cast<double>(n));
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += emp(i, i);
    mu /= static_cast<double>(d);
    double delta = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double v = emp(i, j) - (i == j ? mu : 0.0);
        delta += v * v;
      }
    double beta = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          const double v = z(k, i) * z(k, j) - emp(i, j);
          beta += v * v;
        }
    beta /= static_cast<double>(n * n);
    const double expected = std::min(beta, delta) / delta;
    CHECK(ledoit_wolf_intensity(z) == doctest::Approx(expected).epsilon(1e-10));
    const double used = shrink_covariance(z).lambda_used;
    CHECK(used == doctest::Approx(std::clamp(expected, 0.05, 1.0)).epsilon(1e-10));
  }
}

TEST_CASE("mahalanobis distances") {
  const Matrix two = mahalanobis_matrix(Matrix{{1.0, 0.0}, {0.0, 1.0}}, Matrix::identity(2));
  CHECK(two(0, 1) == doctest::Approx(2.0));
  CHECK(two(0, 0) == 0.0);
  const Matrix diag = mahalanobis_matrix(Matrix{{2.0, 0.0}, {0.0, 0.0}}, Matrix{{4.0, 0.0}, {0.0, 1.0}});
  CHECK(diag(0, 1) == doctest::Approx(1.0));

  RngStream rng(9, 9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + trial % 9;
    const std::size_t d = 1 + trial % 6;
    const Matrix z = random_matrix(n, d, rng);
    const Matrix a = random_matrix(d, d, rng);
    Matrix sigma = matmul_nt(a, a);
    for (std::size_t i = 0; i < d; ++i) sigma(i, i) += 0.5;
    const Matrix inv = invert(sigma);
    const Matrix dist = mahalanobis_matrix(z, sigma);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double q = 0.0;
        for (std::size_t r = 0; r < d; ++r)
          for (std::size_t c = 0; c < d; ++c) q += (z(i, r) - z(j, r)) * inv(r, c) * (z(i, c) - z(j, c));
        worst = std::max(worst, std::abs(q - dist(i, j)));
      }
    CHECK(worst <= 1e-8);
    const Matrix eu = mahalanobis_matrix(z, Matrix::identity(d));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += (z(i, c) - z(j, c)) * (z(i, c) - z(j, c));
        CHECK(std::abs(eu(i, j) - s) <= 1e-9);
      }
  }
  CHECK_THROWS_AS(mahalanobis_matrix(Matrix(2, 2), Matrix{{1.0, 2.0}, {2.0, 1.0}}), NotSpdError);
}

TEST_CASE("relation similarities per partition") {
  RngStream rng(2, 2);
  const Matrix x = random_matrix(9, 6, rng);
  const auto part = ModalityPartition::from_dims(1, 2, 3);
  const auto sims = relation_similarities(x, part, std::nullopt);
  for (std::size_t g = 0; g < 3; ++g) {
    CHECK(sims[g].copula == rank_gaussianize(select_columns(x, part.range(g))));
    CHECK(sims[g].distance.rows() == 9);
    CHECK(sims[g].covariance.lambda_used >= 0.05);
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(sims[g].distance(i, i) == 0.0);
      for (std::size_t j = 0; j < 9; ++j) {
        CHECK(sims[g].distance(i, j) >= 0.0);
        CHECK(sims[g].distance(i, j) == sims[g].distance(j, i));
      }
    }
  }
}
