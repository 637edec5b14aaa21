#pragma once

#include <span>
#include <vector>

#include "mrcgat/matrix.hpp"

namespace mrcgat {

// Standard normal CDF.
double norm_cdf(double x);

// Standard normal quantile. Acklam's rational approximation followed by one
// Halley step; |norm_cdf(z) - p| stays below 1e-9 across (0, 1).
// Throws DomainError unless 0 < p < 1.
double inv_norm_cdf(double p);

// Lower-triangular Cholesky factor L with A = L L^T.
// Throws NotSpdError on a non-positive pivot or an asymmetric input.
Matrix cholesky(const Matrix& a);

// Solves L Y = B in place of B (forward substitution).
Matrix forward_substitute(const Matrix& lower, const Matrix& b);
// Solves L^T X = Y (back substitution against the transpose of L).
Matrix backward_substitute_transposed(const Matrix& lower, const Matrix& y);

// X with A X = B for symmetric positive-definite A.
Matrix spd_solve(const Matrix& a, const Matrix& b);

std::vector<double> stable_softmax(std::span<const double> v);

}  // namespace mrcgat
