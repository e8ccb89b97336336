#pragma once

#include "perflab/common.hpp"

namespace perflab {

/// Minimum-norm least-squares solution and the numerical rank it was computed at.
struct LeastSquaresSolution {
  Vector weights;
  Index rank = 0;
  bool rank_deficient = false;
  double largest_singular_value = 0.0;
  double tolerance = 0.0;
};

/// Pseudoinverse solution argmin ||w|| over argmin ||A w - b||.
///
/// Singular values at or below eps * max(rows, cols) * sigma_max are treated
/// as zero. Tall systems are reduced with a column-pivoted Householder QR first
/// and the SVD is taken of the small triangular factor.
LeastSquaresSolution ols_minimum_norm(const Matrix& design, const Vector& targets);

/// Multi-right-hand-side variant sharing one factorization.
struct LeastSquaresMultiSolution {
  Matrix weights;
  Index rank = 0;
  bool rank_deficient = false;
  double largest_singular_value = 0.0;
  double tolerance = 0.0;
};
LeastSquaresMultiSolution ols_minimum_norm(const Matrix& design, const Matrix& targets);

/// Design matrix with a trailing column of ones.
Matrix with_intercept(const Matrix& x);

/// Unscaled OLS covariance (A^T A)^+ used for analytic standard errors.
Matrix gram_pseudoinverse(const Matrix& design);

}  // namespace perflab
