#include "perflab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace perflab {

namespace {

struct SvdFactors {
  Matrix left;      // orthonormal, rows x k (already composed with Q for tall systems)
  Vector singular;  // k
  Matrix right;     // cols x k, in original column order
};

// Thin SVD of `a` such that a = left * diag(singular) * right^T.
SvdFactors thin_svd(const Matrix& a) {
  SvdFactors f;
  const Index rows = a.rows();
  const Index cols = a.cols();
  if (rows >= cols && rows > 4 * cols) {
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    const Matrix r = qr.matrixR().topRows(cols).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Matrix> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    f.singular = svd.singularValues();
    // a P = Q R  =>  a = Q U S V^T P^T
    Matrix thin_q = qr.householderQ() * Matrix::Identity(rows, cols);
    f.left = thin_q * svd.matrixU();
    f.right = qr.colsPermutation() * svd.matrixV();
  } else {
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    f.singular = svd.singularValues();
    f.left = svd.matrixU();
    f.right = svd.matrixV();
  }
  return f;
}

}  // namespace

LeastSquaresMultiSolution ols_minimum_norm(const Matrix& design, const Matrix& targets) {
  if (design.rows() != targets.rows())
    throw DimensionError("design has " + std::to_string(design.rows()) + " rows but targets have " +
                         std::to_string(targets.rows()));
  LeastSquaresMultiSolution out;
  const Index cols = design.cols();
  out.weights = Matrix::Zero(cols, targets.cols());
  if (design.rows() == 0 || cols == 0) {
    out.rank_deficient = cols > 0;
    return out;
  }

  const SvdFactors f = thin_svd(design);
  out.largest_singular_value = f.singular.size() > 0 ? f.singular.maxCoeff() : 0.0;
  out.tolerance = std::numeric_limits<double>::epsilon() *
                  static_cast<double>(std::max(design.rows(), cols)) * out.largest_singular_value;

  Matrix projected = f.left.transpose() * targets;
  for (Index k = 0; k < f.singular.size(); ++k) {
    if (f.singular[k] > out.tolerance && out.largest_singular_value > 0.0) {
      projected.row(k) /= f.singular[k];
      ++out.rank;
    } else {
      projected.row(k).setZero();
    }
  }
  out.weights = f.right * projected;
  out.rank_deficient = out.rank < cols;
  return out;
}

LeastSquaresSolution ols_minimum_norm(const Matrix& design, const Vector& targets) {
  if (design.rows() != targets.size())
    throw DimensionError("design has " + std::to_string(design.rows()) + " rows but targets have " +
                         std::to_string(targets.size()));
  LeastSquaresMultiSolution multi = ols_minimum_norm(design, Matrix(targets));
  LeastSquaresSolution out;
  out.weights = multi.weights.col(0);
  out.rank = multi.rank;
  out.rank_deficient = multi.rank_deficient;
  out.largest_singular_value = multi.largest_singular_value;
  out.tolerance = multi.tolerance;
  return out;
}

Matrix with_intercept(const Matrix& x) {
  Matrix a(x.rows(), x.cols() + 1);
  a.leftCols(x.cols()) = x;
  a.col(x.cols()).setOnes();
  return a;
}

Matrix gram_pseudoinverse(const Matrix& design) {
  const Matrix gram = design.transpose() * design;
  Eigen::JacobiSVD<Matrix> svd(gram, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double tol = std::numeric_limits<double>::epsilon() *
                     static_cast<double>(gram.rows()) * (s.size() ? s[0] : 0.0);
  Vector inv = Vector::Zero(s.size());
  for (Index k = 0; k < s.size(); ++k)
    if (s[k] > tol) inv[k] = 1.0 / s[k];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace perflab
