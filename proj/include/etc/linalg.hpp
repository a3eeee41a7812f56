// Small dense linear-algebra helpers on top of Eigen.
#pragma once

#include <Eigen/Dense>

#include "etc/errors.hpp"
#include "etc/rng.hpp"

namespace etc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline bool all_finite(const MatrixXd& m) { return m.allFinite(); }

// Symmetric matrix function via eigendecomposition. Eigenvalues below `floor`
// are clamped before applying `fn`, which keeps inverse square roots defined
// on nearly singular inputs.
template <typename Fn>
MatrixXd sym_apply(const MatrixXd& m, Fn fn, double floor = 0.0) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success)
    throw numerical_error("symmetric eigendecomposition failed");
  VectorXd lam = es.eigenvalues();
  for (int i = 0; i < lam.size(); ++i) {
    double v = lam[i] < floor ? floor : lam[i];
    lam[i] = fn(v);
  }
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

inline MatrixXd sym_sqrt(const MatrixXd& m) {
  return sym_apply(m, [](double v) { return std::sqrt(v); }, 0.0);
}

inline MatrixXd sym_inv_sqrt(const MatrixXd& m, double floor = 1e-12) {
  return sym_apply(m, [](double v) { return 1.0 / std::sqrt(v); }, floor);
}

inline double min_eigenvalue(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()),
                                             Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Random matrix with orthonormal columns (rows >= cols).
inline MatrixXd random_orthonormal(int rows, int cols, Rng& rng) {
  if (cols > rows)
    throw validation_error("orthonormal basis needs rows >= cols");
  MatrixXd g = rng.normal_matrix(rows, cols);
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(rows, cols);
  // Fix the sign so the factorization is unique given g.
  MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (int j = 0; j < cols; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

// Column means of a data matrix whose columns are samples.
inline VectorXd column_mean(const MatrixXd& x) {
  return x.rowwise().mean();
}

// Sample covariance (1/(N-1)) of columns-as-samples.
inline MatrixXd sample_covariance(const MatrixXd& x) {
  const auto n = x.cols();
  if (n < 2) throw validation_error("sample covariance needs >= 2 samples");
  MatrixXd centered = x.colwise() - x.rowwise().mean();
  return (centered * centered.transpose()) / double(n - 1);
}

}  // namespace etc
