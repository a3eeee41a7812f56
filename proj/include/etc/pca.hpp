// Per-concept PCA compression. The basis is fitted by SVD of the centered
// data matrix (stable when d >> N), with a fixed sign convention so repeated
// fits are bit-identical.
#pragma once

#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "etc/linalg.hpp"
#include "etc/matrix_io.hpp"

namespace etc {

struct Basis {
  std::string concept_id;
  MatrixXd V;                    // d' x d, orthonormal rows
  VectorXd mean;                 // length d
  VectorXd explained_variance;   // length d', nonincreasing

  int d() const { return int(V.cols()); }
  int d_prime() const { return int(V.rows()); }
};

struct CompressedEmbeddings {
  std::string concept_id;
  MatrixXd Z;  // d' x N

  int d_prime() const { return int(Z.rows()); }
  int n() const { return int(Z.cols()); }
};

inline Basis fit_pca(const EmbeddingMatrix& x, int d_prime) {
  x.validate();
  const int d = x.d();
  const int n = x.n();
  if (d_prime < 1 || d_prime > std::min(d, n - 1))
    throw validation_error("d_prime must satisfy 1 <= d' <= min(d, N-1)");

  const VectorXd mean = x.data.rowwise().mean();
  MatrixXd centered = x.data.colwise() - mean;

  Eigen::BDCSVD<MatrixXd> svd(centered, Eigen::ComputeThinU);
  const VectorXd& sv = svd.singularValues();
  if (!(sv[0] > 0.0))
    throw degenerate_data_error("zero-variance data for concept '" +
                                x.concept_id + "'");

  Basis b;
  b.concept_id = x.concept_id;
  b.mean = mean;
  b.V = svd.matrixU().leftCols(d_prime).transpose();
  b.explained_variance.resize(d_prime);
  for (int i = 0; i < d_prime; ++i)
    b.explained_variance[i] = sv[i] * sv[i] / double(n - 1);

  // Sign convention: first nonzero entry of each basis row is positive.
  for (int i = 0; i < d_prime; ++i)
    for (int j = 0; j < d; ++j)
      if (b.V(i, j) != 0.0) {
        if (b.V(i, j) < 0.0) b.V.row(i) = -b.V.row(i);
        break;
      }
  return b;
}

inline CompressedEmbeddings project(const Basis& b, const EmbeddingMatrix& x) {
  if (x.d() != b.d())
    throw validation_error("project: matrix dimension " +
                           std::to_string(x.d()) + " does not match basis " +
                           std::to_string(b.d()));
  return {x.concept_id, b.V * (x.data.colwise() - b.mean)};
}

inline EmbeddingMatrix reconstruct(const Basis& b,
                                   const CompressedEmbeddings& z) {
  if (z.d_prime() != b.d_prime())
    throw validation_error("reconstruct: compressed dimension mismatch");
  EmbeddingMatrix out;
  out.concept_id = z.concept_id;
  out.data = (b.V.transpose() * z.Z).colwise() + b.mean;
  return out;
}

inline MatrixXd reconstruct_columns(const Basis& b, const MatrixXd& z) {
  if (int(z.rows()) != b.d_prime())
    throw validation_error("reconstruct: compressed dimension mismatch");
  return (b.V.transpose() * z).colwise() + b.mean;
}

}  // namespace etc
