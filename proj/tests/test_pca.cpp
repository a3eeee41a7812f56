#include <gtest/gtest.h>

#include "etc/pca.hpp"
#include "etc/rng.hpp"

using namespace etc;

namespace {

EmbeddingMatrix random_matrix(int d, int n, std::uint64_t seed) {
  Rng rng(seed);
  return {"c" + std::to_string(seed), rng.normal_matrix(d, n)};
}

TEST(Pca, ExactOneDimensionalSubspace) {
  // Samples on a line in R^3: x = t * (1, 2, -1) + offset.
  Rng rng(2);
  MatrixXd data(3, 40);
  VectorXd dir(3);
  dir << 1, 2, -1;
  VectorXd offset(3);
  offset << 0.5, -1.0, 2.0;
  for (int j = 0; j < 40; ++j) data.col(j) = offset + rng.normal() * dir;
  const Basis b = fit_pca({"line", data}, 1);
  EXPECT_GT(b.explained_variance[0], 0.0);
  const CompressedEmbeddings z = project(b, {"line", data});
  const EmbeddingMatrix back = reconstruct(b, z);
  EXPECT_LT((back.data - data).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Pca, OrthonormalRowsAndSortedVariance) {
  const EmbeddingMatrix x = random_matrix(12, 60, 3);
  const Basis b = fit_pca(x, 5);
  const MatrixXd gram = b.V * b.V.transpose();
  EXPECT_LT((gram - MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-8);
  for (int i = 1; i < 5; ++i)
    EXPECT_LE(b.explained_variance[i], b.explained_variance[i - 1] + 1e-12);
}

TEST(Pca, FullRankRoundTrip) {
  const EmbeddingMatrix x = random_matrix(8, 50, 4);
  const Basis b = fit_pca(x, 8);
  const CompressedEmbeddings z = project(b, x);
  const EmbeddingMatrix back = reconstruct(b, z);
  EXPECT_LT((back.data - x.data).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pca, ProjectionRowVarianceMatchesExplainedVariance) {
  const EmbeddingMatrix x = random_matrix(10, 400, 5);
  const Basis b = fit_pca(x, 6);
  const CompressedEmbeddings z = project(b, x);
  for (int i = 0; i < 6; ++i) {
    const VectorXd row = z.Z.row(i).transpose();
    const double var =
        (row.array() - row.mean()).square().sum() / double(row.size() - 1);
    EXPECT_NEAR(var / b.explained_variance[i], 1.0, 1e-6);
  }
}

TEST(Pca, CenteringMeansProjectToZero) {
  const EmbeddingMatrix x = random_matrix(7, 30, 6);
  const Basis b = fit_pca(x, 3);
  MatrixXd rep = b.mean.replicate(1, 9);
  const CompressedEmbeddings z = project(b, {"rep", rep});
  EXPECT_LT(z.Z.cwiseAbs().maxCoeff(), 1e-9);
  // Z = 0 reconstructs the mean in every column.
  const EmbeddingMatrix back = reconstruct(b, {"zero", MatrixXd::Zero(3, 5)});
  for (int j = 0; j < 5; ++j)
    EXPECT_LT((back.data.col(j) - b.mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pca, PlaneDataErrorMatchesTailEigenvalues) {
  // 3-D data spread over a 2-D plane.
  Rng rng(7);
  MatrixXd plane_basis(3, 2);
  plane_basis << 1, 0, 0, 1, 1, -1;
  MatrixXd coords = rng.normal_matrix(2, 500);
  coords.row(1) *= 0.3;
  EmbeddingMatrix x{"plane", plane_basis * coords};
  const Basis b2 = fit_pca(x, 2);
  const EmbeddingMatrix r2 = reconstruct(b2, project(b2, x));
  EXPECT_LT((r2.data - x.data).cwiseAbs().maxCoeff(), 1e-10);

  const Basis b3 = fit_pca(x, 2);  // full numerical rank here is 2
  const Basis b1 = fit_pca(x, 1);
  const EmbeddingMatrix r1 = reconstruct(b1, project(b1, x));
  const double sq_err = (r1.data - x.data).squaredNorm() / double(x.n() - 1);
  // Dropped mass equals the tail eigenvalue.
  EXPECT_NEAR(sq_err / b3.explained_variance[1], 1.0, 1e-6);
}

TEST(Pca, DimensionChecks) {
  const EmbeddingMatrix x = random_matrix(6, 20, 8);
  EXPECT_THROW(fit_pca(x, 7), validation_error);
  EXPECT_THROW(fit_pca(x, 0), validation_error);
  const Basis b = fit_pca(x, 3);
  const EmbeddingMatrix other = random_matrix(5, 20, 9);
  EXPECT_THROW(project(b, other), validation_error);
  EXPECT_THROW(reconstruct(b, {"bad", MatrixXd::Zero(2, 4)}),
               validation_error);
}

TEST(Pca, ZeroVarianceIsDegenerate) {
  MatrixXd constant = MatrixXd::Ones(4, 10);
  EXPECT_THROW(fit_pca({"const", constant}, 2), degenerate_data_error);
}

TEST(Pca, DeterministicSignConvention) {
  const EmbeddingMatrix x = random_matrix(9, 80, 10);
  const Basis a = fit_pca(x, 4);
  const Basis b = fit_pca(x, 4);
  EXPECT_TRUE(a.V.isApprox(b.V, 0.0));
  for (int i = 0; i < a.V.rows(); ++i) {
    for (int j = 0; j < a.V.cols(); ++j) {
      if (a.V(i, j) != 0.0) {
        EXPECT_GT(a.V(i, j), 0.0);
        break;
      }
    }
  }
}

TEST(Pca, ExplainedVarianceBoundedByTotal) {
  const EmbeddingMatrix x = random_matrix(10, 200, 11);
  const double total = sample_covariance(x.data).trace();
  const Basis b = fit_pca(x, 4);
  EXPECT_LE(b.explained_variance.sum(), total + 1e-9);
  const Basis full = fit_pca(x, 10);
  EXPECT_NEAR(full.explained_variance.sum(), total, 1e-8 * total);
}

TEST(Pca, CompressedRoundTripIsIdentityOnZ) {
  const EmbeddingMatrix x = random_matrix(12, 100, 12);
  const Basis b = fit_pca(x, 5);
  const CompressedEmbeddings z = project(b, x);
  const CompressedEmbeddings z2 = project(b, reconstruct(b, z));
  EXPECT_LT((z2.Z - z.Z).cwiseAbs().maxCoeff(), 1e-8);
}

}  // namespace
