#include <gtest/gtest.h>

#include "etc/aot.hpp"
#include "etc/pca.hpp"
#include "etc/rng.hpp"
#include "oracles.hpp"

using namespace etc;

namespace {

Basis random_basis(int d, int dp, std::uint64_t seed, const std::string& id) {
  Rng rng(seed);
  Basis b;
  b.concept_id = id;
  b.V = random_orthonormal(d, dp, rng).transpose();
  b.mean = rng.normal_vector(d);
  b.explained_variance = VectorXd::Ones(dp);
  return b;
}

TMixture gaussian_like(const VectorXd& mean, const MatrixXd& cov) {
  TMixture m;
  m.d_prime = int(mean.size());
  m.components.push_back({1.0, mean, cov, 1e6});
  return m;
}

MatrixXd random_spd(int d, Rng& rng, double lo = 0.5, double hi = 2.0) {
  const MatrixXd q = random_orthonormal(d, d, rng);
  VectorXd lam(d);
  for (int i = 0; i < d; ++i) lam[i] = rng.uniform(lo, hi);
  return q * lam.asDiagonal() * q.transpose();
}

TEST(ComposeBasis, SameBasisGivesIdentity) {
  const Basis b = random_basis(10, 4, 1, "a");
  const MatrixXd v = compose_basis(b, b);
  EXPECT_LT((v - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ComposeBasis, OperatorNormAtMostOne) {
  for (std::uint64_t seed = 2; seed < 8; ++seed) {
    const Basis src = random_basis(12, 5, seed, "s");
    const Basis dst = random_basis(12, 5, seed + 100, "d");
    const MatrixXd v = compose_basis(src, dst);
    Eigen::BDCSVD<MatrixXd> svd(v);
    EXPECT_LE(svd.singularValues()[0], 1.0 + 1e-8);
  }
}

TEST(ComposeBasis, AmbientMismatchRejected) {
  const Basis a = random_basis(10, 4, 1, "a");
  const Basis b = random_basis(11, 4, 2, "b");
  EXPECT_THROW(compose_basis(a, b), validation_error);
}

TEST(W2Exact, BaseCases) {
  Rng rng(3);
  const MatrixXd x = rng.normal_matrix(4, 20);
  EXPECT_DOUBLE_EQ(w2_exact(x, x), 0.0);

  VectorXd shift(4);
  shift << 1, -2, 0.5, 3;
  MatrixXd y = x.colwise() + shift;
  EXPECT_NEAR(w2_exact(x, y), shift.norm(), 1e-12);

  MatrixXd a(1, 3), b(1, 3);
  a << 0, 1, 2;
  b << 0.5, 1.5, 2.5;
  EXPECT_NEAR(w2_exact(a, b), 0.5, 1e-12);
}

TEST(W2Exact, MatchesBruteForce) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + int(rng.uniform_index(5));  // 2..6
    const int d = 1 + int(rng.uniform_index(3));
    const MatrixXd x = rng.normal_matrix(d, n);
    const MatrixXd y = rng.normal_matrix(d, n);
    EXPECT_NEAR(w2_exact(x, y), oracle::w2_bruteforce(x, y), 1e-12);
  }
}

TEST(W2Exact, MetricProperties) {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 8, d = 3;
    const MatrixXd x = rng.normal_matrix(d, n);
    const MatrixXd y = rng.normal_matrix(d, n);
    const MatrixXd z = rng.normal_matrix(d, n);
    EXPECT_EQ(w2_exact(x, y), w2_exact(y, x));  // bit-exact symmetry
    EXPECT_LE(w2_exact(x, z), w2_exact(x, y) + w2_exact(y, z) + 1e-9);
  }
}

TEST(W2Exact, BudgetEnforced) {
  const MatrixXd big = MatrixXd::Zero(2, 513);
  EXPECT_THROW(w2_exact(big, big), validation_error);
}

TEST(GaussianW2, ClosedForms) {
  const MatrixXd i1 = MatrixXd::Identity(3, 3);
  EXPECT_NEAR(gaussian_w2(VectorXd::Zero(3), i1, VectorXd::Zero(3), i1), 0.0,
              1e-9);

  VectorXd mu1(1), mu2(1);
  mu1 << 0;
  mu2 << 2;
  MatrixXd s1(1, 1), s2(1, 1);
  s1 << 1;
  s2 << 4;
  EXPECT_NEAR(gaussian_w2(mu1, s1, mu2, s2), std::sqrt(5.0), 1e-12);

  // Commuting (diagonal) case.
  Rng rng(6);
  VectorXd l1(4), l2(4), m1(4), m2(4);
  for (int i = 0; i < 4; ++i) {
    l1[i] = rng.uniform(0.2, 3.0);
    l2[i] = rng.uniform(0.2, 3.0);
    m1[i] = rng.normal();
    m2[i] = rng.normal();
  }
  double expected = (m1 - m2).squaredNorm();
  for (int i = 0; i < 4; ++i)
    expected += (std::sqrt(l1[i]) - std::sqrt(l2[i])) *
                (std::sqrt(l1[i]) - std::sqrt(l2[i]));
  EXPECT_NEAR(gaussian_w2(m1, MatrixXd(l1.asDiagonal()), m2,
                          MatrixXd(l2.asDiagonal())),
              std::sqrt(expected), 1e-10);
}

TEST(GaussianW2, RejectsNonPd) {
  MatrixXd bad = MatrixXd::Identity(2, 2);
  bad(1, 1) = -0.5;
  EXPECT_THROW(
      gaussian_w2(VectorXd::Zero(2), bad, VectorXd::Zero(2),
                  MatrixXd::Identity(2, 2)),
      validation_error);
}

TEST(ApplyMap, DefinitionAndAffinity) {
  Rng rng(7);
  AffineMap t;
  t.A = rng.normal_matrix(4, 4);
  t.b = rng.normal_vector(4);
  t.V_pq = random_orthonormal(4, 4, rng);

  const VectorXd z = rng.normal_vector(4);
  const MatrixXd out = apply_map(t, z);
  EXPECT_LT((out.col(0) - (t.A * t.V_pq * z + t.b)).norm(), 1e-12);

  // Midpoint of maps equals map of midpoint.
  for (int trial = 0; trial < 100; ++trial) {
    const VectorXd z1 = rng.normal_vector(4);
    const VectorXd z2 = rng.normal_vector(4);
    const VectorXd mid = 0.5 * (z1 + z2);
    const VectorXd lhs = apply_map(t, MatrixXd(mid)).col(0);
    const VectorXd rhs = 0.5 * (apply_map(t, MatrixXd(z1)).col(0) +
                                apply_map(t, MatrixXd(z2)).col(0));
    EXPECT_LT((lhs - rhs).norm(), 1e-12);
  }

  AffineMap identity;
  identity.A = MatrixXd::Identity(4, 4);
  identity.b = VectorXd::Zero(4);
  identity.V_pq = MatrixXd::Identity(4, 4);
  const MatrixXd pts = rng.normal_matrix(4, 9);
  EXPECT_TRUE(apply_map(identity, pts).isApprox(pts, 0.0));

  EXPECT_THROW(apply_map(t, MatrixXd::Zero(5, 2)), validation_error);
}

TEST(RescaleNorms, ColumnBehavior) {
  Rng rng(8);
  const MatrixXd ref = rng.normal_matrix(5, 12);
  EXPECT_TRUE(rescale_norms(ref, ref).isApprox(ref, 0.0));
  EXPECT_TRUE(rescale_norms(2.0 * ref, ref).isApprox(ref, 1e-14));

  const MatrixXd mapped = rng.normal_matrix(5, 12);
  const MatrixXd out = rescale_norms(mapped, ref);
  for (int j = 0; j < 12; ++j)
    EXPECT_NEAR(out.col(j).norm(), ref.col(j).norm(), 1e-10);

  MatrixXd with_zero = mapped;
  with_zero.col(3).setZero();
  RescaleInfo info;
  const MatrixXd passed = rescale_norms(with_zero, ref, &info);
  ASSERT_EQ(info.zero_columns.size(), 1u);
  EXPECT_EQ(info.zero_columns[0], 3);
  EXPECT_TRUE(passed.col(3).isZero());

  MatrixXd zero_ref = ref;
  zero_ref.col(0).setZero();
  EXPECT_THROW(rescale_norms(mapped, zero_ref), validation_error);
  EXPECT_THROW(rescale_norms(mapped, ref.leftCols(5)), validation_error);
}

TEST(EstimateMap, IdentityTransport) {
  Rng rng(9);
  TMixture m;
  m.d_prime = 3;
  for (int i = 0; i < 2; ++i) {
    MatrixXd g = rng.normal_matrix(3, 3);
    m.components.push_back({0.5, rng.normal_vector(3),
                            MatrixXd(g * g.transpose() +
                                     MatrixXd::Identity(3, 3)),
                            2.0});
  }
  AotOptions opts;
  opts.n_samples = 4096;
  opts.iters = 100;
  opts.lr = 0.02;
  opts.seed = 11;
  const AffineMap t =
      estimate_affine_map(m, m, MatrixXd::Identity(3, 3), opts);
  EXPECT_LE((t.A - MatrixXd::Identity(3, 3)).norm() + t.b.norm(), 0.1);
  // Pushforward of fresh samples stays close to fresh destination samples.
  const MatrixXd xs = sample_mixture(m, 256, 555);
  const MatrixXd yd = sample_mixture(m, 256, 556);
  const double w_map = w2_exact(apply_map(t, xs), yd);
  const double w_null = w2_exact(xs, yd);
  EXPECT_LE(w_map, w_null * 1.05);
}

TEST(EstimateMap, OneDimensionalMongeMap) {
  VectorXd mu1(1), mu2(1);
  mu1 << 0;
  mu2 << 2;
  MatrixXd s1(1, 1), s2(1, 1);
  s1 << 1;
  s2 << 4;
  const TMixture src = gaussian_like(mu1, s1);
  const TMixture dst = gaussian_like(mu2, s2);
  AotOptions opts;
  opts.n_samples = 4096;
  opts.iters = 120;
  opts.lr = 0.02;
  opts.seed = 21;
  const AffineMap t =
      estimate_affine_map(src, dst, MatrixXd::Identity(1, 1), opts);
  EXPECT_NEAR(t.A(0, 0), 2.0, 0.05);
  EXPECT_NEAR(t.b(0), 2.0, 0.05);
}

TEST(EstimateMap, RecoversBuresMapOnGaussianPairs) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 37);
    const int d = 2 + int(rng.uniform_index(7));  // 2..8
    const VectorXd mu1 = rng.normal_vector(d);
    const VectorXd mu2 = mu1 + 8.0 * rng.normal_vector(d).normalized() +
                         rng.normal_vector(d);
    const MatrixXd s1 = random_spd(d, rng);
    const MatrixXd s2 = random_spd(d, rng);
    const TMixture src = gaussian_like(mu1, s1);
    const TMixture dst = gaussian_like(mu2, s2);

    AotOptions opts;
    opts.n_samples = 4096;
    opts.iters = 150;
    opts.lr = 0.01;
    opts.seed = seed;
    const AffineMap t =
        estimate_affine_map(src, dst, MatrixXd::Identity(d, d), opts);

    const auto [a_star, b_star] = gaussian_monge_map(mu1, s1, mu2, s2);
    EXPECT_LT((t.A - a_star).norm() / a_star.norm(), 0.05) << "seed " << seed;

    // Empirical transport cost of the estimated map vs the closed form.
    const MatrixXd xs = sample_mixture(src, 512, seed + 900);
    const MatrixXd yd = sample_mixture(dst, 512, seed + 901);
    const double w_emp = w2_exact(apply_map(t, xs), yd);
    const double w_true = gaussian_w2(mu1, s1, mu2, s2);
    EXPECT_NEAR(w_emp / w_true, 1.0, 0.05) << "seed " << seed;
  }
}

TEST(EstimateMap, NeverWorseThanInitOrIdentityOnEvalBatch) {
  for (std::uint64_t seed = 10; seed < 16; ++seed) {
    Rng rng(seed);
    const int d = 3;
    TMixture src, dst;
    src.d_prime = dst.d_prime = d;
    for (int i = 0; i < 2; ++i) {
      MatrixXd g1 = rng.normal_matrix(d, d);
      MatrixXd g2 = rng.normal_matrix(d, d);
      src.components.push_back(
          {0.5, 2.0 * rng.normal_vector(d),
           MatrixXd(g1 * g1.transpose() + MatrixXd::Identity(d, d)), 2.0});
      dst.components.push_back(
          {0.5, 2.0 * rng.normal_vector(d) + VectorXd::Constant(d, 4.0),
           MatrixXd(g2 * g2.transpose() + MatrixXd::Identity(d, d)), 2.0});
    }
    AotOptions opts;
    opts.n_samples = 2048;
    opts.iters = 80;
    opts.lr = 0.02;
    opts.seed = seed;
    const MatrixXd v = MatrixXd::Identity(d, d);
    const AffineMap t = estimate_affine_map(src, dst, v, opts);

    // Rebuild the internal held-out evaluation batch.
    const int eval_n = std::min(256, opts.n_samples);
    const MatrixXd xe =
        v * sample_mixture(src, eval_n, derive_seed(opts.seed, 0xA073ULL));
    const MatrixXd ye =
        sample_mixture(dst, eval_n, derive_seed(opts.seed, 0xA074ULL));
    const double w_est = w2_exact((t.A * xe).colwise() + t.b, ye);
    const double w_identity = w2_exact(xe, ye);

    const MixtureMoments ms = mixture_moments(src, true);
    const MixtureMoments md = mixture_moments(dst, true);
    const auto [a0, b0] = gaussian_monge_map(ms.mean, ms.covariance, md.mean,
                                             md.covariance);
    const double w_init = w2_exact((a0 * xe).colwise() + b0, ye);

    EXPECT_LE(w_est, w_identity + 1e-12) << "seed " << seed;
    EXPECT_LE(w_est, w_init + 1e-12) << "seed " << seed;
  }
}

}  // namespace
