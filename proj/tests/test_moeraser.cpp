#include <gtest/gtest.h>

#include "etc/moeraser.hpp"
#include "oracles.hpp"

using namespace etc;

namespace {

std::vector<TripletItem> random_batch(int d, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TripletItem> batch;
  for (int i = 0; i < n; ++i)
    batch.push_back({rng.normal_vector(d), rng.normal_vector(d),
                     rng.normal_vector(d)});
  return batch;
}

TEST(Forward, ZeroInitIsExactZero) {
  const MoEraserParams p = init_moeraser(6, 4, 8, 2, 3);
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const auto [out, route] = forward(p, rng.normal_vector(6));
    EXPECT_TRUE((out.array() == 0.0).all());
    EXPECT_EQ(route.size(), 2u);
  }
}

TEST(Forward, ZeroInitKeepsProjectionBitIdentical) {
  const MoEraserParams p = init_moeraser(5, 3, 7, 2, 4);
  Rng rng(10);
  const MatrixXd w = rng.normal_matrix(4, 5);
  for (int t = 0; t < 50; ++t) {
    const VectorXd f = rng.normal_vector(5);
    const auto [out, route] = forward(p, f);
    const VectorXd with_module = w * (out + f);
    const VectorXd without = w * f;
    for (int i = 0; i < 4; ++i)
      EXPECT_EQ(with_module[i], without[i]);  // bit-for-bit
  }
}

TEST(Forward, FullTopKEqualsFullSoftmax) {
  MoEraserParams p = init_moeraser(4, 5, 6, 5, 11);
  Rng rng(12);
  p.gamma.setOnes();  // make the output informative
  const VectorXd f = rng.normal_vector(4);
  const auto [out, route] = forward(p, f);
  const VectorXd logits = p.router * f;
  VectorXd full = (logits.array() - logits.maxCoeff()).exp();
  full /= full.sum();
  ASSERT_EQ(route.size(), 5u);
  for (const auto& r : route) EXPECT_NEAR(r.gate, full[r.expert], 1e-12);
}

TEST(Forward, GatePropertiesAndRoutingStability) {
  const MoEraserParams p = init_moeraser(8, 6, 10, 3, 13);
  Rng rng(14);
  for (int t = 0; t < 50; ++t) {
    const VectorXd f = rng.normal_vector(8);
    const auto [out, route] = forward(p, f);
    double total = 0.0;
    for (const auto& r : route) {
      EXPECT_GT(r.gate, 0.0);
      total += r.gate;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);

    // Scaling logits by c > 0 keeps the same selected set.
    MoEraserParams scaled = p;
    scaled.router *= 3.7;
    const auto [out2, route2] = forward(scaled, f);
    for (std::size_t i = 0; i < route.size(); ++i)
      EXPECT_EQ(route[i].expert, route2[i].expert);
  }
}

TEST(Forward, TieBreaksToLowerIndex) {
  MoEraserParams p = init_moeraser(3, 4, 5, 2, 15);
  p.router.setZero();  // all logits identical
  Rng rng(16);
  const auto [out, route] = forward(p, rng.normal_vector(3));
  ASSERT_EQ(route.size(), 2u);
  EXPECT_EQ(route[0].expert, 0);
  EXPECT_EQ(route[1].expert, 1);
}

TEST(EraseLoss, ClosedFormAtZeroInit) {
  const int d = 6;
  const MoEraserParams p = init_moeraser(d, 4, 8, 2, 17);
  Rng rng(18);
  const MatrixXd w = rng.normal_matrix(5, d);

  // f_map == f_tar: both terms vanish.
  std::vector<TripletItem> batch;
  const VectorXd f = rng.normal_vector(d);
  batch.push_back({f, f, rng.normal_vector(d)});
  EXPECT_DOUBLE_EQ(erase_loss(p, w, batch, 10.0), 0.0);

  // Single item, f_map != f_tar: loss is the projected gap, exactly.
  const VectorXd f_map = rng.normal_vector(d);
  batch[0] = {f, f_map, rng.normal_vector(d)};
  EXPECT_NEAR(erase_loss(p, w, batch, 10.0), (w * (f - f_map)).squaredNorm(),
              1e-12);
}

TEST(Grad, MatchesCentralFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const int d = 8, experts = 4, h = 16, top_k = 2;
    MoEraserParams p = init_moeraser(d, experts, h, top_k, seed);
    // Make every head of the computation active, including the output gate.
    Rng prng(seed + 100);
    p.gamma = prng.normal_vector(d) * 0.5;
    p.beta = prng.normal_vector(d) * 0.1;
    const MatrixXd w = prng.normal_matrix(d, d);
    const auto batch = random_batch(d, 3, seed + 200);
    const double lambda = 10.0;

    const GradientBundle g = grad(p, w, batch, lambda);
    const auto loss = [&] { return erase_loss(p, w, batch, lambda); };

    double worst = 0.0;
    MatrixXd fd;
    oracle::finite_diff_matrix(p.router, loss, fd);
    worst = std::max(worst, oracle::max_rel_error(g.router, fd));
    for (int e = 0; e < experts; ++e) {
      oracle::finite_diff_matrix(p.experts[std::size_t(e)].w_in, loss, fd);
      worst = std::max(worst,
                       oracle::max_rel_error(g.experts[std::size_t(e)].w_in, fd));
      oracle::finite_diff_matrix(p.experts[std::size_t(e)].w_gate, loss, fd);
      worst = std::max(
          worst, oracle::max_rel_error(g.experts[std::size_t(e)].w_gate, fd));
      oracle::finite_diff_matrix(p.experts[std::size_t(e)].w_out, loss, fd);
      worst = std::max(
          worst, oracle::max_rel_error(g.experts[std::size_t(e)].w_out, fd));
    }
    oracle::finite_diff_matrix(p.gamma, loss, fd);
    worst = std::max(worst, oracle::max_rel_error(g.gamma, fd));
    oracle::finite_diff_matrix(p.beta, loss, fd);
    worst = std::max(worst, oracle::max_rel_error(g.beta, fd));

    EXPECT_LT(worst, 1e-4) << "seed " << seed;
  }
}

TEST(Grad, UnselectedExpertsGetExactZero) {
  const int d = 6, experts = 5, h = 8, top_k = 2;
  MoEraserParams p = init_moeraser(d, experts, h, top_k, 31);
  Rng rng(32);
  p.gamma = rng.normal_vector(d);
  const MatrixXd w = rng.normal_matrix(d, d);
  std::vector<TripletItem> batch = random_batch(d, 1, 33);

  const auto [out_tar, route_tar] = forward(p, batch[0].f_tar);
  const auto [out_anc, route_anc] = forward(p, batch[0].f_anc);
  std::vector<bool> touched(std::size_t(experts), false);
  for (const auto& r : route_tar) touched[std::size_t(r.expert)] = true;
  for (const auto& r : route_anc) touched[std::size_t(r.expert)] = true;

  const GradientBundle g = grad(p, w, batch, 5.0);
  for (int e = 0; e < experts; ++e) {
    if (touched[std::size_t(e)]) continue;
    EXPECT_TRUE((g.experts[std::size_t(e)].w_in.array() == 0.0).all());
    EXPECT_TRUE((g.experts[std::size_t(e)].w_gate.array() == 0.0).all());
    EXPECT_TRUE((g.experts[std::size_t(e)].w_out.array() == 0.0).all());
    EXPECT_TRUE((g.router.row(e).array() == 0.0).all());
  }
}

TEST(Grad, LambdaZeroIgnoresAnchors) {
  const int d = 5;
  MoEraserParams p = init_moeraser(d, 3, 6, 2, 41);
  Rng rng(42);
  p.gamma = rng.normal_vector(d);
  const MatrixXd w = rng.normal_matrix(d, d);
  auto batch = random_batch(d, 2, 43);
  const GradientBundle g0 = grad(p, w, batch, 0.0);
  // Perturb anchors; with lambda = 0 gradients must be unchanged.
  for (auto& item : batch) item.f_anc = rng.normal_vector(d);
  const GradientBundle g1 = grad(p, w, batch, 0.0);
  EXPECT_TRUE(g0.router.isApprox(g1.router, 0.0));
  EXPECT_TRUE(g0.gamma.isApprox(g1.gamma, 0.0));
}

TEST(SgdStep, LinearityAndNoOp) {
  const int d = 4;
  const MoEraserParams p = init_moeraser(d, 3, 5, 2, 51);
  const GradientBundle zero = zero_gradient(p);
  const MoEraserParams same = sgd_step(p, zero, 0.5);
  EXPECT_TRUE(same.router.isApprox(p.router, 0.0));

  Rng rng(52);
  GradientBundle g = zero_gradient(p);
  g.router = rng.normal_matrix(3, d);
  g.gamma = rng.normal_vector(d);
  const MoEraserParams twice_small = sgd_step(sgd_step(p, g, 0.1), g, 0.1);
  const MoEraserParams once_big = sgd_step(p, g, 0.2);
  EXPECT_TRUE(twice_small.router.isApprox(once_big.router, 1e-14));
  EXPECT_TRUE(twice_small.gamma.isApprox(once_big.gamma, 1e-14));
}

TEST(SgdStep, SingleStepDescends) {
  const int d = 6;
  const MoEraserParams p0 = init_moeraser(d, 4, 8, 2, 61);
  Rng rng(62);
  const MatrixXd w = rng.normal_matrix(d, d);
  const auto batch = random_batch(d, 1, 63);
  const double before = erase_loss(p0, w, batch, 10.0);
  const GradientBundle g = grad(p0, w, batch, 10.0);
  const MoEraserParams p1 = sgd_step(p0, g, 0.01);
  const double after = erase_loss(p1, w, batch, 10.0);
  EXPECT_LT(after, before);
}

TEST(ExpertLoad, CountingIdentities) {
  const int d = 5, experts = 6, top_k = 3;
  const MoEraserParams p = init_moeraser(d, experts, 7, top_k, 71);
  Rng rng(72);
  const int n = 40;
  MatrixXd inputs = rng.normal_matrix(d, n);
  std::vector<std::string> labels;
  for (int j = 0; j < n; ++j)
    labels.push_back(j % 3 == 0 ? "styles" : (j % 3 == 1 ? "faces" : "things"));
  std::vector<std::string> domains;
  const MatrixXd load = expert_load(p, inputs, labels, &domains);
  ASSERT_EQ(domains.size(), 3u);
  for (int r = 0; r < load.rows(); ++r)
    EXPECT_NEAR(load.row(r).sum(), double(top_k), 1e-12);

  // top_k = E: every entry is 1.
  const MoEraserParams full = init_moeraser(d, experts, 7, experts, 73);
  const MatrixXd all = expert_load(full, inputs, labels);
  EXPECT_TRUE((all.array() - 1.0).abs().maxCoeff() < 1e-12);

  // Single input: exactly top_k entries, all ones.
  const MatrixXd one = expert_load(p, inputs.col(0), {"solo"});
  EXPECT_NEAR(one.sum(), double(top_k), 1e-12);
  EXPECT_DOUBLE_EQ(one.maxCoeff(), 1.0);

  // A listed domain with no inputs yields a zero row.
  const MatrixXd padded =
      expert_load(p, inputs.col(0), {"solo"}, nullptr, {"solo", "empty"});
  EXPECT_TRUE((padded.row(1).array() == 0.0).all());
}

TEST(Validation, ShapeChecks) {
  EXPECT_THROW(init_moeraser(4, 3, 5, 4, 1), validation_error);
  const MoEraserParams p = init_moeraser(4, 3, 5, 2, 1);
  Rng rng(2);
  EXPECT_THROW(forward(p, rng.normal_vector(5)), validation_error);
  EXPECT_THROW(erase_loss(p, rng.normal_matrix(4, 5), random_batch(4, 1, 3),
                          1.0),
               validation_error);
  EXPECT_THROW(sgd_step(p, zero_gradient(init_moeraser(5, 3, 5, 2, 1)), 0.1),
               validation_error);
}

}  // namespace
