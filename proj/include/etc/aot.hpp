// Affine optimal transport between concept mixtures. The map z -> A*V_pq*z + b
// is initialized from the Gaussian (Bures) closed form between the moment
// matches of source and destination, then refined by minibatch gradient
// descent on the empirical squared 2-Wasserstein distance with the optimal
// assignment held fixed per batch. The returned map never scores worse than
// the identity or the closed-form start on the held-out evaluation batch.
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "etc/assignment.hpp"
#include "etc/linalg.hpp"
#include "etc/pca.hpp"
#include "etc/tmm.hpp"

namespace etc {

struct AffineMap {
  MatrixXd A;     // d' x d'
  VectorXd b;     // d'
  MatrixXd V_pq;  // destination basis composed with source basis transpose
  std::string source_id;
  std::string dest_id;
};

inline MatrixXd compose_basis(const Basis& src, const Basis& dst) {
  if (src.d() != dst.d())
    throw validation_error("compose_basis: ambient dimensions differ (" +
                           std::to_string(src.d()) + " vs " +
                           std::to_string(dst.d()) + ")");
  return dst.V * src.V.transpose();
}

inline MatrixXd apply_map(const AffineMap& t, const MatrixXd& z) {
  if (t.V_pq.cols() != z.rows())
    throw validation_error("apply_map: sample dimension mismatch");
  if (t.A.cols() != t.V_pq.rows())
    throw validation_error("apply_map: incompatible A and V_pq");
  return (t.A * (t.V_pq * z)).colwise() + t.b;
}

// Exact empirical 2-Wasserstein distance between equal-size point sets under
// uniform weights. Matched squared costs are sorted before summation so the
// result is bit-identical under argument swap.
inline double w2_exact(const MatrixXd& x, const MatrixXd& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw validation_error("w2_exact: point sets must have equal shape");
  const int n = int(x.cols());
  if (n < 1) throw validation_error("w2_exact: empty point sets");
  if (n > 512)
    throw validation_error(
        "w2_exact: n exceeds the exact-assignment budget of 512; subsample "
        "or use a minibatch estimate (no entropic solver is provided)");
  MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost(i, j) = (x.col(i) - y.col(j)).squaredNorm();
  const std::vector<int> row_of_col = solve_assignment(cost);
  std::vector<double> matched(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    matched[std::size_t(j)] = cost(row_of_col[std::size_t(j)], j);
  std::sort(matched.begin(), matched.end());
  double total = 0.0;
  for (double c : matched) total += c;
  return std::sqrt(total / double(n));
}

// Bures-Wasserstein distance between Gaussians.
inline double gaussian_w2(const VectorXd& mu1, const MatrixXd& sigma1,
                          const VectorXd& mu2, const MatrixXd& sigma2) {
  if (sigma1.rows() != sigma1.cols() || sigma2.rows() != sigma2.cols() ||
      sigma1.rows() != sigma2.rows() || mu1.size() != sigma1.rows() ||
      mu2.size() != mu1.size())
    throw validation_error("gaussian_w2: dimension mismatch");
  if (min_eigenvalue(sigma1) <= 0.0 || min_eigenvalue(sigma2) <= 0.0)
    throw validation_error("gaussian_w2: covariance not positive definite");
  const MatrixXd s2h = sym_sqrt(sigma2);
  const MatrixXd cross = sym_sqrt(s2h * sigma1 * s2h);
  double w2sq = (mu1 - mu2).squaredNorm() + sigma1.trace() + sigma2.trace() -
                2.0 * cross.trace();
  if (w2sq < 0.0) w2sq = 0.0;  // fp cancellation near zero
  return std::sqrt(w2sq);
}

// Closed-form Gaussian Monge map matching (mu_s, sigma_s) to (mu_d, sigma_d).
inline std::pair<MatrixXd, VectorXd> gaussian_monge_map(
    const VectorXd& mu_s, const MatrixXd& sigma_s, const VectorXd& mu_d,
    const MatrixXd& sigma_d) {
  const MatrixXd sdh = sym_sqrt(sigma_d);
  const double scale = std::max(1.0, sigma_d.trace());
  const MatrixXd inner_invsqrt =
      sym_inv_sqrt(sdh * sigma_s * sdh, 1e-12 * scale);
  const MatrixXd a = sdh * inner_invsqrt * sdh;
  return {a, mu_d - a * mu_s};
}

struct AotOptions {
  int n_samples = 4096;
  int iters = 200;
  double lr = 0.05;
  std::uint64_t seed = 0;
  int batch = 256;      // assignment batch size during refinement
  int eval_every = 25;  // snapshot cadence for best-map selection
};

inline AffineMap estimate_affine_map(const TMixture& src, const TMixture& dst,
                                     const MatrixXd& v_pq,
                                     const AotOptions& opts = {}) {
  if (v_pq.cols() != src.d_prime || v_pq.rows() != dst.d_prime)
    throw validation_error("estimate_affine_map: V_pq shape mismatch");
  if (opts.n_samples < 8 || opts.batch < 2)
    throw validation_error("estimate_affine_map: sample budget too small");
  const int dp = dst.d_prime;

  // Gaussian closed-form warm start from (proxied) mixture moments, with the
  // source pushed through the basis change first.
  const MixtureMoments ms = mixture_moments(src, /*scale_proxy=*/true);
  const MixtureMoments md = mixture_moments(dst, /*scale_proxy=*/true);
  const VectorXd mu_s = v_pq * ms.mean;
  const MatrixXd sigma_s = v_pq * ms.covariance * v_pq.transpose();
  auto [a0, b0] = gaussian_monge_map(mu_s, sigma_s, md.mean, md.covariance);

  // Sample pools: training pairs plus a held-out evaluation batch.
  const MatrixXd xs = v_pq * sample_mixture(src, opts.n_samples,
                                            derive_seed(opts.seed, 0xA071ULL));
  const MatrixXd yd =
      sample_mixture(dst, opts.n_samples, derive_seed(opts.seed, 0xA072ULL));
  const int eval_n = std::min(256, opts.n_samples);
  const MatrixXd xe =
      v_pq * sample_mixture(src, eval_n, derive_seed(opts.seed, 0xA073ULL));
  const MatrixXd ye =
      sample_mixture(dst, eval_n, derive_seed(opts.seed, 0xA074ULL));

  const auto score = [&](const MatrixXd& a, const VectorXd& b) {
    return w2_exact((a * xe).colwise() + b, ye);
  };

  MatrixXd best_a = MatrixXd::Identity(dp, dp);
  VectorXd best_b = VectorXd::Zero(dp);
  double best_score = score(best_a, best_b);
  if (const double s0 = score(a0, b0); s0 < best_score) {
    best_a = a0;
    best_b = b0;
    best_score = s0;
  }

  // Envelope-theorem refinement: re-solve the batch assignment, then take a
  // gradient step through the fixed quadratic matching cost.
  MatrixXd a = a0;
  VectorXd b = b0;
  Rng rng(derive_seed(opts.seed, 0xA075ULL));
  const int batch = std::min(opts.batch, opts.n_samples);
  MatrixXd xb(dp, batch), yb(dp, batch);
  for (int it = 1; it <= opts.iters; ++it) {
    for (int j = 0; j < batch; ++j) {
      xb.col(j) = xs.col(int(rng.uniform_index(std::uint64_t(opts.n_samples))));
      yb.col(j) = yd.col(int(rng.uniform_index(std::uint64_t(opts.n_samples))));
    }
    const MatrixXd mapped = (a * xb).colwise() + b;
    MatrixXd cost(batch, batch);
    for (int i = 0; i < batch; ++i)
      for (int j = 0; j < batch; ++j)
        cost(i, j) = (mapped.col(i) - yb.col(j)).squaredNorm();
    const std::vector<int> row_of_col = solve_assignment(cost);
    MatrixXd grad_a = MatrixXd::Zero(dp, dp);
    VectorXd grad_b = VectorXd::Zero(dp);
    for (int j = 0; j < batch; ++j) {
      const int i = row_of_col[std::size_t(j)];
      const VectorXd r = mapped.col(i) - yb.col(j);
      grad_a += (2.0 / batch) * r * xb.col(i).transpose();
      grad_b += (2.0 / batch) * r;
    }
    a -= opts.lr * grad_a;
    b -= opts.lr * grad_b;
    if (!a.allFinite() || !b.allFinite())
      throw numerical_error("estimate_affine_map: refinement diverged");
    if (it % opts.eval_every == 0 || it == opts.iters) {
      if (const double s = score(a, b); s < best_score) {
        best_a = a;
        best_b = b;
        best_score = s;
      }
    }
  }

  AffineMap map;
  map.A = best_a;
  map.b = best_b;
  map.V_pq = v_pq;
  return map;
}

struct RescaleInfo {
  std::vector<int> zero_columns;  // mapped columns passed through unscaled
};

// Rescales each mapped column to the corresponding reference column's norm.
inline MatrixXd rescale_norms(const MatrixXd& mapped, const MatrixXd& reference,
                              RescaleInfo* info = nullptr) {
  if (mapped.rows() != reference.rows() || mapped.cols() != reference.cols())
    throw validation_error("rescale_norms: shape mismatch");
  MatrixXd out = mapped;
  for (int j = 0; j < mapped.cols(); ++j) {
    const double ref_norm = reference.col(j).norm();
    if (ref_norm == 0.0)
      throw validation_error("rescale_norms: zero reference norm at column " +
                             std::to_string(j));
    const double map_norm = mapped.col(j).norm();
    if (map_norm == 0.0) {
      if (info) info->zero_columns.push_back(j);
      continue;
    }
    out.col(j) *= ref_norm / map_norm;
  }
  return out;
}

}  // namespace etc
