// Evaluation: the H0 harmonic score over (erase, preserve) rates, residual
// statistics of a module against its projector, empirical transport
// distances, and expert-load summaries.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "etc/aot.hpp"
#include "etc/moeraser.hpp"
#include "etc/trainer.hpp"

namespace etc {

struct H0Result {
  double value = 0.0;
  bool degenerate = false;  // hit the crs_t = 1 or crs_r = 0 limit
};

// Harmonic mean of (1 - crs_t) and crs_r.
inline H0Result h0_detail(double crs_t, double crs_r) {
  if (!(crs_t >= 0.0) || !(crs_t <= 1.0) || !(crs_r >= 0.0) ||
      !(crs_r <= 1.0))
    throw validation_error("h0: rates must lie in [0, 1]");
  if (crs_t == 1.0 || crs_r == 0.0) return {0.0, true};
  return {2.0 / (1.0 / (1.0 - crs_t) + 1.0 / crs_r), false};
}

inline double h0(double crs_t, double crs_r) {
  return h0_detail(crs_t, crs_r).value;
}

struct EraseReport {
  double target_residual = 0.0;
  double anchor_residual = 0.0;
  double gaussian_residual = 0.0;
  double untrained_target_residual = 0.0;
  double anchor_scale = 0.0;
  double h0_proxy = 0.0;
  double w2_before = 0.0;
  double w2_after = 0.0;
  bool gaussian_flagged = false;  // n_random was zero
  MatrixXd expert_load;           // rows: target, anchor, random
  std::vector<std::string> load_domains;
};

// Residual proxies for erase/preserve quality. The h0 proxy feeds h0() with
//   crs_t ~ remaining fraction of the untrained target-to-map residual,
//   crs_r ~ 1 - anchor drift relative to the anchor's projected magnitude.
// These are machine proxies, not human scores.
inline EraseReport residual_stats(const MoEraserParams& p,
                                  const MatrixXd& w_proj,
                                  const TripletDataset& data, int n_random,
                                  std::uint64_t seed) {
  data.validate();
  p.validate();
  if (w_proj.cols() != data.d())
    throw validation_error("residual_stats: projector dimension mismatch");
  EraseReport rep;
  const int n = data.n();

  double target_sum = 0.0, anchor_sum = 0.0, base_sum = 0.0, scale_sum = 0.0;
  const int w2_n = std::min(n, 256);
  MatrixXd pushed(w_proj.rows(), w2_n), mapped(w_proj.rows(), w2_n),
      plain(w_proj.rows(), w2_n);
  for (int j = 0; j < n; ++j) {
    const VectorXd f_tar = data.f_tar.col(j);
    const VectorXd f_map = data.f_map.col(j);
    const VectorXd f_anc = data.f_anc.col(j);
    const auto [out_tar, rt] = forward(p, f_tar);
    const auto [out_anc, ra] = forward(p, f_anc);
    const VectorXd through = w_proj * (out_tar + f_tar);
    target_sum += (through - w_proj * f_map).norm();
    base_sum += (w_proj * (f_tar - f_map)).norm();
    anchor_sum += (w_proj * out_anc).norm();
    scale_sum += (w_proj * f_anc).norm();
    if (j < w2_n) {
      pushed.col(j) = through;
      mapped.col(j) = w_proj * f_map;
      plain.col(j) = w_proj * f_tar;
    }
  }
  rep.target_residual = target_sum / n;
  rep.anchor_residual = anchor_sum / n;
  rep.untrained_target_residual = base_sum / n;
  rep.anchor_scale = scale_sum / n;
  rep.w2_before = w2_exact(plain, mapped);
  rep.w2_after = w2_exact(pushed, mapped);

  if (n_random > 0) {
    Rng rng(derive_seed(seed, 0x657661ULL));
    double gsum = 0.0;
    for (int j = 0; j < n_random; ++j) {
      const VectorXd eps = rng.normal_vector(data.d());
      const auto [out_eps, re] = forward(p, eps);
      gsum += (w_proj * out_eps).norm();
    }
    rep.gaussian_residual = gsum / n_random;
  } else {
    rep.gaussian_flagged = true;
  }

  const double crs_t_proxy =
      rep.untrained_target_residual > 0.0
          ? std::min(1.0, rep.target_residual / rep.untrained_target_residual)
          : 0.0;
  const double crs_r_proxy =
      rep.anchor_scale > 0.0
          ? 1.0 - std::min(1.0, rep.anchor_residual / rep.anchor_scale)
          : 0.0;
  rep.h0_proxy = h0(crs_t_proxy, crs_r_proxy);

  {
    const int probe = std::min(n, 512);
    const int gcount = n_random > 0 ? probe : 0;
    MatrixXd inputs(data.d(), 2 * probe + gcount);
    std::vector<std::string> labels;
    labels.reserve(std::size_t(2 * probe + gcount));
    for (int j = 0; j < probe; ++j) {
      inputs.col(j) = data.f_tar.col(j);
      labels.emplace_back("target");
    }
    for (int j = 0; j < probe; ++j) {
      inputs.col(probe + j) = data.f_anc.col(j);
      labels.emplace_back("anchor");
    }
    Rng rng(derive_seed(seed, 0x657662ULL));
    for (int j = 0; j < gcount; ++j) {
      inputs.col(2 * probe + j) = rng.normal_vector(data.d());
      labels.emplace_back("random");
    }
    rep.expert_load = expert_load(p, inputs, labels, &rep.load_domains);
  }
  return rep;
}

}  // namespace etc
