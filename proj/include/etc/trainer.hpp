// Triplet dataset assembly (high-region targets, low-region anchors,
// transported mapping embeddings, all reconstructed to ambient space) and the
// minibatch SGD loop over the erasure loss.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "etc/aot.hpp"
#include "etc/moeraser.hpp"
#include "etc/pca.hpp"
#include "etc/tmm.hpp"

namespace etc {

struct TripletProvenance {
  std::string target_id;
  std::vector<std::string> mapping_ids;
  double tau1 = 0.0;
  std::uint64_t seed = 0;
};

struct TripletDataset {
  MatrixXd f_tar;
  MatrixXd f_map;
  MatrixXd f_anc;
  TripletProvenance provenance;

  int n() const { return int(f_tar.cols()); }
  int d() const { return int(f_tar.rows()); }

  void validate() const {
    if (f_tar.cols() != f_map.cols() || f_tar.cols() != f_anc.cols() ||
        f_tar.rows() != f_map.rows() || f_tar.rows() != f_anc.rows())
      throw validation_error("triplet dataset blocks must share shape");
    if (f_tar.cols() < 1) throw validation_error("triplet dataset is empty");
    if (!f_tar.allFinite() || !f_map.allFinite() || !f_anc.allFinite())
      throw validation_error("triplet dataset has non-finite entries");
  }

  TripletItem item(int j) const {
    return {f_tar.col(j), f_map.col(j), f_anc.col(j)};
  }
};

struct TrainConfig {
  double lambda = 10.0;
  double lr = 0.01;
  int batch_size = 256;
  int iters = 8192;
  std::uint64_t seed = 0;

  void validate() const {
    if (lambda < 0.0 || !(lr > 0.0) || batch_size < 1 || iters < 0)
      throw validation_error("train config fields out of range");
  }
};

inline TripletDataset build_triplets(const TMixture& tar_mix,
                                     const TMixture& map_mix,
                                     const AffineMap& t, const Basis& basis_tar,
                                     const Basis& basis_map, double tau1,
                                     int n, std::uint64_t seed) {
  if (basis_tar.d() != basis_map.d())
    throw validation_error("build_triplets: bases live in different ambient spaces");
  if (tar_mix.d_prime != basis_tar.d_prime() ||
      map_mix.d_prime != basis_map.d_prime())
    throw validation_error("build_triplets: mixture/basis dimension mismatch");

  const MatrixXd z_tar = sample_region(tar_mix, {tau1, Region::High}, n,
                                       derive_seed(seed, 0x7A31ULL));
  const MatrixXd z_anc = sample_region(tar_mix, {tau1, Region::Low}, n,
                                       derive_seed(seed, 0x7A32ULL));
  const MatrixXd z_map = apply_map(t, z_tar);

  TripletDataset out;
  out.f_tar = reconstruct_columns(basis_tar, z_tar);
  out.f_anc = reconstruct_columns(basis_tar, z_anc);
  out.f_map = rescale_norms(reconstruct_columns(basis_map, z_map), out.f_tar);
  out.provenance.target_id = basis_tar.concept_id;
  out.provenance.tau1 = tau1;
  out.provenance.seed = seed;
  out.validate();
  return out;
}

struct TrainResult {
  MoEraserParams params;
  std::vector<std::pair<int, double>> history;  // (step, loss before update)
};

inline TrainResult train(const MoEraserParams& p0, const MatrixXd& w_proj,
                         const TripletDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  p0.validate();
  TrainResult result;
  result.params = p0;
  Rng rng(derive_seed(cfg.seed, 0x7472ULL));
  std::vector<TripletItem> batch;
  batch.reserve(std::size_t(cfg.batch_size));
  for (int step = 0; step < cfg.iters; ++step) {
    batch.clear();
    for (int b = 0; b < cfg.batch_size; ++b)
      batch.push_back(
          data.item(int(rng.uniform_index(std::uint64_t(data.n())))));
    const GradientBundle g =
        grad(result.params, w_proj, batch, cfg.lambda);
    if (!std::isfinite(g.loss_value))
      throw divergence_error("training loss became non-finite at step " +
                             std::to_string(step));
    result.history.emplace_back(step, g.loss_value);
    result.params = sgd_step(result.params, g, cfg.lr);
  }
  return result;
}

}  // namespace etc
