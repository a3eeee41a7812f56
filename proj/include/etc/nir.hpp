// Noise Injection-Restore. The frozen projector is corrupted with rank-r
// noise aligned to the target embeddings' principal directions; a copy of the
// trained module is then fine-tuned so that the corrupted projector plus
// module reproduces the original projector's behavior. Removing the module
// afterwards leaves the corruption exposed.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "etc/linalg.hpp"
#include "etc/moeraser.hpp"
#include "etc/pca.hpp"
#include "etc/trainer.hpp"

namespace etc {

struct NoiseMeta {
  double alpha = 0.0;
  int rank = 0;
  std::uint64_t seed = 0;
};

struct ProjectionLayer {
  MatrixXd w_proj;
  std::optional<MatrixXd> w_cor;
  NoiseMeta noise_meta;

  int d_out() const { return int(w_proj.rows()); }
  int d_in() const { return int(w_proj.cols()); }

  const MatrixXd& corrupted() const {
    if (!w_cor) throw state_error("projection layer has no corrupted weight");
    return *w_cor;
  }
};

// W_cor = W_proj + alpha * e * p_tar^T with p_tar the top-r principal
// directions of the target embeddings and e a seeded standard normal matrix.
inline ProjectionLayer corrupt_projection(const ProjectionLayer& layer,
                                          const MatrixXd& target_embeddings,
                                          int r, double alpha,
                                          std::uint64_t seed) {
  if (alpha < 0.0)
    throw validation_error("corrupt_projection: alpha must be >= 0");
  if (int(target_embeddings.rows()) != layer.d_in())
    throw validation_error("corrupt_projection: embedding dimension mismatch");
  const int n = int(target_embeddings.cols());
  if (r < 1 || r > std::min(layer.d_in(), n - 1))
    throw validation_error(
        "corrupt_projection: rank must satisfy 1 <= r <= min(d_in, n-1)");

  EmbeddingMatrix tmp{"nir-target", target_embeddings};
  const Basis pc = fit_pca(tmp, r);
  const MatrixXd p_tar = pc.V.transpose();  // d_in x r, orthonormal columns

  Rng rng(derive_seed(seed, 0x6e6972ULL));
  const MatrixXd e = rng.normal_matrix(layer.d_out(), r);

  ProjectionLayer out = layer;
  out.w_cor = layer.w_proj + alpha * e * p_tar.transpose();
  out.noise_meta = {alpha, r, seed};
  return out;
}

inline double nir_loss(const MoEraserParams& p, const MoEraserParams& p_frozen,
                       const ProjectionLayer& layer, const VectorXd& f) {
  const MatrixXd& w_cor = layer.corrupted();
  const auto [out_live, route_live] = forward(p, f);
  const auto [out_frozen, route_frozen] = forward(p_frozen, f);
  return (w_cor * (out_live + f) - layer.w_proj * (out_frozen + f))
      .squaredNorm();
}

struct NirResult {
  MoEraserParams params;
  std::vector<std::pair<int, double>> history;
};

// Fine-tunes a copy of the trained module against the corrupted projector.
// Inputs are drawn uniformly from target columns, anchor columns, and an
// equally sized pool of fresh Gaussian vectors.
inline NirResult nir_finetune(const MoEraserParams& p_trained,
                              const ProjectionLayer& layer,
                              const TripletDataset& data,
                              const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  const MatrixXd& w_cor = layer.corrupted();
  if (layer.d_in() != data.d())
    throw validation_error("nir_finetune: projector/data dimension mismatch");

  const MoEraserParams frozen = p_trained;  // MoEraser*, never touched
  const int n = data.n();
  Rng pool_rng(derive_seed(cfg.seed, 0x6e7031ULL));
  MatrixXd pool(data.d(), 3 * n);
  pool.leftCols(n) = data.f_tar;
  pool.middleCols(n, n) = data.f_anc;
  for (int j = 0; j < n; ++j)
    pool.col(2 * n + j) = pool_rng.normal_vector(data.d());

  // The frozen branch never changes, so its projector targets are fixed.
  MatrixXd targets(layer.d_out(), 3 * n);
  for (int j = 0; j < 3 * n; ++j) {
    const auto [out_f, route] = forward(frozen, pool.col(j));
    targets.col(j) = layer.w_proj * (out_f + pool.col(j));
  }

  NirResult result;
  result.params = p_trained;
  Rng rng(derive_seed(cfg.seed, 0x6e7032ULL));
  moe_detail::ForwardCache cache;
  for (int step = 0; step < cfg.iters; ++step) {
    GradientBundle g = zero_gradient(result.params);
    double loss = 0.0;
    const double inv_b = 1.0 / double(cfg.batch_size);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int j = int(rng.uniform_index(std::uint64_t(3 * n)));
      moe_detail::forward_cache(result.params, pool.col(j), cache);
      const VectorXd r = w_cor * (cache.out + pool.col(j)) - targets.col(j);
      loss += r.squaredNorm();
      const VectorXd dout = 2.0 * inv_b * (w_cor.transpose() * r);
      moe_detail::backward(result.params, cache, dout, g);
    }
    loss *= inv_b;
    if (!std::isfinite(loss))
      throw divergence_error("NIR fine-tune diverged at step " +
                             std::to_string(step));
    result.history.emplace_back(step, loss);
    result.params = sgd_step(result.params, g, cfg.lr);
  }
  return result;
}

// Reference noise shapes for the structure comparison; both are returned
// unnormalized and callers rescale to a common Frobenius norm.
inline MatrixXd full_rank_noise(int d_out, int d_in, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x667231ULL));
  return rng.normal_matrix(d_out, d_in);
}

inline MatrixXd unstructured_low_rank_noise(int d_out, int d_in, int r,
                                            std::uint64_t seed) {
  if (r < 1 || r > d_in)
    throw validation_error("low-rank noise rank out of range");
  Rng rng(derive_seed(seed, 0x6c7231ULL));
  const MatrixXd e = rng.normal_matrix(d_out, r);
  const MatrixXd q = random_orthonormal(d_in, r, rng);
  return e * q.transpose();
}

inline MatrixXd scale_to_frobenius(const MatrixXd& m, double target_norm) {
  const double norm = m.norm();
  if (norm == 0.0)
    throw validation_error("cannot rescale a zero matrix to a target norm");
  return m * (target_norm / norm);
}

}  // namespace etc
