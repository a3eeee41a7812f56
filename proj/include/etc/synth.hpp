// Synthetic embedding corpora. Each concept lives in its own random
// low-rank subspace of the ambient space with heavy-tailed multi-mode noise,
// so rank, tail weight, and mode structure are all controllable knobs.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "etc/linalg.hpp"
#include "etc/matrix_io.hpp"
#include "etc/rng.hpp"

namespace etc {

struct SyntheticCorpusSpec {
  int num_concepts = 0;
  int d = 0;
  int samples_per_concept = 0;
  int modes_per_concept = 1;
  double tail_dof = 2.0;
  int intrinsic_rank = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_concepts < 1 || d < 2 || samples_per_concept < 2 ||
        modes_per_concept < 1 || intrinsic_rank < 1)
      throw validation_error("synthetic corpus spec fields must be positive");
    if (intrinsic_rank > d)
      throw validation_error("intrinsic_rank exceeds ambient dimension d");
    if (!(tail_dof > 0.0))
      throw validation_error("tail_dof must be positive");
  }
};

inline std::string synth_concept_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "concept_%03d", index);
  return buf;
}

// Pure function of (spec, seed): identical inputs give bit-identical output.
inline std::vector<EmbeddingMatrix> gen_synthetic_corpus(
    const SyntheticCorpusSpec& spec) {
  spec.validate();
  const int r = spec.intrinsic_rank;
  std::vector<EmbeddingMatrix> out;
  out.reserve(std::size_t(spec.num_concepts));

  for (int c = 0; c < spec.num_concepts; ++c) {
    Rng rng(derive_seed(spec.seed, 0x53594e54ULL + std::uint64_t(c)));

    // Subspace, concept offset, and mode structure all live in R^r so every
    // sample stays inside the rank-r linear subspace spanned by the basis.
    const MatrixXd basis = random_orthonormal(spec.d, r, rng);
    const VectorXd concept_offset = 6.0 * rng.normal_vector(r);

    std::vector<VectorXd> mode_center(std::size_t(spec.modes_per_concept));
    std::vector<MatrixXd> mode_chol(std::size_t(spec.modes_per_concept));
    for (int m = 0; m < spec.modes_per_concept; ++m) {
      mode_center[std::size_t(m)] = concept_offset + 3.0 * rng.normal_vector(r);
      MatrixXd g = rng.normal_matrix(r, r);
      MatrixXd spd =
          g * g.transpose() / double(r) + 0.35 * MatrixXd::Identity(r, r);
      mode_chol[std::size_t(m)] = Eigen::LLT<MatrixXd>(spd).matrixL();
    }

    MatrixXd low(r, spec.samples_per_concept);
    for (int j = 0; j < spec.samples_per_concept; ++j) {
      const int m = int(rng.uniform_index(std::uint64_t(spec.modes_per_concept)));
      const VectorXd g = rng.normal_vector(r);
      const double w = rng.chi_squared(spec.tail_dof) / spec.tail_dof;
      low.col(j) =
          mode_center[std::size_t(m)] + mode_chol[std::size_t(m)] * (g / std::sqrt(w));
    }

    EmbeddingMatrix mat;
    mat.concept_id = synth_concept_id(c);
    mat.data = basis * low;
    mat.validate();
    out.push_back(std::move(mat));
  }
  return out;
}

}  // namespace etc
