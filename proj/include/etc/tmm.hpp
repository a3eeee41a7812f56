// Student's-t mixture models over compressed embeddings: EM fitting with
// fixed degrees of freedom, density evaluation, confidence-region
// classification via the Mahalanobis F-law, region-constrained sampling,
// mixture merging, and moments.
//
// EM keeps the exact monotone-likelihood guarantee under regularization by
// maximizing the M-step over the constraint set {Sigma : Sigma >= reg*I}
// (eigenvalue flooring of the weighted scatter), rather than adding a ridge
// after the fact.
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "etc/linalg.hpp"
#include "etc/pca.hpp"
#include "etc/rng.hpp"
#include "etc/stats.hpp"

namespace etc {

struct TComponent {
  double weight = 0.0;
  VectorXd mean;
  MatrixXd scale;  // symmetric positive definite
  double dof = 2.0;
};

struct TMixture {
  std::vector<TComponent> components;
  int d_prime = 0;

  int k() const { return int(components.size()); }

  void validate() const {
    if (components.empty() || d_prime < 1)
      throw validation_error("mixture must have at least one component");
    double wsum = 0.0;
    for (const auto& c : components) {
      if (!(c.weight > 0.0) || c.weight > 1.0 + 1e-12)
        throw validation_error("component weight outside (0, 1]");
      if (!(c.dof > 0.0))
        throw validation_error("degrees of freedom must be positive");
      if (c.mean.size() != d_prime || c.scale.rows() != d_prime ||
          c.scale.cols() != d_prime)
        throw validation_error("component dimensions inconsistent");
      if ((c.scale - c.scale.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw validation_error("scale matrix not symmetric");
      if (Eigen::LLT<MatrixXd>(c.scale).info() != Eigen::Success)
        throw validation_error("scale matrix not positive definite");
      wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-10)
      throw validation_error("mixture weights must sum to 1");
  }
};

enum class Region { High, Low };

struct RegionSpec {
  double tau1 = 0.9;
  Region side = Region::High;

  void validate() const {
    if (!(tau1 > 0.0) || !(tau1 < 1.0))
      throw validation_error("tau1 must lie strictly inside (0, 1)");
  }
};

namespace tmm_detail {

struct PreparedComponent {
  Eigen::LLT<MatrixXd> llt;
  double log_weight;
  double log_norm;  // density constant excluding the (1 + D^2/nu) term
};

inline std::vector<PreparedComponent> prepare(const TMixture& m) {
  const double p = double(m.d_prime);
  std::vector<PreparedComponent> out;
  out.reserve(m.components.size());
  for (const auto& c : m.components) {
    PreparedComponent pc;
    pc.llt.compute(c.scale);
    if (pc.llt.info() != Eigen::Success)
      throw numerical_error("Cholesky factorization of scale matrix failed");
    double logdet = 0.0;
    const auto& l = pc.llt.matrixLLT();
    for (int i = 0; i < m.d_prime; ++i) logdet += 2.0 * std::log(l(i, i));
    pc.log_weight = std::log(c.weight);
    pc.log_norm = std::lgamma(0.5 * (c.dof + p)) - std::lgamma(0.5 * c.dof) -
                  0.5 * p * std::log(c.dof * 3.14159265358979323846) -
                  0.5 * logdet;
    out.push_back(std::move(pc));
  }
  return out;
}

inline double mahalanobis_sq(const PreparedComponent& pc, const VectorXd& mean,
                             const VectorXd& z) {
  const VectorXd y = pc.llt.matrixL().solve(z - mean);
  return y.squaredNorm();
}

inline double component_log_density(const TMixture& m, int i,
                                    const PreparedComponent& pc,
                                    double d2) {
  const auto& c = m.components[std::size_t(i)];
  const double p = double(m.d_prime);
  return pc.log_norm - 0.5 * (c.dof + p) * std::log1p(d2 / c.dof);
}

inline double log_sum_exp(const VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace tmm_detail

inline double log_pdf(const TMixture& m, const VectorXd& z) {
  if (z.size() != m.d_prime)
    throw validation_error("log_pdf: point dimension mismatch");
  if (!z.allFinite()) throw validation_error("log_pdf: non-finite point");
  const auto prep = tmm_detail::prepare(m);
  VectorXd terms(m.k());
  for (int i = 0; i < m.k(); ++i) {
    const double d2 = tmm_detail::mahalanobis_sq(
        prep[std::size_t(i)], m.components[std::size_t(i)].mean, z);
    terms[i] = prep[std::size_t(i)].log_weight +
               tmm_detail::component_log_density(m, i, prep[std::size_t(i)], d2);
  }
  return tmm_detail::log_sum_exp(terms);
}

// Classifies a point relative to the tau1 confidence ellipsoid of its
// max-responsibility component: under component i the squared Mahalanobis
// distance divided by d' follows F(d', nu_i).
inline Region region_of(const TMixture& m, const VectorXd& z, double tau1) {
  RegionSpec{tau1, Region::High}.validate();
  if (z.size() != m.d_prime)
    throw validation_error("region_of: point dimension mismatch");
  const auto prep = tmm_detail::prepare(m);
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  double best_d2 = 0.0;
  for (int i = 0; i < m.k(); ++i) {
    const double d2 = tmm_detail::mahalanobis_sq(
        prep[std::size_t(i)], m.components[std::size_t(i)].mean, z);
    const double score =
        prep[std::size_t(i)].log_weight +
        tmm_detail::component_log_density(m, i, prep[std::size_t(i)], d2);
    if (score > best_score) {
      best_score = score;
      best = i;
      best_d2 = d2;
    }
  }
  const double cdf = f_cdf(best_d2 / double(m.d_prime), double(m.d_prime),
                           m.components[std::size_t(best)].dof);
  return cdf <= tau1 ? Region::High : Region::Low;
}

struct TmmOptions {
  int max_iters = 200;
  double tol = 1e-7;
  double reg = -1.0;  // negative: auto = 1e-6 * trace(cov) / d'
  std::uint64_t seed = 0;
  std::vector<int> init_labels;  // optional: forced hard init assignment
};

struct TmmFitResult {
  TMixture mixture;
  std::vector<double> log_likelihood;  // one entry per E-step
  int iterations = 0;                  // number of M-steps taken
};

namespace tmm_detail {

inline std::vector<int> kmeanspp_labels(const MatrixXd& z, int k, Rng& rng) {
  const int n = int(z.cols());
  std::vector<int> centers;
  centers.push_back(int(rng.uniform_index(std::uint64_t(n))));
  VectorXd d2 =
      (z.colwise() - z.col(centers[0])).colwise().squaredNorm().transpose();
  while (int(centers.size()) < k) {
    const double total = d2.sum();
    int next;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      next = n - 1;
      for (int j = 0; j < n; ++j) {
        u -= d2[j];
        if (u <= 0.0) {
          next = j;
          break;
        }
      }
    } else {
      next = int(rng.uniform_index(std::uint64_t(n)));
    }
    centers.push_back(next);
    const VectorXd nd =
        (z.colwise() - z.col(next)).colwise().squaredNorm().transpose();
    d2 = d2.cwiseMin(nd);
  }
  std::vector<int> labels(std::size_t(n), 0);
  for (int j = 0; j < n; ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < k; ++i) {
      const double dd = (z.col(j) - z.col(centers[std::size_t(i)])).squaredNorm();
      if (dd < best) {
        best = dd;
        labels[std::size_t(j)] = i;
      }
    }
  }
  return labels;
}

// M-step maximizer over {Sigma >= reg*I}: eigenvalue floor of the scatter.
inline MatrixXd floor_spd(const MatrixXd& scatter, double reg) {
  return sym_apply(scatter, [](double v) { return v; }, reg);
}

}  // namespace tmm_detail

// EM for a t-mixture with every component's dof fixed at `dof`.
// Initialization is k-means++ with hard assignments unless labels are given.
inline TmmFitResult fit_tmm(const CompressedEmbeddings& z, int k, double dof,
                            const TmmOptions& opts = {}) {
  const MatrixXd& data = z.Z;
  const int p = int(data.rows());
  const int n = int(data.cols());
  if (k < 1) throw validation_error("fit_tmm: k must be positive");
  if (!(dof > 0.0)) throw validation_error("fit_tmm: dof must be positive");
  if (n < k * (p + 1))
    throw validation_error("fit_tmm: need N >= k*(d'+1) samples, got N=" +
                           std::to_string(n));
  if (!data.allFinite())
    throw validation_error("fit_tmm: non-finite data");

  const MatrixXd global_cov = sample_covariance(data);
  const double total_var = global_cov.trace();
  if (!(total_var > 0.0))
    throw degenerate_data_error("fit_tmm: data has zero variance");
  const double reg =
      opts.reg >= 0.0 ? opts.reg : 1e-6 * total_var / double(p);

  // Hard-assignment initialization.
  std::vector<int> labels;
  if (!opts.init_labels.empty()) {
    if (int(opts.init_labels.size()) != n)
      throw validation_error("fit_tmm: init label count != N");
    labels = opts.init_labels;
    for (int l : labels)
      if (l < 0 || l >= k) throw validation_error("fit_tmm: bad init label");
  } else {
    Rng rng(derive_seed(opts.seed, 0x6b6d7070ULL));
    labels = tmm_detail::kmeanspp_labels(data, k, rng);
  }

  TMixture mix;
  mix.d_prime = p;
  mix.components.resize(std::size_t(k));
  for (int i = 0; i < k; ++i) {
    std::vector<int> idx;
    for (int j = 0; j < n; ++j)
      if (labels[std::size_t(j)] == i) idx.push_back(j);
    auto& c = mix.components[std::size_t(i)];
    c.dof = dof;
    if (idx.size() < 2) {
      // Collapsed init cluster: fall back to global moments.
      c.weight = std::max(1.0, double(idx.size())) / double(n);
      c.mean = data.rowwise().mean();
      c.scale = tmm_detail::floor_spd(global_cov, reg);
      continue;
    }
    c.weight = double(idx.size()) / double(n);
    VectorXd mu = VectorXd::Zero(p);
    for (int j : idx) mu += data.col(j);
    mu /= double(idx.size());
    MatrixXd scatter = MatrixXd::Zero(p, p);
    for (int j : idx) {
      const VectorXd dvec = data.col(j) - mu;
      scatter += dvec * dvec.transpose();
    }
    scatter /= double(idx.size());
    c.mean = mu;
    c.scale = tmm_detail::floor_spd(scatter, reg);
  }
  {
    double wsum = 0.0;
    for (auto& c : mix.components) wsum += c.weight;
    for (auto& c : mix.components) c.weight /= wsum;
  }

  TmmFitResult result;
  MatrixXd resp(k, n);
  MatrixXd uwt(k, n);

  auto e_step = [&](int iter) -> double {
    std::vector<tmm_detail::PreparedComponent> prep;
    try {
      prep = tmm_detail::prepare(mix);
    } catch (const numerical_error&) {
      throw numerical_error(
          "fit_tmm: Cholesky failed despite regularization at iteration " +
          std::to_string(iter));
    }
    double ll = 0.0;
    VectorXd terms(k);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < k; ++i) {
        const double d2 = tmm_detail::mahalanobis_sq(
            prep[std::size_t(i)], mix.components[std::size_t(i)].mean,
            data.col(j));
        terms[i] = prep[std::size_t(i)].log_weight +
                   tmm_detail::component_log_density(mix, i,
                                                     prep[std::size_t(i)], d2);
        uwt(i, j) = (dof + double(p)) / (dof + d2);
      }
      const double lse = tmm_detail::log_sum_exp(terms);
      ll += lse;
      for (int i = 0; i < k; ++i) resp(i, j) = std::exp(terms[i] - lse);
    }
    return ll;
  };

  for (int iter = 0;; ++iter) {
    const double ll = e_step(iter);
    result.log_likelihood.push_back(ll);
    if (iter > 0) {
      const double gain = ll - result.log_likelihood[std::size_t(iter) - 1];
      if (gain < opts.tol) break;
    }
    if (iter == opts.max_iters) break;

    // M-step.
    for (int i = 0; i < k; ++i) {
      auto& c = mix.components[std::size_t(i)];
      const double nk = resp.row(i).sum();
      if (nk <= 1e-12) continue;  // dead component keeps its parameters
      c.weight = nk / double(n);
      double swu = 0.0;
      VectorXd mu = VectorXd::Zero(p);
      for (int j = 0; j < n; ++j) {
        const double w = resp(i, j) * uwt(i, j);
        swu += w;
        mu += w * data.col(j);
      }
      mu /= swu;
      MatrixXd scatter = MatrixXd::Zero(p, p);
      for (int j = 0; j < n; ++j) {
        const VectorXd dvec = data.col(j) - mu;
        scatter += (resp(i, j) * uwt(i, j)) * (dvec * dvec.transpose());
      }
      scatter /= nk;
      c.mean = mu;
      c.scale = tmm_detail::floor_spd(scatter, reg);
    }
    double wsum = 0.0;
    for (auto& c : mix.components) wsum += c.weight;
    for (auto& c : mix.components) c.weight /= wsum;
    result.iterations = iter + 1;
  }

  result.mixture = std::move(mix);
  return result;
}

// One draw per column from the unconstrained mixture.
inline MatrixXd sample_mixture(const TMixture& m, int n, std::uint64_t seed) {
  if (n < 1) throw validation_error("sample_mixture: n must be positive");
  m.validate();
  Rng rng(derive_seed(seed, 0x73616d70ULL));
  VectorXd weights(m.k());
  for (int i = 0; i < m.k(); ++i) weights[i] = m.components[std::size_t(i)].weight;
  std::vector<MatrixXd> chol;
  chol.reserve(m.components.size());
  for (const auto& c : m.components)
    chol.push_back(Eigen::LLT<MatrixXd>(c.scale).matrixL());
  MatrixXd out(m.d_prime, n);
  for (int j = 0; j < n; ++j) {
    const int i = rng.categorical(weights);
    const auto& c = m.components[std::size_t(i)];
    const VectorXd g = rng.normal_vector(m.d_prime);
    const double w = rng.chi_squared(c.dof) / c.dof;
    out.col(j) = c.mean + chol[std::size_t(i)] * (g / std::sqrt(w));
  }
  return out;
}

// Rejection sampling constrained to one side of the tau1 confidence split.
inline MatrixXd sample_region(const TMixture& m, const RegionSpec& spec, int n,
                              std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw validation_error("sample_region: n must be positive");
  m.validate();
  Rng rng(derive_seed(seed, 0x72656a65ULL));
  VectorXd weights(m.k());
  for (int i = 0; i < m.k(); ++i) weights[i] = m.components[std::size_t(i)].weight;
  std::vector<MatrixXd> chol;
  for (const auto& c : m.components)
    chol.push_back(Eigen::LLT<MatrixXd>(c.scale).matrixL());

  MatrixXd out(m.d_prime, n);
  std::int64_t proposed = 0, accepted = 0;
  constexpr std::int64_t kStarvationWindow = 1000000;
  while (accepted < n) {
    const int i = rng.categorical(weights);
    const auto& c = m.components[std::size_t(i)];
    const VectorXd g = rng.normal_vector(m.d_prime);
    const double w = rng.chi_squared(c.dof) / c.dof;
    const VectorXd z = c.mean + chol[std::size_t(i)] * (g / std::sqrt(w));
    ++proposed;
    if (region_of(m, z, spec.tau1) == spec.side) {
      out.col(accepted) = z;
      ++accepted;
    }
    if (proposed == kStarvationWindow &&
        double(accepted) / double(proposed) < 1e-4)
      throw sampling_starvation_error(
          "sample_region: acceptance rate below 1e-4 after 1e6 proposals "
          "(degenerate tau1 split)");
  }
  return out;
}

// Measured acceptance rate of the rejection sampler; used by coverage tests.
inline double region_acceptance_rate(const TMixture& m, const RegionSpec& spec,
                                     int proposals, std::uint64_t seed) {
  spec.validate();
  m.validate();
  Rng rng(derive_seed(seed, 0x72656a65ULL));
  VectorXd weights(m.k());
  for (int i = 0; i < m.k(); ++i) weights[i] = m.components[std::size_t(i)].weight;
  std::vector<MatrixXd> chol;
  for (const auto& c : m.components)
    chol.push_back(Eigen::LLT<MatrixXd>(c.scale).matrixL());
  int hit = 0;
  for (int t = 0; t < proposals; ++t) {
    const int i = rng.categorical(weights);
    const auto& c = m.components[std::size_t(i)];
    const VectorXd g = rng.normal_vector(m.d_prime);
    const double w = rng.chi_squared(c.dof) / c.dof;
    const VectorXd z = c.mean + chol[std::size_t(i)] * (g / std::sqrt(w));
    if (region_of(m, z, spec.tau1) == spec.side) ++hit;
  }
  return double(hit) / double(proposals);
}

// Weighted union of mixtures: component lists concatenate, weights scale.
inline TMixture merge(const std::vector<TMixture>& ms,
                      const std::vector<double>& weights) {
  if (ms.empty() || ms.size() != weights.size())
    throw validation_error("merge: need one weight per mixture");
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw validation_error("merge: weights must be nonnegative");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    throw validation_error("merge: weights must sum to 1");
  TMixture out;
  out.d_prime = ms[0].d_prime;
  for (std::size_t j = 0; j < ms.size(); ++j) {
    if (ms[j].d_prime != out.d_prime)
      throw validation_error("merge: mixture dimension mismatch");
    for (const auto& c : ms[j].components) {
      TComponent nc = c;
      nc.weight = weights[j] * c.weight;
      if (nc.weight > 0.0) out.components.push_back(std::move(nc));
    }
  }
  double total = 0.0;
  for (const auto& c : out.components) total += c.weight;
  for (auto& c : out.components) c.weight /= total;
  return out;
}

struct MixtureMoments {
  VectorXd mean;
  MatrixXd covariance;
};

// Mean and covariance of the mixture. Components with dof <= 2 have no
// covariance; with `scale_proxy` the scale matrix stands in (c_i = 1).
inline MixtureMoments mixture_moments(const TMixture& m,
                                      bool scale_proxy = false) {
  m.validate();
  VectorXd mean = VectorXd::Zero(m.d_prime);
  for (const auto& c : m.components) mean += c.weight * c.mean;
  MatrixXd cov = MatrixXd::Zero(m.d_prime, m.d_prime);
  for (const auto& c : m.components) {
    double ci;
    if (c.dof > 2.0) {
      ci = c.dof / (c.dof - 2.0);
    } else if (scale_proxy) {
      ci = 1.0;
    } else {
      throw undefined_moment_error(
          "mixture covariance undefined for dof <= 2 without scale proxy");
    }
    cov += c.weight * (ci * c.scale + c.mean * c.mean.transpose());
  }
  cov -= mean * mean.transpose();
  return {std::move(mean), std::move(cov)};
}

}  // namespace etc
