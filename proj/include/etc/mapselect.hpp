// Mapping-concept selection: scan pool concepts in descending similarity to
// the target, anchor the search on the first one at or below the similarity
// threshold, gather its nearest neighbours (itself included), and accept the
// group once the trace of the stacked sample covariance is small enough.
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "etc/linalg.hpp"
#include "etc/matrix_io.hpp"

namespace etc {

inline double cosine_sim(const VectorXd& u, const VectorXd& v) {
  if (u.size() != v.size())
    throw validation_error("cosine_sim: dimension mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0)
    throw validation_error("cosine_sim: zero vector");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

class ConceptPool {
 public:
  void add(EmbeddingMatrix m) {
    m.validate();
    for (const auto& e : entries_)
      if (e.concept_id == m.concept_id)
        throw validation_error("duplicate concept id in pool: " + m.concept_id);
    means_.push_back(m.data.rowwise().mean());
    entries_.push_back(std::move(m));
  }

  int size() const { return int(entries_.size()); }
  const EmbeddingMatrix& entry(int i) const { return entries_[std::size_t(i)]; }
  const VectorXd& mean(int i) const { return means_[std::size_t(i)]; }

  int index_of(const std::string& id) const {
    for (int i = 0; i < size(); ++i)
      if (entries_[std::size_t(i)].concept_id == id) return i;
    return -1;
  }

 private:
  std::vector<EmbeddingMatrix> entries_;
  std::vector<VectorXd> means_;
};

struct SelectionConfig {
  int m_prime = 3;
  double tau2 = 0.3;
  double tau3 = 0.5;

  void validate() const {
    if (m_prime < 1) throw validation_error("m_prime must be >= 1");
    if (!(tau3 > 0.0)) throw validation_error("tau3 must be positive");
  }
};

struct SelectionResult {
  std::string target_id;
  std::vector<std::string> mapping_ids;
  double trace = 0.0;
  std::string anchor_id;  // the below-threshold concept the group grew from
  int scanned = 0;        // candidates examined before acceptance
};

inline double stacked_trace(const std::vector<std::string>& ids,
                            const ConceptPool& pool) {
  if (ids.empty()) throw validation_error("stacked_trace: empty id list");
  Eigen::Index total_cols = 0;
  std::vector<int> idx;
  for (const auto& id : ids) {
    const int i = pool.index_of(id);
    if (i < 0) throw validation_error("stacked_trace: unknown concept " + id);
    idx.push_back(i);
    total_cols += pool.entry(i).data.cols();
  }
  const Eigen::Index d = pool.entry(idx[0]).data.rows();
  MatrixXd stacked(d, total_cols);
  Eigen::Index at = 0;
  for (int i : idx) {
    const auto& m = pool.entry(i).data;
    if (m.rows() != d)
      throw validation_error("stacked_trace: mixed ambient dimensions");
    stacked.middleCols(at, m.cols()) = m;
    at += m.cols();
  }
  return sample_covariance(stacked).trace();
}

namespace mapselect_detail {

// Pool indices ordered by similarity to `ref` descending, concept id
// ascending on exact ties.
inline std::vector<int> order_by_similarity(const ConceptPool& pool,
                                            const VectorXd& ref) {
  std::vector<std::pair<double, int>> scored;
  scored.reserve(std::size_t(pool.size()));
  for (int i = 0; i < pool.size(); ++i)
    scored.emplace_back(cosine_sim(ref, pool.mean(i)), i);
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return pool.entry(a.second).concept_id < pool.entry(b.second).concept_id;
  });
  std::vector<int> order;
  order.reserve(scored.size());
  for (const auto& [s, i] : scored) order.push_back(i);
  return order;
}

}  // namespace mapselect_detail

// The target must not itself be a pool entry; callers hand in its embedding
// matrix directly.
inline SelectionResult select_mapping_concepts(const EmbeddingMatrix& target,
                                               const ConceptPool& pool,
                                               const SelectionConfig& cfg) {
  cfg.validate();
  target.validate();
  if (pool.index_of(target.concept_id) >= 0)
    throw validation_error("target concept must not be in the mapping pool");
  if (pool.size() < cfg.m_prime)
    throw validation_error("pool smaller than m_prime");

  const VectorXd target_mean = target.data.rowwise().mean();
  const std::vector<int> order =
      mapselect_detail::order_by_similarity(pool, target_mean);

  double best_trace = std::numeric_limits<double>::infinity();
  int scanned = 0;
  for (int i : order) {
    ++scanned;
    const double sim = cosine_sim(target_mean, pool.mean(i));
    if (sim > cfg.tau2) continue;
    // Group = the m_prime concepts nearest the anchor, anchor included
    // (sim(anchor, anchor) = 1 puts it first).
    const std::vector<int> near =
        mapselect_detail::order_by_similarity(pool, pool.mean(i));
    std::vector<std::string> ids;
    for (int j = 0; j < cfg.m_prime; ++j)
      ids.push_back(pool.entry(near[std::size_t(j)]).concept_id);
    const double trace = stacked_trace(ids, pool);
    best_trace = std::min(best_trace, trace);
    if (trace <= cfg.tau3) {
      SelectionResult r;
      r.target_id = target.concept_id;
      r.mapping_ids = std::move(ids);
      r.trace = trace;
      r.anchor_id = pool.entry(i).concept_id;
      r.scanned = scanned;
      return r;
    }
  }
  throw infeasible_selection_error(
      "no mapping group satisfies tau2/tau3 for target '" + target.concept_id +
      "'; best stacked trace found: " +
      (best_trace == std::numeric_limits<double>::infinity()
           ? std::string("none (no candidate below tau2)")
           : std::to_string(best_trace)));
}

}  // namespace etc
