// The trainable erasure module: a dense router selecting top-k GLU experts
// with renormalized softmax gates, followed by a zero-initialized elementwise
// affine output gate so the module is an exact no-op in the residual path at
// initialization. Gradients are analytic; top-k selection is treated as
// piecewise constant.
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "etc/linalg.hpp"
#include "etc/rng.hpp"

namespace etc {

struct GluExpert {
  MatrixXd w_in;    // h x d
  MatrixXd w_gate;  // h x d
  MatrixXd w_out;   // d x h
};

struct MoEraserParams {
  MatrixXd router;  // E x d
  std::vector<GluExpert> experts;
  VectorXd gamma;  // output scale, zero at init
  VectorXd beta;   // output shift, zero at init
  int top_k = 1;

  int d() const { return int(router.cols()); }
  int num_experts() const { return int(router.rows()); }
  int hidden() const {
    return experts.empty() ? 0 : int(experts[0].w_in.rows());
  }

  void validate() const {
    if (experts.empty() || router.rows() != int(experts.size()))
      throw validation_error("router rows must match expert count");
    if (top_k < 1 || top_k > num_experts())
      throw validation_error("top_k must lie in [1, E]");
    if (gamma.size() != d() || beta.size() != d())
      throw validation_error("output gate dimension mismatch");
    for (const auto& e : experts) {
      if (e.w_in.rows() != hidden() || e.w_in.cols() != d() ||
          e.w_gate.rows() != hidden() || e.w_gate.cols() != d() ||
          e.w_out.rows() != d() || e.w_out.cols() != hidden())
        throw validation_error("expert tensor shapes inconsistent");
      if (!e.w_in.allFinite() || !e.w_gate.allFinite() || !e.w_out.allFinite())
        throw validation_error("expert parameters must be finite");
    }
    if (!router.allFinite() || !gamma.allFinite() || !beta.allFinite())
      throw validation_error("parameters must be finite");
  }
};

// Mirrors MoEraserParams shapes; also carries the loss that produced it.
struct GradientBundle {
  MatrixXd router;
  std::vector<GluExpert> experts;
  VectorXd gamma;
  VectorXd beta;
  double loss_value = 0.0;
};

inline MoEraserParams init_moeraser(int d, int num_experts, int hidden,
                                    int top_k, std::uint64_t seed) {
  if (d < 1 || num_experts < 1 || hidden < 1)
    throw validation_error("init_moeraser: dimensions must be positive");
  if (top_k < 1 || top_k > num_experts)
    throw validation_error("init_moeraser: top_k must lie in [1, E]");
  Rng rng(derive_seed(seed, 0x6d6f65ULL));
  const auto uniform_fan = [&](int rows, int cols, int fan_in) {
    const double bound = 1.0 / std::sqrt(double(fan_in));
    MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
    return m;
  };
  MoEraserParams p;
  p.router = uniform_fan(num_experts, d, d);
  p.experts.resize(std::size_t(num_experts));
  for (auto& e : p.experts) {
    e.w_in = uniform_fan(hidden, d, d);
    e.w_gate = uniform_fan(hidden, d, d);
    e.w_out = uniform_fan(d, hidden, hidden);
  }
  p.gamma = VectorXd::Zero(d);
  p.beta = VectorXd::Zero(d);
  p.top_k = top_k;
  return p;
}

inline GradientBundle zero_gradient(const MoEraserParams& p) {
  GradientBundle g;
  g.router = MatrixXd::Zero(p.router.rows(), p.router.cols());
  g.experts.resize(p.experts.size());
  for (std::size_t i = 0; i < p.experts.size(); ++i) {
    g.experts[i].w_in = MatrixXd::Zero(p.experts[i].w_in.rows(),
                                       p.experts[i].w_in.cols());
    g.experts[i].w_gate = MatrixXd::Zero(p.experts[i].w_gate.rows(),
                                         p.experts[i].w_gate.cols());
    g.experts[i].w_out = MatrixXd::Zero(p.experts[i].w_out.rows(),
                                        p.experts[i].w_out.cols());
  }
  g.gamma = VectorXd::Zero(p.gamma.size());
  g.beta = VectorXd::Zero(p.beta.size());
  return g;
}

struct RouteEntry {
  int expert = 0;
  double gate = 0.0;
};

namespace moe_detail {

// Expert indices ordered by logit descending, index ascending on ties.
inline std::vector<int> top_k_indices(const VectorXd& logits, int k) {
  std::vector<int> idx(std::size_t(logits.size()));
  for (int i = 0; i < logits.size(); ++i) idx[std::size_t(i)] = i;
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (logits[a] != logits[b]) return logits[a] > logits[b];
    return a < b;
  });
  idx.resize(std::size_t(k));
  return idx;
}

struct ForwardCache {
  VectorXd f;
  VectorXd logits;
  std::vector<int> selected;
  VectorXd gates;  // aligned with `selected`
  std::vector<VectorXd> lin;      // W_in * f per selected expert
  std::vector<VectorXd> sig;      // sigmoid(W_gate * f)
  std::vector<VectorXd> out_e;    // expert outputs
  VectorXd mix;
  VectorXd out;
};

inline void forward_cache(const MoEraserParams& p, const VectorXd& f,
                          ForwardCache& c) {
  c.f = f;
  c.logits = p.router * f;
  c.selected = top_k_indices(c.logits, p.top_k);
  VectorXd sel(p.top_k);
  for (int t = 0; t < p.top_k; ++t) sel[t] = c.logits[c.selected[std::size_t(t)]];
  const double mx = sel.maxCoeff();
  VectorXd ex = (sel.array() - mx).exp();
  c.gates = ex / ex.sum();
  c.lin.assign(std::size_t(p.top_k), {});
  c.sig.assign(std::size_t(p.top_k), {});
  c.out_e.assign(std::size_t(p.top_k), {});
  c.mix = VectorXd::Zero(p.d());
  for (int t = 0; t < p.top_k; ++t) {
    const auto& e = p.experts[std::size_t(c.selected[std::size_t(t)])];
    c.lin[std::size_t(t)] = e.w_in * f;
    c.sig[std::size_t(t)] =
        ((-(e.w_gate * f).array()).exp() + 1.0).inverse().matrix();
    c.out_e[std::size_t(t)] = e.w_out * (c.lin[std::size_t(t)].array() *
                                         c.sig[std::size_t(t)].array())
                                            .matrix();
    c.mix += c.gates[t] * c.out_e[std::size_t(t)];
  }
  c.out = (p.gamma.array() * c.mix.array()).matrix() + p.beta;
}

// Accumulates parameter gradients given dL/d(out). Router gradient flows
// through the renormalized softmax of the selected logits only.
inline void backward(const MoEraserParams& p, const ForwardCache& c,
                     const VectorXd& dout, GradientBundle& g) {
  g.gamma += (dout.array() * c.mix.array()).matrix();
  g.beta += dout;
  const VectorXd dmix = (dout.array() * p.gamma.array()).matrix();

  VectorXd dgate(p.top_k);
  for (int t = 0; t < p.top_k; ++t) {
    const std::size_t ti = std::size_t(t);
    dgate[t] = c.out_e[ti].dot(dmix);
    const VectorXd do_e = c.gates[t] * dmix;
    const auto& e = p.experts[std::size_t(c.selected[ti])];
    auto& ge = g.experts[std::size_t(c.selected[ti])];
    const VectorXd gated =
        (c.lin[ti].array() * c.sig[ti].array()).matrix();
    ge.w_out += do_e * gated.transpose();
    const VectorXd dgated = e.w_out.transpose() * do_e;
    const VectorXd dlin = (dgated.array() * c.sig[ti].array()).matrix();
    const VectorXd dsig = (dgated.array() * c.lin[ti].array()).matrix();
    const VectorXd dzgate =
        (dsig.array() * c.sig[ti].array() * (1.0 - c.sig[ti].array()))
            .matrix();
    ge.w_in += dlin * c.f.transpose();
    ge.w_gate += dzgate * c.f.transpose();
  }
  const double inner = c.gates.dot(dgate);
  for (int t = 0; t < p.top_k; ++t) {
    const double dlogit = c.gates[t] * (dgate[t] - inner);
    g.router.row(c.selected[std::size_t(t)]) += dlogit * c.f.transpose();
  }
}

}  // namespace moe_detail

inline std::pair<VectorXd, std::vector<RouteEntry>> forward(
    const MoEraserParams& p, const VectorXd& f) {
  if (f.size() != p.d())
    throw validation_error("forward: input dimension mismatch");
  if (!f.allFinite()) throw validation_error("forward: non-finite input");
  moe_detail::ForwardCache c;
  moe_detail::forward_cache(p, f, c);
  std::vector<RouteEntry> route;
  route.reserve(std::size_t(p.top_k));
  for (int t = 0; t < p.top_k; ++t)
    route.push_back({c.selected[std::size_t(t)], c.gates[t]});
  return {c.out, route};
}

struct TripletItem {
  VectorXd f_tar;
  VectorXd f_map;
  VectorXd f_anc;
};

inline double erase_loss(const MoEraserParams& p, const MatrixXd& w_proj,
                         const std::vector<TripletItem>& batch,
                         double lambda) {
  if (batch.empty()) throw validation_error("erase_loss: empty batch");
  if (lambda < 0.0) throw validation_error("erase_loss: lambda must be >= 0");
  if (w_proj.cols() != p.d())
    throw validation_error("erase_loss: projector input dim mismatch");
  double total = 0.0;
  moe_detail::ForwardCache c;
  for (const auto& item : batch) {
    if (item.f_tar.size() != p.d() || item.f_map.size() != p.d() ||
        item.f_anc.size() != p.d())
      throw validation_error("erase_loss: triplet dimension mismatch");
    moe_detail::forward_cache(p, item.f_tar, c);
    total += (w_proj * (c.out + item.f_tar) - w_proj * item.f_map).squaredNorm();
    moe_detail::forward_cache(p, item.f_anc, c);
    total += lambda * (w_proj * c.out).squaredNorm();
  }
  return total / double(batch.size());
}

// Analytic gradient of erase_loss for every parameter tensor.
inline GradientBundle grad(const MoEraserParams& p, const MatrixXd& w_proj,
                           const std::vector<TripletItem>& batch,
                           double lambda) {
  if (batch.empty()) throw validation_error("grad: empty batch");
  if (lambda < 0.0) throw validation_error("grad: lambda must be >= 0");
  if (w_proj.cols() != p.d())
    throw validation_error("grad: projector input dim mismatch");
  GradientBundle g = zero_gradient(p);
  const double inv_b = 1.0 / double(batch.size());
  moe_detail::ForwardCache c;
  double loss = 0.0;
  for (const auto& item : batch) {
    moe_detail::forward_cache(p, item.f_tar, c);
    {
      const VectorXd r = w_proj * (c.out + item.f_tar - item.f_map);
      loss += r.squaredNorm();
      const VectorXd dout = 2.0 * inv_b * (w_proj.transpose() * r);
      moe_detail::backward(p, c, dout, g);
    }
    moe_detail::forward_cache(p, item.f_anc, c);
    {
      const VectorXd r = w_proj * c.out;
      loss += lambda * r.squaredNorm();
      if (lambda > 0.0) {
        const VectorXd dout =
            2.0 * lambda * inv_b * (w_proj.transpose() * r);
        moe_detail::backward(p, c, dout, g);
      }
    }
  }
  g.loss_value = loss * inv_b;
  return g;
}

inline MoEraserParams sgd_step(const MoEraserParams& p,
                               const GradientBundle& g, double lr) {
  if (!(lr > 0.0)) throw validation_error("sgd_step: lr must be positive");
  if (g.router.rows() != p.router.rows() ||
      g.router.cols() != p.router.cols() ||
      g.experts.size() != p.experts.size())
    throw validation_error("sgd_step: gradient shape mismatch");
  MoEraserParams out = p;
  out.router -= lr * g.router;
  for (std::size_t i = 0; i < out.experts.size(); ++i) {
    out.experts[i].w_in -= lr * g.experts[i].w_in;
    out.experts[i].w_gate -= lr * g.experts[i].w_gate;
    out.experts[i].w_out -= lr * g.experts[i].w_out;
  }
  out.gamma -= lr * g.gamma;
  out.beta -= lr * g.beta;
  return out;
}

// Per-domain expert selection frequencies: entry (domain, e) is the fraction
// of that domain's inputs whose top-k set includes expert e. Rows follow the
// order of first appearance unless an explicit domain order is given; a
// listed domain with no inputs yields a zero row.
inline MatrixXd expert_load(const MoEraserParams& p, const MatrixXd& inputs,
                            const std::vector<std::string>& labels,
                            std::vector<std::string>* domains_out = nullptr,
                            const std::vector<std::string>& domain_order = {}) {
  if (int(labels.size()) != int(inputs.cols()))
    throw validation_error("expert_load: one label per input required");
  if (inputs.cols() < 1) throw validation_error("expert_load: empty input");
  std::vector<std::string> domains = domain_order;
  if (domains.empty())
    for (const auto& l : labels)
      if (std::find(domains.begin(), domains.end(), l) == domains.end())
        domains.push_back(l);
  MatrixXd counts = MatrixXd::Zero(int(domains.size()), p.num_experts());
  VectorXd totals = VectorXd::Zero(int(domains.size()));
  for (int j = 0; j < inputs.cols(); ++j) {
    const auto it = std::find(domains.begin(), domains.end(),
                              labels[std::size_t(j)]);
    if (it == domains.end())
      throw validation_error("expert_load: label outside domain order: " +
                             labels[std::size_t(j)]);
    const int row = int(it - domains.begin());
    const VectorXd logits = p.router * inputs.col(j);
    for (int e : moe_detail::top_k_indices(logits, p.top_k))
      counts(row, e) += 1.0;
    totals[row] += 1.0;
  }
  for (int r = 0; r < counts.rows(); ++r)
    if (totals[r] > 0.0) counts.row(r) /= totals[r];
  if (domains_out) *domains_out = domains;
  return counts;
}

}  // namespace etc
