// On-disk forms of the pipeline artifacts: JSON metadata next to ETCM tensor
// blocks. Paths passed in are prefixes; each saver writes `<prefix>.json`
// plus `<prefix>.etcmb` when tensors are involved.
#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "etc/aot.hpp"
#include "etc/matrix_io.hpp"
#include "etc/metrics.hpp"
#include "etc/moeraser.hpp"
#include "etc/nir.hpp"
#include "etc/pca.hpp"
#include "etc/tmm.hpp"
#include "etc/trainer.hpp"

namespace etc {

using nlohmann::json;

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw persistence_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw persistence_error("write failed: " + path);
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw corruption_error("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// ---- Basis ----------------------------------------------------------------

inline void save_basis(const Basis& b, const std::string& prefix) {
  save_blocks({{"V", b.V}, {"mean", b.mean}}, prefix + ".etcmb");
  json j;
  j["concept_id"] = b.concept_id;
  j["d"] = b.d();
  j["d_prime"] = b.d_prime();
  j["explained_variance"] =
      std::vector<double>(b.explained_variance.data(),
                          b.explained_variance.data() + b.explained_variance.size());
  write_json_file(prefix + ".json", j);
}

inline Basis load_basis(const std::string& prefix) {
  const json j = read_json_file(prefix + ".json");
  const auto blocks = load_blocks(prefix + ".etcmb");
  Basis b;
  b.concept_id = j.at("concept_id").get<std::string>();
  b.V = find_block(blocks, "V", prefix);
  b.mean = find_block(blocks, "mean", prefix);
  const auto ev = j.at("explained_variance").get<std::vector<double>>();
  b.explained_variance =
      Eigen::Map<const VectorXd>(ev.data(), Eigen::Index(ev.size()));
  if (b.d_prime() != j.at("d_prime").get<int>() ||
      b.d() != j.at("d").get<int>())
    throw corruption_error("basis sidecar disagrees with tensors: " + prefix);
  return b;
}

// ---- TMixture: weights/means/dof in JSON, scale matrices as blocks --------

inline void save_tmm(const TMixture& m, const std::string& prefix) {
  json comps = json::array();
  std::vector<TensorBlock> blocks;
  for (int i = 0; i < m.k(); ++i) {
    const auto& c = m.components[std::size_t(i)];
    json jc;
    jc["weight"] = c.weight;
    jc["dof"] = c.dof;
    jc["mean"] =
        std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size());
    comps.push_back(jc);
    blocks.push_back({"scale/" + std::to_string(i), c.scale});
  }
  json j;
  j["d_prime"] = m.d_prime;
  j["k"] = m.k();
  j["components"] = comps;
  write_json_file(prefix + ".json", j);
  save_blocks(blocks, prefix + ".etcmb");
}

inline TMixture load_tmm(const std::string& prefix) {
  const json j = read_json_file(prefix + ".json");
  const auto blocks = load_blocks(prefix + ".etcmb");
  TMixture m;
  m.d_prime = j.at("d_prime").get<int>();
  int i = 0;
  for (const auto& jc : j.at("components")) {
    TComponent c;
    c.weight = jc.at("weight").get<double>();
    c.dof = jc.at("dof").get<double>();
    const auto mv = jc.at("mean").get<std::vector<double>>();
    c.mean = Eigen::Map<const VectorXd>(mv.data(), Eigen::Index(mv.size()));
    c.scale = find_block(blocks, "scale/" + std::to_string(i), prefix);
    // f32 storage can nudge a barely-PD scale matrix below PD; restore the
    // fit-time floor deterministically.
    if (Eigen::LLT<MatrixXd>(c.scale).info() != Eigen::Success) {
      const double floor = 1e-9 * std::max(1.0, c.scale.trace());
      c.scale = sym_apply(c.scale, [](double v) { return v; }, floor);
    }
    m.components.push_back(std::move(c));
    ++i;
  }
  m.validate();
  return m;
}

// ---- AffineMap -------------------------------------------------------------

inline void save_affine_map(const AffineMap& t, const std::string& prefix) {
  save_blocks({{"A", t.A}, {"b", t.b}, {"V_pq", t.V_pq}}, prefix + ".etcmb");
  json j;
  j["source_id"] = t.source_id;
  j["dest_id"] = t.dest_id;
  write_json_file(prefix + ".json", j);
}

inline AffineMap load_affine_map(const std::string& prefix) {
  const json j = read_json_file(prefix + ".json");
  const auto blocks = load_blocks(prefix + ".etcmb");
  AffineMap t;
  t.A = find_block(blocks, "A", prefix);
  t.b = find_block(blocks, "b", prefix);
  t.V_pq = find_block(blocks, "V_pq", prefix);
  t.source_id = j.at("source_id").get<std::string>();
  t.dest_id = j.at("dest_id").get<std::string>();
  return t;
}

// ---- MoEraser parameters ---------------------------------------------------

inline void save_moeraser(const MoEraserParams& p, const std::string& prefix,
                          std::uint64_t seed = 0, int step_count = 0) {
  p.validate();
  std::vector<TensorBlock> blocks;
  blocks.push_back({"router", p.router});
  for (std::size_t i = 0; i < p.experts.size(); ++i) {
    const std::string tag = "expert/" + std::to_string(i) + "/";
    blocks.push_back({tag + "w_in", p.experts[i].w_in});
    blocks.push_back({tag + "w_gate", p.experts[i].w_gate});
    blocks.push_back({tag + "w_out", p.experts[i].w_out});
  }
  blocks.push_back({"gamma", p.gamma});
  blocks.push_back({"beta", p.beta});
  save_blocks(blocks, prefix + ".etcmb");
  json j;
  j["d"] = p.d();
  j["experts"] = p.num_experts();
  j["hidden"] = p.hidden();
  j["top_k"] = p.top_k;
  j["seed"] = seed;
  j["step_count"] = step_count;
  write_json_file(prefix + ".json", j);
}

inline MoEraserParams load_moeraser(const std::string& prefix) {
  const json j = read_json_file(prefix + ".json");
  const auto blocks = load_blocks(prefix + ".etcmb");
  MoEraserParams p;
  p.router = find_block(blocks, "router", prefix);
  const int num_experts = j.at("experts").get<int>();
  for (int i = 0; i < num_experts; ++i) {
    const std::string tag = "expert/" + std::to_string(i) + "/";
    GluExpert e;
    e.w_in = find_block(blocks, tag + "w_in", prefix);
    e.w_gate = find_block(blocks, tag + "w_gate", prefix);
    e.w_out = find_block(blocks, tag + "w_out", prefix);
    p.experts.push_back(std::move(e));
  }
  p.gamma = find_block(blocks, "gamma", prefix);
  p.beta = find_block(blocks, "beta", prefix);
  p.top_k = j.at("top_k").get<int>();
  p.validate();
  return p;
}

// ---- ProjectionLayer (with corruption metadata) ----------------------------

inline void save_projection(const ProjectionLayer& layer,
                            const std::string& prefix) {
  std::vector<TensorBlock> blocks{{"w_proj", layer.w_proj}};
  if (layer.w_cor) blocks.push_back({"w_cor", *layer.w_cor});
  save_blocks(blocks, prefix + ".etcmb");
  json j;
  j["d_out"] = layer.d_out();
  j["d_in"] = layer.d_in();
  j["has_cor"] = bool(layer.w_cor);
  j["alpha"] = layer.noise_meta.alpha;
  j["rank"] = layer.noise_meta.rank;
  j["seed"] = layer.noise_meta.seed;
  write_json_file(prefix + ".json", j);
}

inline ProjectionLayer load_projection(const std::string& prefix) {
  const json j = read_json_file(prefix + ".json");
  const auto blocks = load_blocks(prefix + ".etcmb");
  ProjectionLayer layer;
  layer.w_proj = find_block(blocks, "w_proj", prefix);
  if (j.at("has_cor").get<bool>())
    layer.w_cor = find_block(blocks, "w_cor", prefix);
  layer.noise_meta.alpha = j.at("alpha").get<double>();
  layer.noise_meta.rank = j.at("rank").get<int>();
  layer.noise_meta.seed = j.at("seed").get<std::uint64_t>();
  return layer;
}

// ---- TripletDataset ---------------------------------------------------------

inline void save_triplets(const TripletDataset& data,
                          const std::string& prefix) {
  data.validate();
  save_blocks({{"f_tar", data.f_tar}, {"f_map", data.f_map},
               {"f_anc", data.f_anc}},
              prefix + ".etcmb");
  json j;
  j["target_id"] = data.provenance.target_id;
  j["mapping_ids"] = data.provenance.mapping_ids;
  j["tau1"] = data.provenance.tau1;
  j["seed"] = data.provenance.seed;
  write_json_file(prefix + ".json", j);
}

inline TripletDataset load_triplets(const std::string& prefix) {
  const json j = read_json_file(prefix + ".json");
  const auto blocks = load_blocks(prefix + ".etcmb");
  TripletDataset data;
  data.f_tar = find_block(blocks, "f_tar", prefix);
  data.f_map = find_block(blocks, "f_map", prefix);
  data.f_anc = find_block(blocks, "f_anc", prefix);
  data.provenance.target_id = j.at("target_id").get<std::string>();
  data.provenance.mapping_ids =
      j.at("mapping_ids").get<std::vector<std::string>>();
  data.provenance.tau1 = j.at("tau1").get<double>();
  data.provenance.seed = j.at("seed").get<std::uint64_t>();
  data.validate();
  return data;
}

// ---- Reports ----------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline json report_to_json(const EraseReport& rep) {
  json j;
  j["target_residual"] = rep.target_residual;
  j["anchor_residual"] = rep.anchor_residual;
  j["gaussian_residual"] = rep.gaussian_residual;
  j["untrained_target_residual"] = rep.untrained_target_residual;
  j["anchor_scale"] = rep.anchor_scale;
  j["h0_proxy"] = rep.h0_proxy;
  j["w2_before"] = rep.w2_before;
  j["w2_after"] = rep.w2_after;
  j["gaussian_flagged"] = rep.gaussian_flagged;
  return j;
}

inline std::string report_to_csv(const EraseReport& rep) {
  std::string s = "metric,value\n";
  const auto row = [&](const char* name, double v) {
    s += name;
    s += ',';
    s += format_double(v);
    s += '\n';
  };
  row("target_residual", rep.target_residual);
  row("anchor_residual", rep.anchor_residual);
  row("gaussian_residual", rep.gaussian_residual);
  row("untrained_target_residual", rep.untrained_target_residual);
  row("anchor_scale", rep.anchor_scale);
  row("h0_proxy", rep.h0_proxy);
  row("w2_before", rep.w2_before);
  row("w2_after", rep.w2_after);
  return s;
}

inline std::string expert_load_to_csv(const MatrixXd& load,
                                      const std::vector<std::string>& domains) {
  std::string s = "domain";
  for (int e = 0; e < load.cols(); ++e)
    s += ",expert_" + std::to_string(e);
  s += '\n';
  for (int r = 0; r < load.rows(); ++r) {
    s += domains[std::size_t(r)];
    for (int e = 0; e < load.cols(); ++e) {
      s += ',';
      s += format_double(load(r, e));
    }
    s += '\n';
  }
  return s;
}

inline std::string history_to_csv(
    const std::vector<std::pair<int, double>>& history) {
  std::string s = "step,loss\n";
  for (const auto& [step, loss] : history) {
    s += std::to_string(step);
    s += ',';
    s += format_double(loss);
    s += '\n';
  }
  return s;
}

}  // namespace etc
