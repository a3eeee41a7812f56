// Pipeline configuration: a flat `key = value` text format, parsed strictly.
// Unknown keys are rejected, every value is range-checked at parse time, and
// the only defaulted scientific parameters are the published operating
// points (d'=32, k=4, dof=2, tau1=0.9, tau2=0.3, tau3=0.5, M'=3, E=8,
// top-k=6, lambda=10, lr=0.01, batch 256, 8192 iters, alpha=2e-3).
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "etc/errors.hpp"

namespace etc {

struct PipelineConfig {
  // corpus
  std::string corpus_source;  // "synthetic" | "dir"
  std::string corpus_dir;
  int corpus_num_concepts = 0;
  int corpus_d = 0;
  int corpus_samples = 0;
  int corpus_modes = 1;
  double corpus_tail_dof = 2.0;
  int corpus_rank = 0;

  // stages
  int pca_d_prime = 32;
  int tmm_k = 4;
  double tmm_dof = 2.0;
  int tmm_max_iters = 200;
  double tmm_tol = 1e-7;
  double tmm_reg = 0.0;  // 0: auto
  double tau1 = 0.9;
  int m_prime = 3;
  double tau2 = 0.3;
  double tau3 = 0.5;
  int aot_n_samples = 4096;
  int aot_iters = 200;
  double aot_lr = 0.05;
  int moe_experts = 8;
  int moe_hidden = 0;  // required
  int moe_top_k = 6;
  double train_lambda = 10.0;
  double train_lr = 0.01;
  int train_batch_size = 256;
  int train_iters = 8192;
  int train_n_triplets = 0;  // required
  bool nir_enabled = true;
  double nir_alpha = 2e-3;
  int nir_rank = 0;   // required when nir enabled
  int nir_iters = 0;  // required when nir enabled
  int eval_n_random = 256;
  int proj_d_out = 0;  // 0: same as ambient d
  int num_targets = 0;  // required
  std::uint64_t seed = 0;
  std::string output = "out";
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct RawConfig {
  std::map<std::string, std::string> kv;
  std::map<std::string, bool> used;
};

inline RawConfig read_raw(std::istream& in, const std::string& where) {
  RawConfig raw;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw validation_error(where + ":" + std::to_string(lineno) +
                             ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty() || value.empty())
      throw validation_error(where + ":" + std::to_string(lineno) +
                             ": empty key or value");
    if (raw.kv.count(key))
      throw validation_error(where + ": duplicate key '" + key + "'");
    raw.kv[key] = value;
    raw.used[key] = false;
  }
  return raw;
}

inline bool fetch(RawConfig& raw, const std::string& key, std::string& out) {
  const auto it = raw.kv.find(key);
  if (it == raw.kv.end()) return false;
  raw.used[key] = true;
  out = it->second;
  return true;
}

template <typename T, typename Parse>
bool fetch_as(RawConfig& raw, const std::string& key, T& out, Parse parse) {
  std::string s;
  if (!fetch(raw, key, s)) return false;
  try {
    std::size_t pos = 0;
    out = parse(s, pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw validation_error("config field '" + key + "' has invalid value '" +
                           s + "'");
  }
  return true;
}

inline bool fetch_int(RawConfig& raw, const std::string& key, int& out) {
  return fetch_as(raw, key, out, [](const std::string& s, std::size_t& pos) {
    return std::stoi(s, &pos);
  });
}

inline bool fetch_u64(RawConfig& raw, const std::string& key,
                      std::uint64_t& out) {
  return fetch_as(raw, key, out, [](const std::string& s, std::size_t& pos) {
    return std::stoull(s, &pos);
  });
}

inline bool fetch_double(RawConfig& raw, const std::string& key, double& out) {
  return fetch_as(raw, key, out, [](const std::string& s, std::size_t& pos) {
    return std::stod(s, &pos);
  });
}

inline bool fetch_bool(RawConfig& raw, const std::string& key, bool& out) {
  std::string s;
  if (!fetch(raw, key, s)) return false;
  if (s == "true") {
    out = true;
  } else if (s == "false") {
    out = false;
  } else {
    throw validation_error("config field '" + key + "' must be true or false");
  }
  return true;
}

inline void require(bool present, const std::string& key) {
  if (!present)
    throw validation_error("config is missing required field '" + key + "'");
}

inline void check(bool ok, const std::string& what) {
  if (!ok) throw validation_error("config field " + what);
}

}  // namespace config_detail

inline PipelineConfig parse_config_stream(std::istream& in,
                                          const std::string& where) {
  using namespace config_detail;
  RawConfig raw = read_raw(in, where);
  PipelineConfig c;

  require(fetch(raw, "corpus.source", c.corpus_source), "corpus.source");
  if (c.corpus_source == "synthetic") {
    require(fetch_int(raw, "corpus.num_concepts", c.corpus_num_concepts),
            "corpus.num_concepts");
    require(fetch_int(raw, "corpus.d", c.corpus_d), "corpus.d");
    require(fetch_int(raw, "corpus.samples_per_concept", c.corpus_samples),
            "corpus.samples_per_concept");
    require(fetch_int(raw, "corpus.modes_per_concept", c.corpus_modes),
            "corpus.modes_per_concept");
    require(fetch_double(raw, "corpus.tail_dof", c.corpus_tail_dof),
            "corpus.tail_dof");
    require(fetch_int(raw, "corpus.intrinsic_rank", c.corpus_rank),
            "corpus.intrinsic_rank");
    check(c.corpus_num_concepts >= 2, "'corpus.num_concepts' must be >= 2");
    check(c.corpus_d >= 2, "'corpus.d' must be >= 2");
    check(c.corpus_samples >= 2, "'corpus.samples_per_concept' must be >= 2");
    check(c.corpus_modes >= 1, "'corpus.modes_per_concept' must be >= 1");
    check(c.corpus_tail_dof > 0.0, "'corpus.tail_dof' must be positive");
    check(c.corpus_rank >= 1 && c.corpus_rank <= c.corpus_d,
          "'corpus.intrinsic_rank' must lie in [1, corpus.d]");
  } else if (c.corpus_source == "dir") {
    require(fetch(raw, "corpus.dir", c.corpus_dir), "corpus.dir");
  } else {
    throw validation_error(
        "config field 'corpus.source' must be 'synthetic' or 'dir'");
  }

  fetch_int(raw, "pca.d_prime", c.pca_d_prime);
  check(c.pca_d_prime >= 1, "'pca.d_prime' must be >= 1");
  fetch_int(raw, "tmm.k", c.tmm_k);
  check(c.tmm_k >= 1, "'tmm.k' must be >= 1");
  fetch_double(raw, "tmm.dof", c.tmm_dof);
  check(c.tmm_dof > 0.0, "'tmm.dof' must be positive");
  fetch_int(raw, "tmm.max_iters", c.tmm_max_iters);
  check(c.tmm_max_iters >= 1, "'tmm.max_iters' must be >= 1");
  fetch_double(raw, "tmm.tol", c.tmm_tol);
  check(c.tmm_tol > 0.0, "'tmm.tol' must be positive");
  fetch_double(raw, "tmm.reg", c.tmm_reg);
  check(c.tmm_reg >= 0.0, "'tmm.reg' must be >= 0 (0 selects the default)");
  fetch_double(raw, "regions.tau1", c.tau1);
  check(c.tau1 > 0.0 && c.tau1 < 1.0,
        "'regions.tau1' must lie strictly inside (0, 1)");
  fetch_int(raw, "selection.m_prime", c.m_prime);
  check(c.m_prime >= 1, "'selection.m_prime' must be >= 1");
  fetch_double(raw, "selection.tau2", c.tau2);
  check(c.tau2 >= -1.0 && c.tau2 <= 1.0,
        "'selection.tau2' must be a cosine in [-1, 1]");
  fetch_double(raw, "selection.tau3", c.tau3);
  check(c.tau3 > 0.0, "'selection.tau3' must be positive");
  fetch_int(raw, "aot.n_samples", c.aot_n_samples);
  check(c.aot_n_samples >= 8, "'aot.n_samples' must be >= 8");
  fetch_int(raw, "aot.iters", c.aot_iters);
  check(c.aot_iters >= 0, "'aot.iters' must be >= 0");
  fetch_double(raw, "aot.lr", c.aot_lr);
  check(c.aot_lr > 0.0, "'aot.lr' must be positive");
  fetch_int(raw, "moe.experts", c.moe_experts);
  check(c.moe_experts >= 1, "'moe.experts' must be >= 1");
  require(fetch_int(raw, "moe.hidden", c.moe_hidden), "moe.hidden");
  check(c.moe_hidden >= 1, "'moe.hidden' must be >= 1");
  fetch_int(raw, "moe.top_k", c.moe_top_k);
  check(c.moe_top_k >= 1 && c.moe_top_k <= c.moe_experts,
        "'moe.top_k' must lie in [1, moe.experts]");
  fetch_double(raw, "train.lambda", c.train_lambda);
  check(c.train_lambda >= 0.0, "'train.lambda' must be >= 0");
  fetch_double(raw, "train.lr", c.train_lr);
  check(c.train_lr > 0.0, "'train.lr' must be positive");
  fetch_int(raw, "train.batch_size", c.train_batch_size);
  check(c.train_batch_size >= 1, "'train.batch_size' must be >= 1");
  fetch_int(raw, "train.iters", c.train_iters);
  check(c.train_iters >= 0, "'train.iters' must be >= 0");
  require(fetch_int(raw, "train.n_triplets", c.train_n_triplets),
          "train.n_triplets");
  check(c.train_n_triplets >= 1, "'train.n_triplets' must be >= 1");
  fetch_bool(raw, "nir.enabled", c.nir_enabled);
  if (c.nir_enabled) {
    fetch_double(raw, "nir.alpha", c.nir_alpha);
    check(c.nir_alpha >= 0.0, "'nir.alpha' must be >= 0");
    require(fetch_int(raw, "nir.rank", c.nir_rank), "nir.rank");
    check(c.nir_rank >= 1, "'nir.rank' must be >= 1");
    require(fetch_int(raw, "nir.iters", c.nir_iters), "nir.iters");
    check(c.nir_iters >= 0, "'nir.iters' must be >= 0");
  } else {
    // Accept but ignore the knobs so configs can toggle the stage off.
    fetch_double(raw, "nir.alpha", c.nir_alpha);
    fetch_int(raw, "nir.rank", c.nir_rank);
    fetch_int(raw, "nir.iters", c.nir_iters);
  }
  fetch_int(raw, "eval.n_random", c.eval_n_random);
  check(c.eval_n_random >= 0, "'eval.n_random' must be >= 0");
  fetch_int(raw, "proj.d_out", c.proj_d_out);
  check(c.proj_d_out >= 0, "'proj.d_out' must be >= 0 (0 means ambient d)");
  require(fetch_int(raw, "targets", c.num_targets), "targets");
  check(c.num_targets >= 1, "'targets' must be >= 1");
  require(fetch_u64(raw, "seed", c.seed), "seed");
  fetch(raw, "output", c.output);

  if (c.corpus_source == "synthetic") {
    check(c.num_targets < c.corpus_num_concepts,
          "'targets' must leave at least one pool concept");
    check(c.corpus_num_concepts - c.num_targets >= c.m_prime,
          "'corpus.num_concepts' minus targets must cover selection.m_prime");
    check(c.pca_d_prime <= std::min(c.corpus_d, c.corpus_samples - 1),
          "'pca.d_prime' must be <= min(corpus.d, samples-1)");
  }

  for (const auto& [key, used] : raw.used)
    if (!used) throw validation_error("unknown config key '" + key + "'");

  return c;
}

inline PipelineConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  return parse_config_stream(in, path);
}

}  // namespace etc
