// Stage orchestration: synth -> fit -> select -> transport -> build -> train
// -> nir -> eval, with every artifact persisted and a manifest recording
// content hashes of each stage's configuration slice, inputs, and outputs.
// A stage re-runs whenever any of those hashes disagree with the manifest;
// otherwise it is skipped. All randomness derives from the config seed, so
// clean runs are byte-identical.
#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "etc/config.hpp"
#include "etc/log.hpp"
#include "etc/mapselect.hpp"
#include "etc/metrics.hpp"
#include "etc/serialize.hpp"
#include "etc/sha256.hpp"
#include "etc/synth.hpp"

namespace etc {

namespace fs = std::filesystem;

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{
      "synth", "fit", "select", "transport", "build", "train", "nir", "eval"};
  return names;
}

inline int stage_index(const std::string& name) {
  const auto& names = stage_names();
  for (int i = 0; i < int(names.size()); ++i)
    if (names[std::size_t(i)] == name) return i;
  throw validation_error("unknown stage '" + name + "'");
}

namespace pipeline_detail {

// Deterministic fan-out: results are indexed, worker count only affects wall
// time. The first exception (by item index) wins.
inline void parallel_for(int n, int workers,
                         const std::function<void(int)>& fn) {
  if (n <= 0) return;
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w)
    threads.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          errors[std::size_t(i)] = std::current_exception();
        }
      }
    });
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::string config_slice(const PipelineConfig& c,
                                const std::string& stage) {
  std::ostringstream s;
  s.precision(17);
  if (stage == "synth") {
    s << c.corpus_source << '|' << c.corpus_dir << '|' << c.corpus_num_concepts
      << '|' << c.corpus_d << '|' << c.corpus_samples << '|' << c.corpus_modes
      << '|' << c.corpus_tail_dof << '|' << c.corpus_rank << '|' << c.seed;
  } else if (stage == "fit") {
    s << c.pca_d_prime << '|' << c.tmm_k << '|' << c.tmm_dof << '|'
      << c.tmm_max_iters << '|' << c.tmm_tol << '|' << c.tmm_reg << '|'
      << c.seed;
  } else if (stage == "select") {
    s << c.m_prime << '|' << c.tau2 << '|' << c.tau3 << '|' << c.num_targets;
  } else if (stage == "transport") {
    s << c.pca_d_prime << '|' << c.tmm_k << '|' << c.tmm_dof << '|'
      << c.tmm_max_iters << '|' << c.tmm_tol << '|' << c.tmm_reg << '|'
      << c.aot_n_samples << '|' << c.aot_iters << '|' << c.aot_lr << '|'
      << c.seed;
  } else if (stage == "build") {
    s << c.tau1 << '|' << c.train_n_triplets << '|' << c.proj_d_out << '|'
      << c.seed;
  } else if (stage == "train") {
    s << c.moe_experts << '|' << c.moe_hidden << '|' << c.moe_top_k << '|'
      << c.train_lambda << '|' << c.train_lr << '|' << c.train_batch_size
      << '|' << c.train_iters << '|' << c.seed;
  } else if (stage == "nir") {
    s << c.nir_enabled << '|' << c.nir_alpha << '|' << c.nir_rank << '|'
      << c.nir_iters << '|' << c.train_lr << '|' << c.train_batch_size << '|'
      << c.seed;
  } else if (stage == "eval") {
    s << c.eval_n_random << '|' << c.nir_enabled << '|' << c.seed;
  } else {
    throw validation_error("unknown stage '" + stage + "'");
  }
  return sha256_hex(s.str());
}

}  // namespace pipeline_detail

class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, std::string out_dir, int workers = 1)
      : cfg_(std::move(cfg)),
        out_(std::move(out_dir)),
        workers_(std::max(1, workers)) {
    fs::create_directories(out_);
    manifest_path_ = (fs::path(out_) / "manifest.json").string();
    if (fs::exists(manifest_path_)) manifest_ = read_json_file(manifest_path_);
    if (!manifest_.is_object()) manifest_ = json::object();
  }

  const PipelineConfig& config() const { return cfg_; }
  const std::string& out_dir() const { return out_; }

  // Runs one stage, honoring the manifest skip rules. Returns true if the
  // stage actually executed (false: skipped as up to date).
  bool run_stage(const std::string& name) {
    require_upstream(name);
    const std::string cfg_hash = pipeline_detail::config_slice(cfg_, name);
    if (can_skip(name, cfg_hash)) {
      log_info("stage " + name + ": up to date, skipping");
      return false;
    }
    log_info("stage " + name + ": running");
    inputs_.clear();
    outputs_.clear();
    if (name == "synth") {
      stage_synth();
    } else if (name == "fit") {
      stage_fit();
    } else if (name == "select") {
      stage_select();
    } else if (name == "transport") {
      stage_transport();
    } else if (name == "build") {
      stage_build();
    } else if (name == "train") {
      stage_train();
    } else if (name == "nir") {
      stage_nir();
    } else if (name == "eval") {
      stage_eval();
    }
    record(name, cfg_hash);
    return true;
  }

  void run_all() {
    for (const auto& name : stage_names()) {
      if (name == "nir" && !cfg_.nir_enabled) continue;
      run_stage(name);
    }
  }

  // --- shared artifact paths -------------------------------------------

  std::string path(const std::string& rel) const {
    return (fs::path(out_) / rel).string();
  }

  std::vector<std::string> concept_ids() {
    const json idx = read_json_file(path("corpus/index.json"));
    return idx.at("concepts").get<std::vector<std::string>>();
  }

  std::vector<std::string> target_ids() {
    auto ids = concept_ids();
    if (int(ids.size()) <= cfg_.num_targets)
      throw validation_error("corpus too small for requested target count");
    ids.resize(std::size_t(cfg_.num_targets));
    return ids;
  }

  std::vector<std::string> pool_ids() {
    const auto ids = concept_ids();
    return {ids.begin() + cfg_.num_targets, ids.end()};
  }

 private:
  // --- manifest bookkeeping --------------------------------------------

  void require_upstream(const std::string& name) {
    const int idx = stage_index(name);
    for (int i = 0; i < idx; ++i) {
      const std::string& dep = stage_names()[std::size_t(i)];
      if (dep == "nir" && !cfg_.nir_enabled) continue;
      if (!manifest_.contains(dep))
        throw dependency_error("stage '" + name + "' requires: " + dep);
    }
    if (name == "nir" && !cfg_.nir_enabled)
      throw validation_error("nir stage requested but nir.enabled is false");
  }

  bool can_skip(const std::string& name, const std::string& cfg_hash) {
    if (name == "nir" && !cfg_.nir_enabled) return true;
    if (!manifest_.contains(name)) return false;
    const json& entry = manifest_[name];
    if (entry.value("config_hash", "") != cfg_hash) {
      log_info("stage " + name + ": configuration changed, re-running");
      return false;
    }
    for (const auto& [rel, hash] : entry.at("inputs").items()) {
      const std::string p = path(rel);
      if (!fs::exists(p) || sha256_file_hex(p) != hash.get<std::string>()) {
        log_info("stage " + name + ": input changed: " + rel);
        return false;
      }
    }
    for (const auto& [rel, hash] : entry.at("outputs").items()) {
      const std::string p = path(rel);
      if (!fs::exists(p) || sha256_file_hex(p) != hash.get<std::string>()) {
        log_info("stage " + name + ": output missing or changed: " + rel);
        return false;
      }
    }
    return true;
  }

  void record(const std::string& name, const std::string& cfg_hash) {
    json entry;
    entry["config_hash"] = cfg_hash;
    json in = json::object(), out = json::object();
    for (const auto& rel : inputs_) in[rel] = sha256_file_hex(path(rel));
    for (const auto& rel : outputs_) out[rel] = sha256_file_hex(path(rel));
    entry["inputs"] = in;
    entry["outputs"] = out;
    manifest_[name] = entry;
    write_json_file(manifest_path_, manifest_);
  }

  void note_input(const std::string& rel) { inputs_.push_back(rel); }
  void note_output(const std::string& rel) { outputs_.push_back(rel); }

  void note_artifact_pair(std::vector<std::string>& list,
                          const std::string& prefix_rel) {
    list.push_back(prefix_rel + ".json");
    list.push_back(prefix_rel + ".etcmb");
  }

  // --- stages ------------------------------------------------------------

  void stage_synth() {
    fs::create_directories(path("corpus"));
    std::vector<std::string> ids;
    if (cfg_.corpus_source == "synthetic") {
      SyntheticCorpusSpec spec;
      spec.num_concepts = cfg_.corpus_num_concepts;
      spec.d = cfg_.corpus_d;
      spec.samples_per_concept = cfg_.corpus_samples;
      spec.modes_per_concept = cfg_.corpus_modes;
      spec.tail_dof = cfg_.corpus_tail_dof;
      spec.intrinsic_rank = cfg_.corpus_rank;
      spec.seed = cfg_.seed;
      const auto corpus = gen_synthetic_corpus(spec);
      for (const auto& m : corpus) {
        const std::string rel = "corpus/" + m.concept_id + ".etcm";
        save_matrix(m, path(rel));
        note_output(rel);
        ids.push_back(m.concept_id);
      }
    } else {
      // Ingest: copy external ETCM files into the artifact tree so the
      // manifest governs them like any other stage output.
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(cfg_.corpus_dir))
        if (e.path().extension() == ".etcm") files.push_back(e.path());
      if (files.empty())
        throw validation_error("no .etcm files found in " + cfg_.corpus_dir);
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        const EmbeddingMatrix m = load_matrix(f.string());
        const std::string rel = "corpus/" + m.concept_id + ".etcm";
        save_matrix(m, path(rel));
        note_output(rel);
        ids.push_back(m.concept_id);
      }
    }
    json idx;
    idx["concepts"] = ids;
    write_json_file(path("corpus/index.json"), idx);
    note_output("corpus/index.json");
  }

  void stage_fit() {
    fs::create_directories(path("pca"));
    fs::create_directories(path("tmm"));
    const auto ids = concept_ids();
    note_input("corpus/index.json");
    for (const auto& id : ids) note_input("corpus/" + id + ".etcm");
    pipeline_detail::parallel_for(
        int(ids.size()), workers_, [&](int i) {
          const std::string& id = ids[std::size_t(i)];
          const EmbeddingMatrix x = load_matrix(path("corpus/" + id + ".etcm"));
          const int dp =
              std::min(cfg_.pca_d_prime, std::min(x.d(), x.n() - 1));
          const Basis basis = fit_pca(x, dp);
          save_basis(basis, path("pca/" + id));
          const CompressedEmbeddings z = project(basis, x);
          TmmOptions opts;
          opts.max_iters = cfg_.tmm_max_iters;
          opts.tol = cfg_.tmm_tol;
          opts.reg = cfg_.tmm_reg > 0.0 ? cfg_.tmm_reg : -1.0;
          opts.seed = derive_seed(cfg_.seed, hash_string("fit:" + id));
          const TmmFitResult fit = fit_tmm(z, cfg_.tmm_k, cfg_.tmm_dof, opts);
          save_tmm(fit.mixture, path("tmm/" + id));
        });
    for (const auto& id : ids) {
      note_artifact_pair(outputs_, "pca/" + id);
      note_artifact_pair(outputs_, "tmm/" + id);
    }
  }

  void stage_select() {
    fs::create_directories(path("select"));
    const auto targets = target_ids();
    const auto pool_list = pool_ids();
    note_input("corpus/index.json");
    for (const auto& id : concept_ids()) note_input("corpus/" + id + ".etcm");

    ConceptPool pool;
    for (const auto& id : pool_list)
      pool.add(load_matrix(path("corpus/" + id + ".etcm")));
    SelectionConfig sc{cfg_.m_prime, cfg_.tau2, cfg_.tau3};
    for (const auto& target : targets) {
      const EmbeddingMatrix tx = load_matrix(path("corpus/" + target + ".etcm"));
      const SelectionResult res = select_mapping_concepts(tx, pool, sc);
      json j;
      j["target_id"] = res.target_id;
      j["mapping_ids"] = res.mapping_ids;
      j["trace"] = res.trace;
      j["chosen_anchor_j"] = res.anchor_id;
      j["scanned"] = res.scanned;
      const std::string rel = "select/" + target + ".json";
      write_json_file(path(rel), j);
      note_output(rel);
    }
  }

  void stage_transport() {
    fs::create_directories(path("transport"));
    const auto targets = target_ids();
    note_input("corpus/index.json");
    for (const auto& target : targets) {
      note_input("select/" + target + ".json");
      note_artifact_pair(inputs_, "pca/" + target);
      note_artifact_pair(inputs_, "tmm/" + target);
    }
    // Mapping concepts enter through their raw embeddings (they are re-fit
    // in the shared mapping basis), so hash those too.
    for (const auto& id : pool_ids()) note_input("corpus/" + id + ".etcm");

    pipeline_detail::parallel_for(
        int(targets.size()), workers_, [&](int ti) {
          const std::string& target = targets[std::size_t(ti)];
          const json sel = read_json_file(path("select/" + target + ".json"));
          const auto mapping_ids =
              sel.at("mapping_ids").get<std::vector<std::string>>();

          // Shared mapping basis over the stacked mapping embeddings.
          std::vector<EmbeddingMatrix> mats;
          Eigen::Index cols = 0;
          for (const auto& id : mapping_ids) {
            mats.push_back(load_matrix(path("corpus/" + id + ".etcm")));
            cols += mats.back().data.cols();
          }
          MatrixXd stacked(mats[0].data.rows(), cols);
          Eigen::Index at = 0;
          for (const auto& m : mats) {
            stacked.middleCols(at, m.data.cols()) = m.data;
            at += m.data.cols();
          }
          EmbeddingMatrix merged_mat{"map:" + target, stacked};
          const int dp = std::min(
              cfg_.pca_d_prime,
              std::min(int(stacked.rows()), int(stacked.cols()) - 1));
          const Basis basis_map = fit_pca(merged_mat, dp);
          save_basis(basis_map, path("transport/" + target + ".mapbasis"));

          // Per-concept mixtures in the shared space, merged equally.
          std::vector<TMixture> mixes;
          for (const auto& m : mats) {
            const CompressedEmbeddings z = project(basis_map, m);
            TmmOptions opts;
            opts.max_iters = cfg_.tmm_max_iters;
            opts.tol = cfg_.tmm_tol;
            opts.reg = cfg_.tmm_reg > 0.0 ? cfg_.tmm_reg : -1.0;
            opts.seed = derive_seed(
                cfg_.seed, hash_string("map:" + target + ":" + m.concept_id));
            mixes.push_back(
                fit_tmm(z, cfg_.tmm_k, cfg_.tmm_dof, opts).mixture);
          }
          const std::vector<double> weights(mixes.size(),
                                            1.0 / double(mixes.size()));
          const TMixture merged = merge(mixes, weights);
          save_tmm(merged, path("transport/" + target + ".merged"));

          const Basis basis_tar = load_basis(path("pca/" + target));
          const TMixture tar_mix = load_tmm(path("tmm/" + target));
          AotOptions opts;
          opts.n_samples = cfg_.aot_n_samples;
          opts.iters = cfg_.aot_iters;
          opts.lr = cfg_.aot_lr;
          opts.seed = derive_seed(cfg_.seed, hash_string("aot:" + target));
          AffineMap map = estimate_affine_map(
              tar_mix, merged, compose_basis(basis_tar, basis_map), opts);
          map.source_id = target;
          map.dest_id = "map:" + target;
          save_affine_map(map, path("transport/" + target + ".map"));
        });
    for (const auto& target : targets) {
      note_artifact_pair(outputs_, "transport/" + target + ".mapbasis");
      note_artifact_pair(outputs_, "transport/" + target + ".merged");
      note_artifact_pair(outputs_, "transport/" + target + ".map");
    }
  }

  void stage_build() {
    fs::create_directories(path("build"));
    const auto targets = target_ids();
    for (const auto& target : targets) {
      note_artifact_pair(inputs_, "pca/" + target);
      note_artifact_pair(inputs_, "tmm/" + target);
      note_artifact_pair(inputs_, "transport/" + target + ".mapbasis");
      note_artifact_pair(inputs_, "transport/" + target + ".merged");
      note_artifact_pair(inputs_, "transport/" + target + ".map");
    }
    int ambient_d = 0;
    pipeline_detail::parallel_for(
        int(targets.size()), workers_, [&](int ti) {
          const std::string& target = targets[std::size_t(ti)];
          const Basis basis_tar = load_basis(path("pca/" + target));
          const Basis basis_map =
              load_basis(path("transport/" + target + ".mapbasis"));
          const TMixture tar_mix = load_tmm(path("tmm/" + target));
          const TMixture merged =
              load_tmm(path("transport/" + target + ".merged"));
          const AffineMap map =
              load_affine_map(path("transport/" + target + ".map"));
          TripletDataset data = build_triplets(
              tar_mix, merged, map, basis_tar, basis_map, cfg_.tau1,
              cfg_.train_n_triplets,
              derive_seed(cfg_.seed, hash_string("triplets:" + target)));
          const json sel = read_json_file(path("select/" + target + ".json"));
          data.provenance.mapping_ids =
              sel.at("mapping_ids").get<std::vector<std::string>>();
          save_triplets(data, path("build/" + target + ".triplets"));
        });
    for (const auto& target : targets) {
      note_input("select/" + target + ".json");
      note_artifact_pair(outputs_, "build/" + target + ".triplets");
    }

    // Frozen projector: a seeded full-rank stand-in for the model's text
    // embedding projection.
    {
      const Basis b = load_basis(path("pca/" + targets[0]));
      ambient_d = b.d();
      const int d_out = cfg_.proj_d_out > 0 ? cfg_.proj_d_out : ambient_d;
      Rng rng(derive_seed(cfg_.seed, hash_string("projector")));
      ProjectionLayer layer;
      layer.w_proj =
          rng.normal_matrix(d_out, ambient_d) / std::sqrt(double(ambient_d));
      save_projection(layer, path("build/projection"));
      note_artifact_pair(outputs_, "build/projection");
    }
  }

  TripletDataset load_all_triplets() {
    const auto targets = target_ids();
    std::vector<TripletDataset> parts;
    for (const auto& target : targets)
      parts.push_back(load_triplets(path("build/" + target + ".triplets")));
    TripletDataset all = parts[0];
    if (parts.size() > 1) {
      Eigen::Index total = 0;
      for (const auto& p : parts) total += p.f_tar.cols();
      const Eigen::Index d = parts[0].f_tar.rows();
      all.f_tar.resize(d, total);
      all.f_map.resize(d, total);
      all.f_anc.resize(d, total);
      Eigen::Index at = 0;
      std::string joined;
      for (const auto& p : parts) {
        all.f_tar.middleCols(at, p.f_tar.cols()) = p.f_tar;
        all.f_map.middleCols(at, p.f_map.cols()) = p.f_map;
        all.f_anc.middleCols(at, p.f_anc.cols()) = p.f_anc;
        at += p.f_tar.cols();
        joined += (joined.empty() ? "" : "+") + p.provenance.target_id;
      }
      all.provenance.target_id = joined;
    }
    return all;
  }

  void stage_train() {
    fs::create_directories(path("train"));
    const auto targets = target_ids();
    for (const auto& target : targets)
      note_artifact_pair(inputs_, "build/" + target + ".triplets");
    note_artifact_pair(inputs_, "build/projection");

    const TripletDataset data = load_all_triplets();
    const ProjectionLayer layer = load_projection(path("build/projection"));
    const std::uint64_t init_seed =
        derive_seed(cfg_.seed, hash_string("moe-init"));
    MoEraserParams p0 = init_moeraser(data.d(), cfg_.moe_experts,
                                      cfg_.moe_hidden, cfg_.moe_top_k,
                                      init_seed);
    TrainConfig tc;
    tc.lambda = cfg_.train_lambda;
    tc.lr = cfg_.train_lr;
    tc.batch_size = cfg_.train_batch_size;
    tc.iters = cfg_.train_iters;
    tc.seed = derive_seed(cfg_.seed, hash_string("train"));
    const TrainResult result = train(p0, layer.w_proj, data, tc);
    save_moeraser(result.params, path("train/moeraser"), init_seed,
                  cfg_.train_iters);
    write_text_file(path("train/history.csv"), history_to_csv(result.history));
    note_artifact_pair(outputs_, "train/moeraser");
    note_output("train/history.csv");
  }

  void stage_nir() {
    fs::create_directories(path("nir"));
    const auto targets = target_ids();
    for (const auto& target : targets)
      note_artifact_pair(inputs_, "build/" + target + ".triplets");
    note_artifact_pair(inputs_, "build/projection");
    note_artifact_pair(inputs_, "train/moeraser");

    const TripletDataset data = load_all_triplets();
    ProjectionLayer layer = load_projection(path("build/projection"));
    const MoEraserParams trained = load_moeraser(path("train/moeraser"));
    layer = corrupt_projection(
        layer, data.f_tar, cfg_.nir_rank, cfg_.nir_alpha,
        derive_seed(cfg_.seed, hash_string("nir-noise")));
    TrainConfig tc;
    tc.lambda = 0.0;
    tc.lr = cfg_.train_lr;
    tc.batch_size = cfg_.train_batch_size;
    tc.iters = cfg_.nir_iters;
    tc.seed = derive_seed(cfg_.seed, hash_string("nir-tune"));
    const NirResult result = nir_finetune(trained, layer, data, tc);
    save_projection(layer, path("nir/projection"));
    save_moeraser(result.params, path("nir/moeraser"), tc.seed, cfg_.nir_iters);
    write_text_file(path("nir/history.csv"), history_to_csv(result.history));
    note_artifact_pair(outputs_, "nir/projection");
    note_artifact_pair(outputs_, "nir/moeraser");
    note_output("nir/history.csv");
  }

  void stage_eval() {
    fs::create_directories(path("eval"));
    const auto targets = target_ids();
    for (const auto& target : targets)
      note_artifact_pair(inputs_, "build/" + target + ".triplets");
    note_artifact_pair(inputs_, "build/projection");
    note_artifact_pair(inputs_, "train/moeraser");
    if (cfg_.nir_enabled) {
      note_artifact_pair(inputs_, "nir/projection");
      note_artifact_pair(inputs_, "nir/moeraser");
    }

    const TripletDataset data = load_all_triplets();
    const ProjectionLayer layer = load_projection(path("build/projection"));
    const MoEraserParams trained = load_moeraser(path("train/moeraser"));
    const EraseReport rep = residual_stats(
        trained, layer.w_proj, data, cfg_.eval_n_random,
        derive_seed(cfg_.seed, hash_string("eval")));
    json j = report_to_json(rep);

    if (cfg_.nir_enabled) {
      const ProjectionLayer cor = load_projection(path("nir/projection"));
      const MoEraserParams tuned = load_moeraser(path("nir/moeraser"));
      const auto ratios = nir_eval_ratios(trained, tuned, cor, data);
      j["nir_restoration_ratio"] = ratios.first;
      j["nir_removal_ratio"] = ratios.second;
    }
    write_json_file(path("eval/report.json"), j);
    std::string csv = report_to_csv(rep);
    if (cfg_.nir_enabled) {
      csv += "nir_restoration_ratio," +
             format_double(j["nir_restoration_ratio"].get<double>()) + "\n";
      csv += "nir_removal_ratio," +
             format_double(j["nir_removal_ratio"].get<double>()) + "\n";
    }
    write_text_file(path("eval/report.csv"), csv);
    write_text_file(path("eval/expert_load.csv"),
                    expert_load_to_csv(rep.expert_load, rep.load_domains));
    note_output("eval/report.json");
    note_output("eval/report.csv");
    note_output("eval/expert_load.csv");
  }

 public:
  // Restoration: residual of (corrupted projector + tuned module) against the
  // original projector behavior, relative to the raw corruption acting on the
  // frozen branch. Removal: the same residual with the module deleted,
  // relative to the with-module residual.
  static std::pair<double, double> nir_eval_ratios(
      const MoEraserParams& trained, const MoEraserParams& tuned,
      const ProjectionLayer& layer, const TripletDataset& data) {
    const MatrixXd& w_cor = layer.corrupted();
    const int probe = std::min(data.n(), 256);
    Rng rng(derive_seed(data.provenance.seed, hash_string("nir-eval")));
    std::vector<VectorXd> inputs;
    for (int j = 0; j < probe; ++j) inputs.push_back(data.f_tar.col(j));
    for (int j = 0; j < probe; ++j) inputs.push_back(data.f_anc.col(j));
    for (int j = 0; j < probe; ++j)
      inputs.push_back(rng.normal_vector(data.d()));
    double restored = 0.0, raw = 0.0, removed = 0.0;
    for (const auto& f : inputs) {
      const auto [out_frozen, r1] = forward(trained, f);
      const auto [out_tuned, r2] = forward(tuned, f);
      const VectorXd reference = layer.w_proj * (out_frozen + f);
      restored += (w_cor * (out_tuned + f) - reference).norm();
      raw += ((w_cor - layer.w_proj) * (out_frozen + f)).norm();
      removed += (w_cor * f - reference).norm();
    }
    const double restoration_ratio = raw > 0.0 ? restored / raw : 0.0;
    const double removal_ratio = restored > 0.0 ? removed / restored : 0.0;
    return {restoration_ratio, removal_ratio};
  }

 private:
  PipelineConfig cfg_;
  std::string out_;
  int workers_;
  std::string manifest_path_;
  json manifest_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
};

// Convenience wrapper for the CLI `run` command.
inline void run_pipeline(const PipelineConfig& cfg, const std::string& out_dir,
                         int workers = 1) {
  Pipeline p(cfg, out_dir, workers);
  p.run_all();
}

}  // namespace etc
