// Command-line front end: `etc run --config <path>` executes the whole
// pipeline; each stage is also exposed as its own subcommand against an
// existing artifact directory. Exit codes: 0 ok, 2 validation, 3 dependency,
// 4 numerical, 5 I/O.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "etc/config.hpp"
#include "etc/log.hpp"
#include "etc/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string output_override;
  int workers = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "pipeline config file")
      ->required();
  cmd->add_option("--output", args.output_override,
                  "artifact directory (overrides the config's `output`)");
  cmd->add_option("--workers", args.workers, "parallel workers per stage")
      ->check(CLI::PositiveNumber);
}

int dispatch(const CommonArgs& args, const std::string& stage) {
  const etc::PipelineConfig cfg = etc::parse_config(args.config_path);
  const std::string out_dir =
      args.output_override.empty() ? cfg.output : args.output_override;
  etc::Pipeline pipeline(cfg, out_dir, args.workers);
  if (stage == "run") {
    pipeline.run_all();
  } else {
    pipeline.run_stage(stage);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"concept-erasure pipeline over embedding files"};
  app.require_subcommand(1);

  const char* stages[] = {"run",   "synth", "fit", "select", "transport",
                          "build", "train", "nir", "eval"};
  const char* descriptions[] = {
      "run every stage in order",
      "generate or ingest the embedding corpus",
      "fit per-concept PCA bases and t-mixtures",
      "choose mapping concepts per target",
      "fit merged mapping distributions and transport maps",
      "sample triplet datasets and the frozen projector",
      "train the erasure module",
      "corrupt the projector and fine-tune for restoration",
      "write residual/report artifacts"};

  CommonArgs args;
  std::string chosen;
  for (std::size_t i = 0; i < std::size(stages); ++i) {
    CLI::App* cmd = app.add_subcommand(stages[i], descriptions[i]);
    add_common(cmd, args);
    cmd->callback([&chosen, name = std::string(stages[i])] { chosen = name; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    return dispatch(args, chosen);
  } catch (const etc::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
