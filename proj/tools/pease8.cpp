// PEASE-8 pipeline driver: synthesize datasets, train, evaluate, report.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "pease/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"PEASE-8 binaural speaker separation pipeline"};
  app.require_subcommand(1);

  std::string config, out, checkpoint, manifest, report_file, resume;
  uint64_t seed = 0;
  bool seed_set = false, overwrite = false, quiet = false;

  const char* env_root = std::getenv("PEASE_OUT_ROOT");
  const std::string root = env_root ? env_root : ".";

  auto add_common = [&](CLI::App* cmd, const std::string& default_out) {
    cmd->add_option("--out", out, "output directory")
        ->default_val(root + "/" + default_out);
    cmd->add_flag("--overwrite", overwrite, "replace existing outputs");
    cmd->add_flag("--quiet", quiet, "suppress progress output");
  };

  auto* synth = app.add_subcommand("synth", "render a spatialized dataset");
  synth->add_option("--config", config, "scene config (JSON)")->required();
  synth->add_option("--seed", seed, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });
  add_common(synth, "dataset");

  auto* train = app.add_subcommand("train", "train the separation model");
  train->add_option("--config", config, "train config (JSON)")->required();
  train->add_option("--checkpoint", resume, "resume from a last.ckpt");
  add_common(train, "run");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or baseline");
  eval->add_option("--checkpoint", checkpoint,
                   "model checkpoint (omit for the unprocessed baseline)");
  eval->add_option("--manifest", manifest, "test manifest (JSONL)")->required();
  add_common(eval, "eval");

  auto* report = app.add_subcommand("report", "render plots and tables");
  report->add_option("--report", report_file, "report.json from eval")
      ->required();
  add_common(report, "report");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      pease::cmd_synth(config, out,
                       seed_set ? std::optional<uint64_t>(seed) : std::nullopt,
                       overwrite, quiet);
    } else if (*train) {
      pease::cmd_train(config, out,
                       resume.empty() ? std::nullopt
                                      : std::optional<std::string>(resume),
                       quiet);
    } else if (*eval) {
      pease::cmd_eval(checkpoint, manifest, out, overwrite, quiet);
    } else if (*report) {
      pease::cmd_report(report_file, out, quiet);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
