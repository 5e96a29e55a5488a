// lasvad: synth | train | infer | eval | curves

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lasvad/config.hpp"
#include "lasvad/error.hpp"
#include "lasvad/synth.hpp"
#include "lasvad/trainer.hpp"

namespace fs = std::filesystem;
using namespace lasvad;

namespace {

using Overrides = std::map<std::string, std::optional<std::string>>;

// Registers --<key> for every training key so flags can override the config file.
void add_train_overrides(CLI::App* app, Overrides& overrides) {
  for (const std::string& key : TrainConfig::keys()) {
    overrides[key];
    app->add_option("--" + key, overrides[key], "override '" + key + "'")->group("Config overrides");
  }
}

void apply_overrides(TrainConfig& config, const Overrides& overrides) {
  for (const auto& [k, v] : overrides) {
    if (v) config.set(k, *v);
  }
}

int run(int argc, char** argv) {
  CLI::App app{"LAS-VAD weakly supervised video anomaly detection"};
  app.require_subcommand(1);

  std::string synth_config, synth_out;
  std::map<std::string, std::optional<std::string>> synth_overrides;
  auto* synth = app.add_subcommand("synth", "generate a synthetic feature corpus");
  synth->add_option("--config", synth_config, "key = value file (n_videos, C, D, T_min, T_max, anomaly_ratio, snr, seed)");
  synth->add_option("--out", synth_out, "output directory")->required();
  for (const char* key : {"n_videos", "C", "D", "T_min", "T_max", "anomaly_ratio", "snr", "seed"}) {
    synth_overrides[key];
    synth->add_option(std::string("--") + key, synth_overrides[key])->group("Config overrides");
  }

  std::string train_config, train_manifest, train_bank, train_out;
  Overrides train_overrides;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", train_config, "key = value training config");
  train_cmd->add_option("--manifest", train_manifest, "JSON-lines manifest")->required();
  train_cmd->add_option("--text-bank", train_bank, "text bank prefix (<prefix>.names.lasf, .attrs.lasf, .labels.txt)")
      ->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  add_train_overrides(train_cmd, train_overrides);

  std::string infer_ckpt, infer_manifest, infer_out, infer_components;
  Overrides infer_overrides;
  auto* infer_cmd = app.add_subcommand("infer", "score videos with a trained checkpoint");
  infer_cmd->add_option("--checkpoint", infer_ckpt)->required();
  infer_cmd->add_option("--manifest", infer_manifest)->required();
  infer_cmd->add_option("--out", infer_out, "predictions JSON-lines file")->required();
  infer_cmd->add_option("--components", infer_components, "optional ACC component dump (JSON lines)");
  add_train_overrides(infer_cmd, infer_overrides);

  std::string eval_pred, eval_manifest, eval_report;
  auto* eval_cmd = app.add_subcommand("eval", "frame AP/AUC and detection mAP");
  eval_cmd->add_option("--predictions", eval_pred)->required();
  eval_cmd->add_option("--manifest", eval_manifest)->required();
  eval_cmd->add_option("--report", eval_report, "write the JSON report here");

  std::string curves_pred, curves_manifest, curves_out;
  auto* curves_cmd = app.add_subcommand("curves", "per-video score CSVs");
  curves_cmd->add_option("--predictions", curves_pred)->required();
  curves_cmd->add_option("--manifest", curves_manifest)->required();
  curves_cmd->add_option("--out", curves_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  if (*synth) {
    std::map<std::string, std::string> values;
    if (!synth_config.empty()) values = read_key_values(synth_config);
    for (const auto& [k, v] : synth_overrides) {
      if (v) values[k] = *v;
    }
    const SynthCorpus corpus = generate_synthetic_corpus(synth_config_from_map(values), synth_out);
    std::cout << "wrote " << corpus.records.size() << " videos\n"
              << "manifest: " << corpus.manifest_path.string() << '\n'
              << "text bank: " << corpus.text_bank_prefix.string() << '\n';
  } else if (*train_cmd) {
    TrainConfig config = train_config.empty() ? TrainConfig{} : TrainConfig::from_map(read_key_values(train_config));
    apply_overrides(config, train_overrides);
    config.validate();
    const TrainOutputs out = train(config, train_manifest, train_bank, train_out);
    std::cout << "steps: " << out.steps.size() << '\n'
              << "checkpoint: " << out.checkpoint.string() << '\n'
              << "log: " << out.log.string() << '\n';
  } else if (*infer_cmd) {
    TrainState state = load_checkpoint(infer_ckpt);
    apply_overrides(state.config, infer_overrides);
    state.config.validate();
    const std::vector<VideoRecord> records = read_manifest(infer_manifest);
    std::ofstream components;
    if (!infer_components.empty()) {
      components.open(infer_components, std::ios::trunc);
      if (!components) throw IoError("cannot write " + infer_components);
    }
    const auto predictions = infer(state, records, infer_components.empty() ? nullptr : &components);
    write_predictions(fs::path(infer_out), predictions);
  } else if (*eval_cmd) {
    const EvalReport report = evaluate(read_predictions(eval_pred), read_manifest(eval_manifest));
    if (!eval_report.empty()) {
      std::ofstream f(eval_report, std::ios::trunc);
      if (!f) throw IoError("cannot write " + eval_report);
      f << report_json(report).dump(2) << '\n';
    }
    std::cout << report_table(report);
  } else if (*curves_cmd) {
    write_curves(read_predictions(curves_pred), read_manifest(curves_manifest), curves_out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "lasvad: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "lasvad: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kDataFormat);
  }
}
