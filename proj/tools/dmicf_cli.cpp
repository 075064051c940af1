// dmicf: train, evaluate and inspect dual-perspective intent recommenders.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "dmicf/checkpoint.hpp"
#include "dmicf/config.hpp"
#include "dmicf/eval.hpp"
#include "dmicf/graph.hpp"
#include "dmicf/model.hpp"
#include "dmicf/synthetic.hpp"
#include "dmicf/tensor.hpp"
#include "dmicf/trainer.hpp"

namespace fs = std::filesystem;
using namespace dmicf;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

/// Usage problems detected after CLI11 parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Config file path plus every `--key value` override seen on the command line.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

std::string short_alias(const std::string& key) {
  if (key == "output.dir") return "out";
  return key.substr(key.find('.') + 1);
}

void add_config_flags(CLI::App& cmd, ConfigFlags& flags) {
  cmd.add_option("--config", flags.config_path, "Configuration file (dotted key = value lines)");
  for (const ConfigKey& key : config_keys()) {
    const std::string name = key.name;
    cmd.add_option_function<std::string>(
        "--" + name + ",--" + short_alias(name),
        [&flags, name](const std::string& v) { flags.overrides[name] = v; }, key.help)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }
}

RunConfig resolve(const ConfigFlags& flags) {
  RunConfig cfg;
  if (!flags.config_path.empty()) cfg = load_config(flags.config_path);
  for (const auto& [key, value] : flags.overrides) cfg.set(key, value);
  cfg.validate();
  set_num_threads(cfg.threads);
  return cfg;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

/// The dataset plus the fit/validation carve-out that training used.
struct Workspace {
  DatasetSplit data;
  ValidationSplit split;
};

Workspace load_workspace(const RunConfig& cfg) {
  if (cfg.data_train.empty()) throw UsageError("data.train is not set (use --train PATH)");
  if (cfg.data_test.empty()) throw UsageError("data.test is not set (use --test PATH)");
  Workspace ws;
  ws.data = load_dataset(cfg.data_train, cfg.data_test);
  ws.split = split_validation(ws.data.train, cfg.train.validation_fraction, cfg.train.seed);
  return ws;
}

DmicfModel load_model(const RunConfig& cfg, const Workspace& ws, const std::string& checkpoint) {
  ModelParameters params = init_parameters(cfg.model, ws.data.train.num_users(),
                                           ws.data.train.num_items(), cfg.train.seed);
  params.load_checkpoint(load_checkpoint(checkpoint));
  return DmicfModel(cfg.model, ws.split.fit, std::move(params));
}

std::string epoch_line(const EpochRecord& rec, std::size_t cutoff) {
  nlohmann::ordered_json j;
  j["epoch"] = rec.epoch;
  j["loss"] = rec.mean_loss;
  const std::string key = "val_recall@" + std::to_string(cutoff);
  if (rec.validation_recall) {
    j[key] = *rec.validation_recall;
  } else {
    j[key] = nullptr;
  }
  j["seconds"] = rec.seconds;
  return j.dump();
}

int cmd_train(const ConfigFlags& flags) {
  const RunConfig cfg = resolve(flags);
  const Workspace ws = load_workspace(cfg);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  write_file(out / "config.resolved", cfg.to_string());
  if (!flags.config_path.empty()) write_file(out / "config.source", read_file(flags.config_path));

  DmicfModel model(cfg.model, ws.split.fit, cfg.train.seed);
  std::ofstream log(out / "epochs.jsonl", std::ios::binary);
  if (!log) throw std::runtime_error("cannot write " + (out / "epochs.jsonl").string());
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& rec) {
    log << epoch_line(rec, cfg.train.early_stop_cutoff) << '\n' << std::flush;
    std::cerr << "epoch " << rec.epoch << " loss " << rec.mean_loss;
    if (rec.validation_recall) {
      std::cerr << " val_recall@" << cfg.train.early_stop_cutoff << ' ' << *rec.validation_recall;
    }
    std::cerr << " (" << rec.seconds << " s)\n";
  };
  const TrainResult result = train(model, ws.split.validation, cfg.train, hooks);

  save_checkpoint(out / "checkpoint_best.ckpt", result.best.to_checkpoint());
  save_checkpoint(out / "checkpoint_final.ckpt", result.final.to_checkpoint());
  model.parameters() = result.best;
  const MetricsReport report = evaluate(model, ws.data.train, ws.data.test, cfg.cutoffs);
  const std::string json = metrics_to_json(report);
  write_file(out / "metrics.json", json);
  std::cout << json;
  return 0;
}

int cmd_evaluate(const ConfigFlags& flags, const std::string& checkpoint,
                 const std::string& output) {
  const RunConfig cfg = resolve(flags);
  const Workspace ws = load_workspace(cfg);
  const DmicfModel model = load_model(cfg, ws, checkpoint);
  const std::string json =
      metrics_to_json(evaluate(model, ws.data.train, ws.data.test, cfg.cutoffs));
  if (!output.empty()) write_file(output, json);
  std::cout << json;
  return 0;
}

int cmd_recommend(const ConfigFlags& flags, const std::string& checkpoint, std::size_t user,
                  std::size_t top) {
  const RunConfig cfg = resolve(flags);
  const Workspace ws = load_workspace(cfg);
  const DmicfModel model = load_model(cfg, ws, checkpoint);
  if (user >= ws.data.train.num_users()) {
    throw UsageError("user " + std::to_string(user) + " out of range (dataset has " +
                     std::to_string(ws.data.train.num_users()) + " users)");
  }
  const RankedList ranked = rank_items(model, user, ws.data.train.items_of(user));
  const std::size_t n = std::min(top, ranked.items.size());
  for (std::size_t k = 0; k < n; ++k) {
    char score[64];
    std::snprintf(score, sizeof score, "%.17g", ranked.scores[k]);
    std::cout << k + 1 << '\t' << ranked.items[k] << '\t' << score << '\n';
  }
  return 0;
}

int cmd_export_intents(const ConfigFlags& flags, const std::string& checkpoint,
                       const std::string& epoch_tag, const std::string& output) {
  const RunConfig cfg = resolve(flags);
  const Workspace ws = load_workspace(cfg);
  const DmicfModel model = load_model(cfg, ws, checkpoint);
  export_intent_stats(model, epoch_tag, output);
  return 0;
}

int cmd_gen_synthetic(const PlantedBlocksConfig& pcfg, const std::string& out_dir) {
  const PlantedBlocks data = make_planted_blocks(pcfg);
  const fs::path out = out_dir;
  fs::create_directories(out);
  write_interactions(out / "train.txt", data.train);
  write_interactions(out / "test.txt", data.test);
  std::cout << "wrote " << data.train.size() << " train and " << data.test.size()
            << " test interactions to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-perspective disentangled multi-intent collaborative filtering"};
  app.require_subcommand(1);

  ConfigFlags train_flags, eval_flags, rec_flags, export_flags;
  std::string eval_ckpt, eval_output, rec_ckpt, export_ckpt, export_tag, export_output;
  std::size_t rec_user = 0, rec_top = 10;
  PlantedBlocksConfig synth;
  std::string synth_out = "synthetic";

  auto* train_cmd = app.add_subcommand("train", "Train a model and evaluate it on the test split");
  add_config_flags(*train_cmd, train_flags);

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  add_config_flags(*eval_cmd, eval_flags);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--output", eval_output, "Also write the metrics JSON here");

  auto* rec_cmd = app.add_subcommand("recommend", "Print a user's top-N unseen items");
  add_config_flags(*rec_cmd, rec_flags);
  rec_cmd->add_option("--checkpoint", rec_ckpt, "Checkpoint file")->required();
  rec_cmd->add_option("--user", rec_user, "User index")->required();
  rec_cmd->add_option("--top", rec_top, "List length")->capture_default_str();

  auto* export_cmd = app.add_subcommand("export-intents", "Write intent statistics of a checkpoint");
  add_config_flags(*export_cmd, export_flags);
  export_cmd->add_option("--checkpoint", export_ckpt, "Checkpoint file")->required();
  export_cmd->add_option("--epoch-tag", export_tag, "Label stored in the export")->required();
  export_cmd->add_option("--output", export_output, "Destination file")->required();

  auto* synth_cmd = app.add_subcommand("gen-synthetic", "Write a planted block dataset");
  synth_cmd->add_option("--out", synth_out, "Output directory")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--users", synth.users)->capture_default_str();
  synth_cmd->add_option("--items", synth.items)->capture_default_str();
  synth_cmd->add_option("--blocks", synth.blocks)->capture_default_str();
  synth_cmd->add_option("--density", synth.density, "Within-block edge probability")
      ->capture_default_str();
  synth_cmd->add_option("--test-fraction", synth.test_fraction)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags);
    if (*eval_cmd) return cmd_evaluate(eval_flags, eval_ckpt, eval_output);
    if (*rec_cmd) return cmd_recommend(rec_flags, rec_ckpt, rec_user, rec_top);
    if (*export_cmd) return cmd_export_intents(export_flags, export_ckpt, export_tag, export_output);
    if (*synth_cmd) return cmd_gen_synthetic(synth, synth_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}
