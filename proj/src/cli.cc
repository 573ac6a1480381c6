#include "cola/cli.h"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "binary_io.h"
#include "cola/config.h"
#include "cola/errors.h"
#include "cola/evaluation.h"
#include "cola/gradcheck.h"
#include "cola/inference.h"
#include "cola/repro.h"
#include "cola/trainer.h"

namespace cola {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool json_output = false;
};

RunConfig build_config(const CommonOptions& common) {
  RunConfig config = common.config_path.empty() ? RunConfig{} : load_run_config(common.config_path);
  for (const std::string& assignment : common.overrides) apply_assignment(config, assignment);
  if (common.seed) {
    config.train.seed = *common.seed;
    config.synth.seed = *common.seed;
  }
  return config;
}

void add_common(CLI::App* sub, CommonOptions& common) {
  sub->add_option("--config", common.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  sub->add_option("--set", common.overrides, "override a configuration key (key=value)")
      ->allow_extra_args(false);
  sub->add_option("--seed", common.seed, "seed for every random draw");
}

// Class names live next to the manifest when the data came from `cola synth`.
std::vector<std::string> class_names_for(const fs::path& manifest, std::size_t num_classes) {
  return read_class_names(manifest.parent_path() / "classes.txt", num_classes);
}

void emit(std::ostream& out, const CommonOptions& common, const json& summary) {
  if (common.json_output) out << summary.dump() << "\n";
}

int cmd_synth(const CommonOptions& common, const fs::path& out_dir, std::ostream& out,
              std::ostream& err) {
  const RunConfig config = build_config(common);
  const SyntheticDataset dataset = generate_synthetic(config.synth);
  write_synthetic(dataset, out_dir);
  err << "wrote " << dataset.train.records.size() << " train / " << dataset.test.records.size()
      << " test videos to " << out_dir.string() << "\n";
  emit(out, common,
       {{"command", "synth"},
        {"out", out_dir.string()},
        {"num_train", dataset.train.records.size()},
        {"num_test", dataset.test.records.size()},
        {"num_classes", config.synth.num_classes}});
  return kExitOk;
}

int cmd_train(const CommonOptions& common, const fs::path& manifest, const fs::path& out_dir,
              std::ostream& out, std::ostream& err) {
  const RunConfig config = build_config(common);
  const auto started = std::chrono::steady_clock::now();
  const TrainResult result = train_to_directory(manifest, config.train, out_dir);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const EpochMetrics& first = result.log.front();
  const EpochMetrics& last = result.log.back();
  err << "trained " << last.epoch << " epochs in " << seconds << " s; L_total " << first.loss_total
      << " -> " << last.loss_total << "\n";
  emit(out, common,
       {{"command", "train"},
        {"out", out_dir.string()},
        {"epochs", last.epoch},
        {"initial", to_json(first)},
        {"final", to_json(last)}});
  return kExitOk;
}

int cmd_infer(const CommonOptions& common, const fs::path& checkpoint, const fs::path& manifest,
              const fs::path& out_path, std::ostream& out, std::ostream& err) {
  const RunConfig config = build_config(common);
  const ModelParams params = load_checkpoint(checkpoint);
  const LocalizeSettings settings{config.infer, config.train.t_sample, config.train.mining.r_easy};
  const LocalizeOutput result = localize(params, manifest, settings);
  const auto names = class_names_for(manifest, params.config.num_classes);
  detail::write_file_bytes(out_path, format_proposals(result.proposals, names));
  for (const LocalizeError& e : result.errors) {
    err << "skipped " << e.video_id << ": " << e.message << "\n";
  }
  err << "wrote " << result.proposals.size() << " proposals to " << out_path.string() << "\n";
  json errors = json::array();
  for (const LocalizeError& e : result.errors) {
    errors.push_back({{"video_id", e.video_id}, {"message", e.message}});
  }
  emit(out, common,
       {{"command", "infer"},
        {"out", out_path.string()},
        {"num_proposals", result.proposals.size()},
        {"errors", errors}});
  return result.errors.empty() ? kExitOk : kExitData;
}

int cmd_eval(const CommonOptions& common, const fs::path& preds_path, const fs::path& gt_path,
             const std::string& grid_text, const std::string& deltas_text, const fs::path& out_path,
             const fs::path& mined_path, std::ostream& out, std::ostream& err) {
  const RunConfig config = build_config(common);
  const std::vector<double> grid = grid_text.empty() ? config.eval.iou_grid : parse_grid(grid_text);
  const std::vector<Detection> detections =
      parse_detections(detail::read_file_bytes(preds_path), preds_path.string());
  const std::vector<GroundTruthSegment> gt = read_gt(gt_path);
  const EvalReport report = evaluate(detections, gt, grid);

  json report_json = report.to_json();
  std::string table = report.format_table();
  if (!mined_path.empty()) {
    const std::vector<double> deltas =
        deltas_text.empty() ? config.eval.mrdo_deltas : parse_grid(deltas_text);
    std::vector<MinedHardSnippets> mined;
    const std::string text = detail::read_file_bytes(mined_path);
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      ++line_no;
      const std::string line = text.substr(start, end - start);
      start = end + 1;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      MiningSnapshot snap;
      try {
        snap = mining_snapshot_from_json(json::parse(line));
      } catch (const json::exception& e) {
        throw ParseError(mined_path.string(), line_no, e.what());
      }
      MinedHardSnippets m;
      m.video_id = snap.video_id;
      m.num_snippets = snap.num_snippets;
      m.seconds_per_snippet = static_cast<double>(snap.snippet_frames) / snap.fps;
      m.positions = snap.sets.hard_action;
      m.positions.insert(m.positions.end(), snap.sets.hard_background.begin(),
                         snap.sets.hard_background.end());
      mined.push_back(std::move(m));
    }
    json curve = json::array();
    table += "\nmRDO  delta:";
    std::string values = "\n      value:";
    for (double delta : deltas) {
      const MrdoResult r = mrdo(mined, gt, delta);
      curve.push_back({{"delta", delta}, {"mrdo", r.value}, {"snippets", r.snippets}});
      char buf[32];
      std::snprintf(buf, sizeof(buf), " %7.2f", delta);
      table += buf;
      std::snprintf(buf, sizeof(buf), " %6.2f%%", 100.0 * r.value);
      values += buf;
    }
    table += values + "\n";
    report_json["mrdo"] = curve;
  }

  if (!out_path.empty()) detail::write_file_bytes(out_path, report_json.dump(2) + "\n");
  if (common.json_output) {
    emit(out, common, {{"command", "eval"}, {"report", report_json}});
  } else {
    out << table;
  }
  (void)err;
  return kExitOk;
}

int cmd_mine(const CommonOptions& common, const fs::path& checkpoint, const fs::path& manifest,
             const fs::path& out_path, std::ostream& out, std::ostream& err) {
  const RunConfig config = build_config(common);
  const ModelParams params = load_checkpoint(checkpoint);
  const std::vector<VideoRecord> records = read_manifest(manifest, ManifestMode::kInference);
  std::string text;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Tensor2 features = read_features(resolve_feature_path(records[i], manifest));
    Rng rng(Rng::derive(config.train.seed, 0x3a9e, i));
    text += to_json(mine_video(params, records[i], features, config.train.mining, rng)).dump();
    text += "\n";
  }
  detail::write_file_bytes(out_path, text);
  err << "mined " << records.size() << " videos into " << out_path.string() << "\n";
  emit(out, common, {{"command", "mine"}, {"out", out_path.string()}, {"num_videos", records.size()}});
  return kExitOk;
}

int cmd_gradcheck(const CommonOptions& common, std::ostream& out, std::ostream& err) {
  GradcheckOptions options;
  if (common.seed) options.seed = *common.seed;
  const GradcheckResult result = run_gradcheck(options);
  for (const std::string& failure : result.failures) err << failure << "\n";
  err << (result.passed() ? "PASS" : "FAIL") << ": " << result.checked << " gradients, "
      << result.failed << " mismatched, max rel error " << result.max_rel_error << " ("
      << result.seconds << " s)\n";
  emit(out, common,
       {{"command", "gradcheck"},
        {"passed", result.passed()},
        {"checked", result.checked},
        {"failed", result.failed},
        {"max_rel_error", result.max_rel_error},
        {"max_abs_error", result.max_abs_error},
        {"seconds", result.seconds}});
  return result.passed() ? kExitOk : kExitNumeric;
}

int cmd_repro(const CommonOptions& common, const fs::path& data_dir, const fs::path& out_dir,
              std::size_t seeds, bool quick, bool ablation, std::ostream& out, std::ostream& err) {
  ReproOptions options;
  options.data_dir = data_dir;
  options.out_dir = out_dir;
  options.config = build_config(common);
  options.num_seeds = seeds;
  options.ablation = ablation || !quick;
  options.negatives_sweep = !quick;
  options.progress = &err;
  const ReproReport report = run_repro(options);
  if (common.json_output) {
    emit(out, common, {{"command", "repro"}, {"report", report.to_json()}});
  } else {
    out << report.format_table();
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive snippet mining for weakly supervised temporal action localization"};
  app.name("cola");
  app.require_subcommand(1);
  CommonOptions common;
  app.add_flag("--json", common.json_output, "print a machine-readable summary on stdout");

  std::string out_path, manifest, checkpoint, preds, gt, grid, deltas, mined, data_dir;
  std::size_t seeds = 3;
  bool quick = false, ablation = false;

  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  add_common(synth, common);
  synth->add_option("--out", out_path, "output directory")->required();

  auto* train = app.add_subcommand("train", "train a model on a labelled manifest");
  add_common(train, common);
  train->add_option("--manifest", manifest, "training manifest (JSON lines)")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", out_path, "output directory")->required();

  auto* infer = app.add_subcommand("infer", "localize actions with a trained checkpoint");
  add_common(infer, common);
  infer->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--manifest", manifest, "manifest (JSON lines)")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", out_path, "proposal file (JSON lines)")->required();

  auto* eval = app.add_subcommand("eval", "score proposals against ground truth");
  add_common(eval, common);
  eval->add_option("--preds", preds, "proposal file (JSON lines)")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt, "ground-truth file (JSON lines)")->required()->check(CLI::ExistingFile);
  eval->add_option("--grid", grid, "IoU thresholds, lo:hi:step or a comma list");
  eval->add_option("--out", out_path, "write the report as JSON");
  eval->add_option("--mined", mined, "mining dump from `cola mine`, adds the mRDO curve")
      ->check(CLI::ExistingFile);
  eval->add_option("--deltas", deltas, "mRDO inflation factors");

  auto* mine = app.add_subcommand("mine", "dump mined snippet sets per video");
  add_common(mine, common);
  mine->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  mine->add_option("--manifest", manifest, "manifest (JSON lines)")->required()->check(CLI::ExistingFile);
  mine->add_option("--out", out_path, "output file (JSON lines)")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  gradcheck->add_option("--seed", common.seed, "seed for the random model and data");

  auto* repro = app.add_subcommand("repro", "baseline vs contrastive training on a synthetic dataset");
  add_common(repro, common);
  repro->add_option("--data", data_dir, "directory written by `cola synth`")
      ->required()
      ->check(CLI::ExistingDirectory);
  repro->add_option("--out", out_path, "directory for checkpoints, predictions and reports");
  repro->add_option("--seeds", seeds, "number of training seeds")->check(CLI::PositiveNumber);
  repro->add_flag("--quick", quick, "only the baseline and full-loss rows");
  repro->add_flag("--ablation", ablation, "add the single-refinement rows in quick mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failed = &app;
    for (const CLI::App* sub : app.get_subcommands()) failed = sub;
    err << failed->help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(common, out_path, out, err);
    if (train->parsed()) return cmd_train(common, manifest, out_path, out, err);
    if (infer->parsed()) return cmd_infer(common, checkpoint, manifest, out_path, out, err);
    if (eval->parsed()) {
      return cmd_eval(common, preds, gt, grid, deltas, out_path, mined, out, err);
    }
    if (mine->parsed()) return cmd_mine(common, checkpoint, manifest, out_path, out, err);
    if (gradcheck->parsed()) return cmd_gradcheck(common, out, err);
    if (repro->parsed()) {
      return cmd_repro(common, data_dir, out_path, seeds, quick, ablation, out, err);
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingDivergedError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DegenerateVectorError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ParseError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace cola
