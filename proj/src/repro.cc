#include "cola/repro.h"

#include <chrono>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "binary_io.h"
#include "cola/evaluation.h"
#include "cola/inference.h"
#include "cola/trainer.h"

namespace cola {
namespace {

struct Setting {
  std::string name;
  std::string slug;
  std::string loss;
  double lambda;
  Refinement refinement;
  std::uint32_t negatives;
};

struct TestSplit {
  std::vector<VideoRecord> records;
  std::vector<Tensor2> features;
  std::vector<GroundTruthSegment> gt;
  std::vector<std::string> class_names;
};

TestSplit load_test_split(const std::filesystem::path& dir) {
  TestSplit split;
  const auto manifest = dir / "test.jsonl";
  split.records = read_manifest(manifest, ManifestMode::kInference);
  for (const VideoRecord& rec : split.records) {
    split.features.push_back(read_features(resolve_feature_path(rec, manifest)));
  }
  split.gt = read_gt(dir / "gt_test.jsonl");
  return split;
}

std::vector<MinedHardSnippets> mine_hard_snippets(const ModelParams& params, const TestSplit& split,
                                                  const MiningConfig& mining, std::uint64_t seed) {
  std::vector<MinedHardSnippets> out;
  for (std::size_t i = 0; i < split.records.size(); ++i) {
    Rng rng(Rng::derive(seed, 0x3a9e, i));
    const MiningSnapshot snap = mine_video(params, split.records[i], split.features[i], mining, rng);
    MinedHardSnippets mined;
    mined.video_id = snap.video_id;
    mined.num_snippets = snap.num_snippets;
    mined.seconds_per_snippet = split.records[i].snippet_seconds();
    mined.positions = snap.sets.hard_action;
    mined.positions.insert(mined.positions.end(), snap.sets.hard_background.begin(),
                           snap.sets.hard_background.end());
    out.push_back(std::move(mined));
  }
  return out;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

}  // namespace

const ReproRow& ReproReport::row(const std::string& setting) const {
  for (const ReproRow& r : rows) {
    if (r.setting == setting) return r;
  }
  throw std::out_of_range("no repro row named " + setting);
}

nlohmann::json ReproReport::to_json() const {
  nlohmann::json out;
  for (const ReproRow& r : rows) {
    out["rows"].push_back({{"setting", r.setting},
                           {"loss", r.loss},
                           {"map_at_05_per_seed", r.map_per_seed},
                           {"mean_map_at_05", r.mean_map_at_05},
                           {"mean_average_map", r.mean_average_map}});
  }
  for (const ReproRun& run : runs) {
    out["runs"].push_back({{"setting", run.setting},
                           {"seed", run.seed},
                           {"map_at_05", run.map_at_05},
                           {"average_map", run.average_map},
                           {"initial_loss_a", run.initial_loss_a},
                           {"final_loss_a", run.final_loss_a},
                           {"num_proposals", run.num_proposals}});
  }
  out["mrdo"] = {{"deltas", mrdo.deltas}, {"epoch0", mrdo.initial}, {"final", mrdo.final}};
  return out;
}

std::string ReproReport::format_table() const {
  std::string out = "Setting                  Loss          mAP@0.5 (delta)\n";
  const double reference = rows.empty() ? 0.0 : rows.front().mean_map_at_05;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ReproRow& r = rows[i];
    char line[160];
    std::snprintf(line, sizeof(line), "%-24s %-13s %6.1f%%", r.setting.c_str(), r.loss.c_str(),
                  100.0 * r.mean_map_at_05);
    out += line;
    if (i > 0) out += fmt(" (%+.1f%%)", 100.0 * (r.mean_map_at_05 - reference));
    out += "\n";
  }
  if (!mrdo.deltas.empty()) {
    out += "\nmRDO (%)   delta:";
    for (double d : mrdo.deltas) out += fmt(" %6.1f", d);
    out += "\n  epoch 0        :";
    for (double v : mrdo.initial) out += fmt(" %6.2f", 100.0 * v);
    out += "\n  final          :";
    for (double v : mrdo.final) out += fmt(" %6.2f", 100.0 * v);
    out += "\n";
  }
  return out;
}

ReproReport run_repro(const ReproOptions& options) {
  if (options.num_seeds == 0) throw std::invalid_argument("repro: need at least one seed");
  const RunConfig& base = options.config;
  const double cola_lambda = base.train.loss.lambda > 0.0 ? base.train.loss.lambda : 0.01;

  std::vector<Setting> settings = {
      {"baseline", "baseline", "L_a", 0.0, Refinement::kBoth, base.train.loss.negatives},
      {"CoLA", "cola", "L_a + L_s", cola_lambda, Refinement::kBoth, base.train.loss.negatives},
  };
  if (options.ablation) {
    settings.push_back({"CoLA w/o HB ref.", "cola_no_hb", "L_a + L_s^HA", cola_lambda,
                        Refinement::kHardActionOnly, base.train.loss.negatives});
    settings.push_back({"CoLA w/o HA ref.", "cola_no_ha", "L_a + L_s^HB", cola_lambda,
                        Refinement::kHardBackgroundOnly, base.train.loss.negatives});
  }
  if (options.negatives_sweep) {
    settings.push_back({"CoLA S=1", "cola_s1", "L_a + L_s", cola_lambda, Refinement::kBoth, 1});
  }

  const auto train_manifest = options.data_dir / "train.jsonl";
  const std::vector<TrainingVideo> train_videos = load_training_videos(train_manifest);
  TestSplit test = load_test_split(options.data_dir);

  ReproReport report;
  report.mrdo.deltas = base.eval.mrdo_deltas;
  report.mrdo.initial.assign(report.mrdo.deltas.size(), 0.0);
  report.mrdo.final.assign(report.mrdo.deltas.size(), 0.0);

  std::vector<double> grid = base.eval.iou_grid;
  for (const Setting& setting : settings) {
    ReproRow row{setting.name, setting.loss, {}, 0.0, 0.0};
    for (std::size_t s = 0; s < options.num_seeds; ++s) {
      const auto started = std::chrono::steady_clock::now();
      TrainConfig config = base.train;
      config.seed = base.train.seed + s;
      config.loss.lambda = setting.lambda;
      config.loss.refinement = setting.refinement;
      config.loss.negatives = setting.negatives;
      config.model = infer_model_shape(config.model, train_videos);
      if (test.class_names.empty()) {
        test.class_names = read_class_names(options.data_dir / "classes.txt", config.model.num_classes);
      }

      const TrainResult trained = train(train_videos, config);

      const LocalizeSettings localize_settings{base.infer, config.t_sample, config.mining.r_easy};
      std::vector<Proposal> proposals;
      for (std::size_t i = 0; i < test.records.size(); ++i) {
        auto props = localize_video(trained.final_params, test.records[i], test.features[i],
                                    localize_settings);
        proposals.insert(proposals.end(), props.begin(), props.end());
      }
      sort_canonical(proposals);
      const std::vector<Detection> detections = to_detections(proposals);
      const EvalReport eval = evaluate(detections, test.gt, grid);
      const double at_05 = evaluate(detections, test.gt, std::vector<double>{0.5}).map.front();

      ReproRun run;
      run.setting = setting.name;
      run.seed = config.seed;
      run.map_at_05 = at_05;
      run.average_map = eval.average_map;
      run.initial_loss_a = trained.log.front().loss_a;
      run.final_loss_a = trained.log.back().loss_a;
      run.num_proposals = proposals.size();

      if (setting.slug == "cola") {
        const auto initial_mined = mine_hard_snippets(trained.initial, test, config.mining, config.seed);
        const auto final_mined = mine_hard_snippets(trained.final_params, test, config.mining, config.seed);
        for (std::size_t d = 0; d < report.mrdo.deltas.size(); ++d) {
          const double scale = 1.0 / static_cast<double>(options.num_seeds);
          report.mrdo.initial[d] += scale * mrdo(initial_mined, test.gt, report.mrdo.deltas[d]).value;
          report.mrdo.final[d] += scale * mrdo(final_mined, test.gt, report.mrdo.deltas[d]).value;
        }
      }

      if (!options.out_dir.empty()) {
        const auto dir = options.out_dir / ("seed_" + std::to_string(config.seed)) / setting.slug;
        save_checkpoint(dir / "checkpoint_epoch0.bin", trained.initial);
        save_checkpoint(dir / "checkpoint.bin", trained.final_params);
        detail::write_file_bytes(dir / "preds.jsonl", format_proposals(proposals, test.class_names));
        detail::write_file_bytes(dir / "report.json", eval.to_json().dump(2) + "\n");
        std::string metrics;
        for (const EpochMetrics& m : trained.log) metrics += to_json(m).dump() + "\n";
        detail::write_file_bytes(dir / "metrics.jsonl", metrics);
      }

      run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (options.progress) {
        *options.progress << "[repro] " << setting.name << " seed " << config.seed
                          << ": mAP@0.5 " << fmt("%.4f", at_05) << ", avg mAP "
                          << fmt("%.4f", eval.average_map) << ", L_a "
                          << fmt("%.4f", run.initial_loss_a) << " -> "
                          << fmt("%.4f", run.final_loss_a) << " (" << fmt("%.1f", run.seconds)
                          << " s)\n";
      }
      row.map_per_seed.push_back(at_05);
      row.mean_average_map += eval.average_map / static_cast<double>(options.num_seeds);
      report.runs.push_back(run);
    }
    row.mean_map_at_05 = std::accumulate(row.map_per_seed.begin(), row.map_per_seed.end(), 0.0) /
                         static_cast<double>(row.map_per_seed.size());
    report.rows.push_back(std::move(row));
  }

  if (!options.out_dir.empty()) {
    detail::write_file_bytes(options.out_dir / "repro_report.json", report.to_json().dump(2) + "\n");
    detail::write_file_bytes(options.out_dir / "repro_table.txt", report.format_table());
  }
  return report;
}

}  // namespace cola
