#include "cola/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "binary_io.h"
#include "cola/errors.h"

namespace cola {
namespace {

using nlohmann::json;

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kShuffleStream = 0x5f0f;
constexpr std::uint64_t kVideoStream = 0x7e1d;

void check_finite(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw TrainingDivergedError(std::string("non-finite ") + what);
  }
}

std::string epoch_tag(std::uint32_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04u", epoch);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  mining.validate();
  loss.validate();
  if (t_sample < mining.mask_large + 1) {
    throw ConfigError("t_sample must be at least mask_large + 1");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
}

std::vector<std::size_t> sample_indices(std::size_t length, std::size_t count, SamplingMode mode,
                                        Rng& rng) {
  if (length == 0) throw std::invalid_argument("sample_indices: empty video");
  std::vector<std::size_t> out(count);
  const double step = static_cast<double>(length) / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) {
    double pos = static_cast<double>(i) * step;
    if (mode == SamplingMode::kUniform) pos += rng.uniform() * step;
    out[i] = std::min(length - 1, static_cast<std::size_t>(pos));
  }
  if (mode == SamplingMode::kLinspace) {
    // Integer form avoids rounding drift: floor(i * L / T).
    for (std::size_t i = 0; i < count; ++i) out[i] = std::min(length - 1, i * length / count);
  }
  return out;
}

Tensor2 gather_rows(const Tensor2& features, std::span<const std::size_t> indices) {
  Tensor2 out(indices.size(), features.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = features.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

VideoObjective evaluate_objective(const Tensor2& raw, std::span<const int> labels,
                                  const ModelParams& params, const TrainConfig& config,
                                  bool training, Rng& rng, const SnippetSets* frozen_sets) {
  VideoObjective out;
  out.forward = forward(raw, params, training, rng);
  const std::size_t steps = raw.rows();
  const std::size_t k_easy = ratio_count(steps, config.mining.r_easy);

  const VideoScore score = video_class_scores(out.forward.tcas, k_easy);
  const std::vector<double> target = normalized_labels(labels, params.config.num_classes);
  out.loss_action = action_loss(score.probabilities, target, &out.clamp_count);
  out.grad_tcas = action_loss_grad(score, target, steps);

  if (config.loss.lambda > 0.0) {
    out.sets = frozen_sets ? *frozen_sets : mine_snippets(out.forward.actionness, config.mining, rng);
    SnicoResult snico = snico_loss(out.forward.embedded, out.sets, config.loss, rng);
    out.loss_snico = snico.loss;
    out.snico_degenerate = snico.degenerate;
    out.grad_embedded = std::move(snico.grad_embedded);
    for (double& g : out.grad_embedded.data()) g *= config.loss.lambda;
  }
  out.loss_total = total_loss(out.loss_action, out.loss_snico, config.loss.lambda);
  return out;
}

json to_json(const EpochMetrics& m) {
  return json{{"epoch", m.epoch},
              {"loss_a", m.loss_a},
              {"loss_s", m.loss_s},
              {"loss_total", m.loss_total},
              {"degenerate_count", m.degenerate_count},
              {"clamp_count", m.clamp_count}};
}

TrainResult train(std::span<const TrainingVideo> videos, const TrainConfig& config,
                  const TrainHooks& hooks, ModelParams* last_good) {
  config.validate();
  if (videos.empty()) throw std::invalid_argument("train: no videos");
  for (const TrainingVideo& v : videos) {
    if (v.features.cols() != config.model.input_width()) {
      throw std::invalid_argument("train: video " + v.video_id + " has feature width " +
                                  std::to_string(v.features.cols()) + ", model expects " +
                                  std::to_string(config.model.input_width()));
    }
    if (v.labels.empty()) throw std::invalid_argument("train: video " + v.video_id + " has no labels");
  }

  Rng init_rng(Rng::derive(config.seed, kInitStream));
  TrainResult result;
  result.initial = ModelParams::initialize(config.model, init_rng);
  ModelParams params = result.initial;
  if (last_good) *last_good = params;

  const AdamConfig adam{config.lr, 0.9, 0.999, 1e-8};
  const std::size_t count = videos.size();

  // One pass over the data; `update` decides whether optimizer steps are taken.
  const auto run_epoch = [&](std::uint32_t epoch, bool update) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (update) {
      Rng shuffle_rng(Rng::derive(config.seed, kShuffleStream, epoch));
      shuffle_rng.shuffle(order);
    }
    EpochMetrics metrics;
    metrics.epoch = epoch;
    for (std::size_t begin = 0; begin < count; begin += config.batch_size) {
      const std::size_t end = std::min(count, begin + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      for (std::size_t pos = begin; pos < end; ++pos) {
        const std::size_t index = order[pos];
        const TrainingVideo& video = videos[index];
        Rng rng(Rng::derive(config.seed, kVideoStream + epoch, index));
        const std::vector<std::size_t> picks = sample_indices(
            video.features.rows(), config.t_sample, SamplingMode::kUniform, rng);
        const Tensor2 raw = gather_rows(video.features, picks);
        VideoObjective obj = evaluate_objective(raw, video.labels, params, config, true, rng);
        check_finite(obj.loss_total, "training loss");

        metrics.loss_a += obj.loss_action;
        metrics.loss_s += obj.loss_snico;
        metrics.loss_total += obj.loss_total;
        metrics.clamp_count += obj.clamp_count;
        if (config.loss.lambda > 0.0 && obj.snico_degenerate) ++metrics.degenerate_count;

        if (update) {
          for (double& g : obj.grad_tcas.data()) g *= inv_batch;
          for (double& g : obj.grad_embedded.data()) g *= inv_batch;
          backward(raw, obj.forward, obj.grad_tcas, obj.grad_embedded, params);
        }
      }
      if (update) {
        for (ParamSlot* slot : params.slots()) adam_step(*slot, adam);
      }
    }
    const double inv = 1.0 / static_cast<double>(count);
    metrics.loss_a *= inv;
    metrics.loss_s *= inv;
    metrics.loss_total *= inv;
    result.log.push_back(metrics);
    if (hooks.on_epoch) hooks.on_epoch(metrics);
  };

  run_epoch(0, false);
  if (hooks.on_snapshot) hooks.on_snapshot(0, params);
  for (std::uint32_t epoch = 1; epoch <= config.epochs; ++epoch) {
    run_epoch(epoch, true);
    if (last_good) *last_good = params;
    const bool snapshot = epoch == config.epochs ||
                          (config.snapshot_every > 0 && epoch % config.snapshot_every == 0);
    if (snapshot && hooks.on_snapshot) hooks.on_snapshot(epoch, params);
  }
  result.final_params = params;
  return result;
}

std::vector<TrainingVideo> load_training_videos(const std::filesystem::path& manifest_path) {
  const std::vector<VideoRecord> records = read_manifest(manifest_path, ManifestMode::kTraining);
  std::vector<TrainingVideo> videos;
  videos.reserve(records.size());
  for (const VideoRecord& rec : records) {
    videos.push_back({rec.video_id, read_features(resolve_feature_path(rec, manifest_path)),
                      rec.labels});
  }
  return videos;
}

ModelConfig infer_model_shape(ModelConfig model, std::span<const TrainingVideo> videos) {
  if (videos.empty()) return model;
  if (model.feature_dim == 0) {
    const std::size_t width = videos.front().features.cols();
    if (width % 2 != 0) {
      throw ConfigError("feature width " + std::to_string(width) +
                        " is odd; expected two concatenated streams");
    }
    model.feature_dim = static_cast<std::uint32_t>(width / 2);
  }
  if (model.num_classes == 0) {
    int max_label = 0;
    for (const TrainingVideo& v : videos) {
      for (int c : v.labels) max_label = std::max(max_label, c);
    }
    model.num_classes = static_cast<std::uint32_t>(std::max(2, max_label + 1));
  }
  return model;
}

MiningSnapshot mine_video(const ModelParams& params, const VideoRecord& record,
                          const Tensor2& features, const MiningConfig& config, Rng& rng) {
  MiningSnapshot snap;
  snap.video_id = record.video_id;
  snap.num_snippets = features.rows();
  snap.fps = record.fps;
  snap.snippet_frames = record.snippet_frames;
  const ForwardOutput out = forward(features, params, false, rng);
  snap.actionness = out.actionness;
  snap.sets = mine_snippets(out.actionness, config, rng);
  return snap;
}

json to_json(const MiningSnapshot& s) {
  return json{{"video_id", s.video_id},
              {"num_snippets", s.num_snippets},
              {"fps", s.fps},
              {"snippet_frames", s.snippet_frames},
              {"k_hard", s.sets.k_hard},
              {"k_easy", s.sets.k_easy},
              {"inner", s.sets.inner},
              {"outer", s.sets.outer},
              {"HA", s.sets.hard_action},
              {"HB", s.sets.hard_background},
              {"EA", s.sets.easy_action},
              {"EB", s.sets.easy_background},
              {"actionness", s.actionness}};
}

MiningSnapshot mining_snapshot_from_json(const json& obj) {
  MiningSnapshot s;
  s.video_id = obj.at("video_id").get<std::string>();
  s.num_snippets = obj.at("num_snippets").get<std::size_t>();
  s.fps = obj.value("fps", 25.0);
  s.snippet_frames = obj.value("snippet_frames", 16u);
  s.sets.k_hard = obj.value("k_hard", std::size_t{0});
  s.sets.k_easy = obj.value("k_easy", std::size_t{0});
  s.sets.inner = obj.at("inner").get<std::vector<std::size_t>>();
  s.sets.outer = obj.at("outer").get<std::vector<std::size_t>>();
  s.sets.hard_action = obj.at("HA").get<std::vector<std::size_t>>();
  s.sets.hard_background = obj.at("HB").get<std::vector<std::size_t>>();
  s.sets.easy_action = obj.at("EA").get<std::vector<std::size_t>>();
  s.sets.easy_background = obj.at("EB").get<std::vector<std::size_t>>();
  s.actionness = obj.value("actionness", std::vector<double>{});
  return s;
}

TrainResult train_to_directory(const std::filesystem::path& manifest_path, TrainConfig config,
                               const std::filesystem::path& out_dir) {
  const std::vector<VideoRecord> records = read_manifest(manifest_path, ManifestMode::kTraining);
  const std::vector<TrainingVideo> videos = load_training_videos(manifest_path);
  config.model = infer_model_shape(config.model, videos);
  config.validate();
  std::filesystem::create_directories(out_dir);

  std::string metrics_text;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) { metrics_text += to_json(m).dump() + "\n"; };
  if (config.snapshot_every > 0) {
    hooks.on_snapshot = [&](std::uint32_t epoch, const ModelParams& params) {
      std::string text;
      for (std::size_t i = 0; i < videos.size(); ++i) {
        Rng rng(Rng::derive(config.seed, 0x3a9e, i));
        text += to_json(mine_video(params, records[i], videos[i].features, config.mining, rng)).dump();
        text += "\n";
      }
      detail::write_file_bytes(out_dir / "snapshots" / ("mined_epoch_" + epoch_tag(epoch) + ".jsonl"),
                               text);
    };
  }

  ModelParams last_good;
  try {
    TrainResult result = train(videos, config, hooks, &last_good);
    save_checkpoint(out_dir / "checkpoint_epoch0.bin", result.initial);
    save_checkpoint(out_dir / "checkpoint.bin", result.final_params);
    detail::write_file_bytes(out_dir / "metrics.jsonl", metrics_text);
    return result;
  } catch (const TrainingDivergedError&) {
    if (last_good.config.num_classes != 0) save_checkpoint(out_dir / "checkpoint.bin", last_good);
    detail::write_file_bytes(out_dir / "metrics.jsonl", metrics_text);
    throw;
  }
}

}  // namespace cola
