#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cola/data.h"
#include "cola/losses.h"
#include "cola/mining.h"
#include "cola/model.h"

namespace cola {

struct TrainConfig {
  std::uint32_t t_sample = 64;
  std::uint32_t batch_size = 16;
  std::uint32_t epochs = 200;
  double lr = 1e-4;
  std::uint64_t seed = 42;
  std::uint32_t snapshot_every = 0;  // 0 disables intermediate mining snapshots
  ModelConfig model;
  MiningConfig mining;
  LossConfig loss;

  void validate() const;  // throws ConfigError
};

enum class SamplingMode {
  kUniform,   // one jittered draw per equal-width segment (training)
  kLinspace,  // floor(i * L / T), deterministic (inference)
};

// Returns `count` indices into a video of `length` snippets, non-decreasing.
std::vector<std::size_t> sample_indices(std::size_t length, std::size_t count, SamplingMode mode,
                                        Rng& rng);
Tensor2 gather_rows(const Tensor2& features, std::span<const std::size_t> indices);

struct TrainingVideo {
  std::string video_id;
  Tensor2 features;  // full length, L x 2d
  std::vector<int> labels;
};

// Loss value and gradients of L_total for one video.
struct VideoObjective {
  ForwardOutput forward;
  SnippetSets sets;
  double loss_action = 0.0;
  double loss_snico = 0.0;
  double loss_total = 0.0;
  bool snico_degenerate = false;
  std::size_t clamp_count = 0;
  Tensor2 grad_tcas;      // dL_total/dA
  Tensor2 grad_embedded;  // lambda * dL_s/dX^E (empty when lambda == 0)
};

// Runs forward, mining and both losses. Random draws happen in a fixed order
// (dropout, hard sampling, contrastive sampling). Passing `frozen_sets` skips mining.
VideoObjective evaluate_objective(const Tensor2& raw, std::span<const int> labels,
                                  const ModelParams& params, const TrainConfig& config,
                                  bool training, Rng& rng, const SnippetSets* frozen_sets = nullptr);

struct EpochMetrics {
  std::uint32_t epoch = 0;  // 0 is an evaluation pass at initialization
  double loss_a = 0.0;
  double loss_s = 0.0;
  double loss_total = 0.0;
  std::size_t degenerate_count = 0;
  std::size_t clamp_count = 0;
};

nlohmann::json to_json(const EpochMetrics& metrics);

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
  // Called for epoch 0, every snapshot_every epochs, and the final epoch.
  std::function<void(std::uint32_t epoch, const ModelParams&)> on_snapshot;
};

struct TrainResult {
  ModelParams initial;
  ModelParams final_params;
  std::vector<EpochMetrics> log;
};

// Deterministic for a given (videos, config). Throws TrainingDivergedError on a
// non-finite loss; `last_good` (when given) then holds the last completed epoch.
TrainResult train(std::span<const TrainingVideo> videos, const TrainConfig& config,
                  const TrainHooks& hooks = {}, ModelParams* last_good = nullptr);

// Loads a labelled manifest with its feature files.
std::vector<TrainingVideo> load_training_videos(const std::filesystem::path& manifest_path);

// Fills feature_dim / num_classes when left at 0.
ModelConfig infer_model_shape(ModelConfig model, std::span<const TrainingVideo> videos);

// Per-video mining dump, computed on the full snippet sequence in inference mode.
struct MiningSnapshot {
  std::string video_id;
  std::size_t num_snippets = 0;
  double fps = 25.0;
  std::uint32_t snippet_frames = 16;
  SnippetSets sets;
  std::vector<double> actionness;
};

MiningSnapshot mine_video(const ModelParams& params, const VideoRecord& record,
                          const Tensor2& features, const MiningConfig& config, Rng& rng);
nlohmann::json to_json(const MiningSnapshot& snapshot);
MiningSnapshot mining_snapshot_from_json(const nlohmann::json& obj);

// Writes checkpoint.bin, checkpoint_epoch0.bin, metrics.jsonl and, when snapshots are
// enabled, snapshots/mined_epoch_NNNN.jsonl for the training manifest.
TrainResult train_to_directory(const std::filesystem::path& manifest_path, TrainConfig config,
                               const std::filesystem::path& out_dir);

}  // namespace cola
