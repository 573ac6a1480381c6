#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cola/tensor.h"

namespace cola {

// Feature file layout (little-endian):
//   "COLAFT01" | u32 version (=1) | u32 T | u32 twod | T*twod float32, row-major.
inline constexpr std::uint32_t kFeatureFormatVersion = 1;

Tensor2 parse_features(std::string_view bytes, const std::string& source = "features");
std::string serialize_features(const Tensor2& features);
Tensor2 read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const Tensor2& features);

// One manifest line. Ground truth never lives here; it is kept in a separate file.
struct VideoRecord {
  std::string video_id;
  std::string feature_path;
  std::vector<int> labels;
  double fps = 25.0;
  std::uint32_t snippet_frames = 16;
  nlohmann::json extra = nlohmann::json::object();  // unknown fields, preserved on write

  double snippet_seconds() const { return static_cast<double>(snippet_frames) / fps; }
};

enum class ManifestMode { kTraining, kInference };

// JSON lines. Required: video_id, feature_path; labels required in training mode.
std::vector<VideoRecord> parse_manifest(std::string_view text, ManifestMode mode,
                                        const std::string& source = "manifest");
std::vector<VideoRecord> read_manifest(const std::filesystem::path& path, ManifestMode mode);
std::string format_manifest(const std::vector<VideoRecord>& records);
void write_manifest(const std::filesystem::path& path, const std::vector<VideoRecord>& records);

// Relative feature paths resolve against $COLA_DATA_DIR when set, else the manifest directory.
std::filesystem::path resolve_feature_path(const VideoRecord& record,
                                           const std::filesystem::path& manifest_path);

struct GroundTruthSegment {
  std::string video_id;
  int class_id = 0;
  double start_sec = 0.0;
  double end_sec = 0.0;
};

std::vector<GroundTruthSegment> parse_gt(std::string_view text, const std::string& source = "gt");
std::vector<GroundTruthSegment> read_gt(const std::filesystem::path& path);
std::string format_gt(const std::vector<GroundTruthSegment>& segments);
void write_gt(const std::filesystem::path& path, const std::vector<GroundTruthSegment>& segments);

// Class names, one per line, in class-id order. Missing file -> "class_<id>".
std::vector<std::string> read_class_names(const std::filesystem::path& path, std::size_t num_classes);

struct SynthConfig {
  std::uint32_t num_classes = 5;
  std::uint32_t num_train = 200;
  std::uint32_t num_test = 50;
  std::uint32_t feature_dim = 16;
  std::uint32_t min_length = 64;
  std::uint32_t max_length = 112;
  std::uint32_t min_segments = 1;
  std::uint32_t max_segments = 2;
  std::uint32_t min_segment_length = 10;
  std::uint32_t max_segment_length = 24;
  std::uint32_t transition_width = 3;
  double noise_sigma = 0.5;
  double fps = 25.0;
  std::uint32_t snippet_frames = 16;
  std::uint64_t seed = 42;

  void validate() const;  // throws ConfigError
};

struct SyntheticSplit {
  std::vector<VideoRecord> records;
  std::vector<Tensor2> features;
  std::vector<GroundTruthSegment> gt;
};

struct SyntheticDataset {
  SyntheticSplit train;
  SyntheticSplit test;
  Tensor2 class_prototypes;  // C x 2d, unit rows
  std::vector<double> background_prototype;
  std::vector<std::string> class_names;
};

// Segments carry a class prototype plus Gaussian noise on top of a shared background
// prototype. Across the transition_width snippets on each side of a boundary the
// feature blends linearly between the two prototypes.
SyntheticDataset generate_synthetic(const SynthConfig& config);

// Layout: train.jsonl, test.jsonl, gt_train.jsonl, gt_test.jsonl, classes.txt, features/*.bin
void write_synthetic(const SyntheticDataset& dataset, const std::filesystem::path& out_dir);

}  // namespace cola
