#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cola/data.h"

namespace cola {

// |a ∩ b| / |a ∪ b| for closed real intervals; 0 when disjoint or both empty.
double temporal_iou(double a_start, double a_end, double b_start, double b_end);

struct Detection {
  std::string video_id;
  int class_id = 0;
  double start_sec = 0.0;
  double end_sec = 0.0;
  double score = 0.0;
};

// Interpolated average precision for one class. Detections are ranked by score
// (stable: equal scores keep input order) and greedily matched to the best-IoU unmatched
// ground truth in the same video. Returns nullopt when there is no ground truth.
std::optional<double> average_precision(std::span<const Detection> detections,
                                        std::span<const GroundTruthSegment> ground_truth,
                                        double iou_threshold);

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<int> classes;               // classes with at least one ground-truth segment
  std::vector<std::vector<double>> ap;    // [threshold][class]
  std::vector<double> map;                // per threshold
  double average_map = 0.0;

  nlohmann::json to_json() const;
  std::string format_table() const;
  double map_at(double threshold) const;  // throws if the threshold is not on the grid
};

EvalReport evaluate(std::span<const Detection> detections,
                    std::span<const GroundTruthSegment> ground_truth,
                    std::span<const double> iou_grid);

// Hard snippets mined for one video, in that video's snippet coordinates.
struct MinedHardSnippets {
  std::string video_id;
  std::size_t num_snippets = 0;
  double seconds_per_snippet = 0.64;
  std::vector<std::size_t> positions;
};

struct MrdoResult {
  double value = 0.0;
  std::size_t snippets = 0;
  std::size_t videos_without_gt = 0;  // their snippets count as RDO = 1
};

// Mean relative distance offset of mined snippets from the delta-inflated ground-truth
// regions [s - delta*d/2, e + delta*d/2], measured in snippets over the video length.
MrdoResult mrdo(std::span<const MinedHardSnippets> mined,
                std::span<const GroundTruthSegment> ground_truth, double delta);

}  // namespace cola
