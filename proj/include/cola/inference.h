#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cola/data.h"
#include "cola/evaluation.h"
#include "cola/model.h"

namespace cola {

struct Proposal {
  std::string video_id;
  int class_id = 0;
  std::size_t start_snippet = 0;  // half-open, original video coordinates
  std::size_t end_snippet = 0;
  double start_sec = 0.0;
  double end_sec = 0.0;
  double score = 0.0;
};

struct InferConfig {
  double theta_v = 0.2;
  std::vector<double> theta_s = {0.0,   0.025, 0.05,  0.075, 0.1,  0.125,
                                 0.15,  0.175, 0.2,   0.225, 0.25};
  double nms_iou = 0.6;
  double margin_frac = 0.25;

  void validate() const;  // throws ConfigError
};

struct SnippetInterval {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  bool operator==(const SnippetInterval&) const = default;
};

// {c : p[c] > theta_v}, or {argmax p} (lowest index on ties) when that set is empty.
std::vector<int> select_video_classes(std::span<const double> probs, double theta_v);

// Maps values linearly onto [0, 1]; a constant input maps to all zeros.
std::vector<double> minmax_normalize(std::span<const double> values);

// Maximal runs of consecutive entries >= theta.
std::vector<SnippetInterval> segment_tcas(std::span<const double> cas, double theta);

// Outer-inner contrast: mean inside minus mean over margins of ceil(margin_frac * len)
// snippets on each side (clipped to the sequence). No margin -> inner mean.
double score_proposal(std::span<const double> cas, SnippetInterval interval, double margin_frac);

// Greedy NMS within each (video, class) group: descending score, ties by earlier start.
// A proposal is dropped when its IoU with a kept one exceeds iou_threshold.
std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold);

// Canonical order: video_id, class_id, start, end, then descending score.
void sort_canonical(std::vector<Proposal>& proposals);

struct LocalizeSettings {
  InferConfig infer;
  std::size_t t_sample = 64;
  std::size_t r_easy = 5;
};

std::vector<Proposal> localize_video(const ModelParams& params, const VideoRecord& record,
                                     const Tensor2& features, const LocalizeSettings& settings);

struct LocalizeError {
  std::string video_id;
  std::string message;
};

struct LocalizeOutput {
  std::vector<Proposal> proposals;
  std::vector<LocalizeError> errors;  // videos whose features could not be read
};

LocalizeOutput localize(const ModelParams& params, const std::filesystem::path& manifest_path,
                        const LocalizeSettings& settings);

// JSON lines {video_id, class_id, class_name, start_sec, end_sec, start_snippet, end_snippet, score}.
std::string format_proposals(std::span<const Proposal> proposals,
                             std::span<const std::string> class_names);
std::vector<Detection> parse_detections(std::string_view text, const std::string& source = "preds");
std::vector<Detection> to_detections(std::span<const Proposal> proposals);

}  // namespace cola
