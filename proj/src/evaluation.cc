#include "cola/evaluation.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace cola {

double temporal_iou(double a_start, double a_end, double b_start, double b_end) {
  const double inter = std::max(0.0, std::min(a_end, b_end) - std::max(a_start, b_start));
  const double uni = std::max(a_end, b_end) - std::min(a_start, b_start);
  if (inter <= 0.0 || uni <= 0.0) return 0.0;
  return inter / uni;
}

std::optional<double> average_precision(std::span<const Detection> detections,
                                        std::span<const GroundTruthSegment> ground_truth,
                                        double iou_threshold) {
  if (ground_truth.empty()) return std::nullopt;

  std::map<std::string, std::vector<std::size_t>> gt_by_video;
  for (std::size_t g = 0; g < ground_truth.size(); ++g) {
    gt_by_video[ground_truth[g].video_id].push_back(g);
  }

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });

  std::vector<char> matched(ground_truth.size(), 0);
  std::vector<char> is_tp(order.size(), 0);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const Detection& det = detections[order[rank]];
    auto it = gt_by_video.find(det.video_id);
    if (it == gt_by_video.end()) continue;
    // Candidates in decreasing IoU; the first unmatched one above threshold is taken.
    std::vector<std::pair<double, std::size_t>> candidates;
    for (std::size_t g : it->second) {
      candidates.emplace_back(temporal_iou(det.start_sec, det.end_sec, ground_truth[g].start_sec,
                                           ground_truth[g].end_sec),
                              g);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [iou, g] : candidates) {
      if (iou < iou_threshold) break;
      if (matched[g]) continue;
      matched[g] = 1;
      is_tp[rank] = 1;
      break;
    }
  }

  // Precision envelope: running max from the tail, sampled at each recall step.
  const double total_gt = static_cast<double>(ground_truth.size());
  std::vector<double> precision(order.size());
  std::vector<double> recall(order.size());
  double tp = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    tp += is_tp[rank];
    precision[rank] = tp / static_cast<double>(rank + 1);
    recall[rank] = tp / total_gt;
  }
  for (std::size_t i = order.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  double previous_recall = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (recall[rank] > previous_recall) {
      ap += (recall[rank] - previous_recall) * precision[rank];
      previous_recall = recall[rank];
    }
  }
  return ap;
}

EvalReport evaluate(std::span<const Detection> detections,
                    std::span<const GroundTruthSegment> ground_truth,
                    std::span<const double> iou_grid) {
  if (iou_grid.empty()) throw std::invalid_argument("evaluate: empty IoU grid");
  EvalReport report;
  report.thresholds.assign(iou_grid.begin(), iou_grid.end());

  std::map<int, std::vector<GroundTruthSegment>> gt_by_class;
  for (const GroundTruthSegment& g : ground_truth) gt_by_class[g.class_id].push_back(g);
  std::map<int, std::vector<Detection>> det_by_class;
  for (const Detection& d : detections) det_by_class[d.class_id].push_back(d);
  for (const auto& entry : gt_by_class) report.classes.push_back(entry.first);

  for (double threshold : report.thresholds) {
    std::vector<double> row;
    for (int c : report.classes) {
      const auto& dets = det_by_class[c];
      row.push_back(*average_precision(dets, gt_by_class[c], threshold));
    }
    const double mean = row.empty() ? 0.0
                                    : std::accumulate(row.begin(), row.end(), 0.0) /
                                          static_cast<double>(row.size());
    report.ap.push_back(std::move(row));
    report.map.push_back(mean);
  }
  report.average_map = std::accumulate(report.map.begin(), report.map.end(), 0.0) /
                       static_cast<double>(report.map.size());
  return report;
}

double EvalReport::map_at(double threshold) const {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (std::abs(thresholds[i] - threshold) < 1e-9) return map[i];
  }
  throw std::out_of_range("EvalReport: threshold not on the evaluation grid");
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per_threshold = nlohmann::json::array();
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t c = 0; c < classes.size(); ++c) {
      per_class[std::to_string(classes[c])] = ap[i][c];
    }
    per_threshold.push_back({{"iou", thresholds[i]}, {"map", map[i]}, {"ap", per_class}});
  }
  return {{"thresholds", thresholds},
          {"classes", classes},
          {"results", per_threshold},
          {"average_map", average_map}};
}

std::string EvalReport::format_table() const {
  std::string out = "mAP@IoU (%)\n";
  char buf[64];
  for (double t : thresholds) {
    std::snprintf(buf, sizeof(buf), "%7.2f", t);
    out += buf;
  }
  out += "     AVG\n";
  for (double m : map) {
    std::snprintf(buf, sizeof(buf), "%7.2f", 100.0 * m);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "%8.2f\n", 100.0 * average_map);
  out += buf;
  return out;
}

MrdoResult mrdo(std::span<const MinedHardSnippets> mined,
                std::span<const GroundTruthSegment> ground_truth, double delta) {
  if (!(delta >= 0.0)) throw std::invalid_argument("mrdo: delta must be >= 0");
  std::map<std::string, std::vector<const GroundTruthSegment*>> gt_by_video;
  for (const GroundTruthSegment& g : ground_truth) gt_by_video[g.video_id].push_back(&g);

  MrdoResult result;
  double total = 0.0;
  for (const MinedHardSnippets& video : mined) {
    if (video.positions.empty()) continue;
    auto it = gt_by_video.find(video.video_id);
    if (it == gt_by_video.end()) {
      ++result.videos_without_gt;
      total += static_cast<double>(video.positions.size());
      result.snippets += video.positions.size();
      continue;
    }
    std::vector<std::pair<double, double>> regions;
    for (const GroundTruthSegment* g : it->second) {
      const double s = g->start_sec / video.seconds_per_snippet;
      const double e = g->end_sec / video.seconds_per_snippet;
      const double pad = delta * (e - s) / 2.0;
      regions.emplace_back(s - pad, e + pad);
    }
    const double length = static_cast<double>(video.num_snippets);
    for (std::size_t pos : video.positions) {
      const double t = static_cast<double>(pos);
      double nearest = std::numeric_limits<double>::infinity();
      for (const auto& [lo, hi] : regions) {
        const double distance = t < lo ? lo - t : (t > hi ? t - hi : 0.0);
        nearest = std::min(nearest, distance);
      }
      total += nearest / length;
      ++result.snippets;
    }
  }
  result.value = result.snippets == 0 ? 0.0 : total / static_cast<double>(result.snippets);
  return result;
}

}  // namespace cola
