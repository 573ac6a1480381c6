#include "cola/inference.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "cola/errors.h"
#include "cola/losses.h"
#include "cola/mining.h"
#include "cola/trainer.h"

namespace cola {

void InferConfig::validate() const {
  const auto unit = [](double v) { return v >= 0.0 && v < 1.0; };
  if (!unit(theta_v)) throw ConfigError("theta_v must be in [0, 1)");
  if (theta_s.empty()) throw ConfigError("theta_s must list at least one threshold");
  for (std::size_t i = 0; i < theta_s.size(); ++i) {
    if (!unit(theta_s[i])) throw ConfigError("theta_s entries must be in [0, 1)");
    if (i > 0 && theta_s[i] < theta_s[i - 1]) throw ConfigError("theta_s must be ascending");
  }
  if (!unit(nms_iou)) throw ConfigError("nms_iou must be in [0, 1)");
  if (!(margin_frac >= 0.0)) throw ConfigError("margin_frac must be >= 0");
}

std::vector<int> select_video_classes(std::span<const double> probs, double theta_v) {
  std::vector<int> out;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (probs[c] > theta_v) out.push_back(static_cast<int>(c));
  }
  if (out.empty() && !probs.empty()) {
    out.push_back(static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin()));
  }
  return out;
}

std::vector<double> minmax_normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

std::vector<SnippetInterval> segment_tcas(std::span<const double> cas, double theta) {
  std::vector<SnippetInterval> out;
  std::size_t t = 0;
  while (t < cas.size()) {
    if (cas[t] >= theta) {
      const std::size_t start = t;
      while (t < cas.size() && cas[t] >= theta) ++t;
      out.push_back({start, t});
    } else {
      ++t;
    }
  }
  return out;
}

double score_proposal(std::span<const double> cas, SnippetInterval interval, double margin_frac) {
  if (interval.start >= interval.end || interval.end > cas.size()) {
    throw std::invalid_argument("score_proposal: invalid interval");
  }
  const std::size_t len = interval.end - interval.start;
  double inner = 0.0;
  for (std::size_t t = interval.start; t < interval.end; ++t) inner += cas[t];
  inner /= static_cast<double>(len);

  const auto margin = static_cast<std::size_t>(std::ceil(margin_frac * static_cast<double>(len)));
  const std::size_t left = interval.start - std::min(interval.start, margin);
  const std::size_t right = std::min(cas.size(), interval.end + margin);
  double outer = 0.0;
  std::size_t outer_count = 0;
  for (std::size_t t = left; t < interval.start; ++t, ++outer_count) outer += cas[t];
  for (std::size_t t = interval.end; t < right; ++t, ++outer_count) outer += cas[t];
  if (outer_count == 0) return inner;
  return inner - outer / static_cast<double>(outer_count);
}

std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold) {
  std::map<std::pair<std::string, int>, std::vector<Proposal>> groups;
  for (Proposal& p : proposals) groups[{p.video_id, p.class_id}].push_back(std::move(p));

  std::vector<Proposal> kept;
  for (auto& [key, group] : groups) {
    std::stable_sort(group.begin(), group.end(), [](const Proposal& a, const Proposal& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.start_snippet < b.start_snippet;
    });
    std::vector<const Proposal*> survivors;
    for (const Proposal& candidate : group) {
      bool suppressed = false;
      for (const Proposal* k : survivors) {
        const double iou = temporal_iou(static_cast<double>(candidate.start_snippet),
                                        static_cast<double>(candidate.end_snippet),
                                        static_cast<double>(k->start_snippet),
                                        static_cast<double>(k->end_snippet));
        if (iou > iou_threshold) {
          suppressed = true;
          break;
        }
      }
      if (!suppressed) survivors.push_back(&candidate);
    }
    for (const Proposal* p : survivors) kept.push_back(*p);
  }
  return kept;
}

void sort_canonical(std::vector<Proposal>& proposals) {
  std::stable_sort(proposals.begin(), proposals.end(), [](const Proposal& a, const Proposal& b) {
    return std::tie(a.video_id, a.class_id, a.start_snippet, a.end_snippet, b.score) <
           std::tie(b.video_id, b.class_id, b.start_snippet, b.end_snippet, a.score);
  });
}

std::vector<Proposal> localize_video(const ModelParams& params, const VideoRecord& record,
                                     const Tensor2& features, const LocalizeSettings& settings) {
  const std::size_t length = features.rows();
  Rng unused(0);
  const std::vector<std::size_t> index_map =
      sample_indices(length, settings.t_sample, SamplingMode::kLinspace, unused);
  const Tensor2 raw = gather_rows(features, index_map);
  const ForwardOutput out = forward(raw, params, false, unused);

  const std::size_t k_easy = ratio_count(raw.rows(), settings.r_easy);
  const VideoScore score = video_class_scores(out.tcas, k_easy);
  const std::vector<int> classes = select_video_classes(score.probabilities, settings.infer.theta_v);

  const double seconds = record.snippet_seconds();
  std::vector<Proposal> pooled;
  std::vector<double> column(raw.rows());
  for (int c : classes) {
    for (std::size_t t = 0; t < raw.rows(); ++t) column[t] = out.tcas(t, static_cast<std::size_t>(c));
    const std::vector<double> cas = minmax_normalize(column);
    for (double theta : settings.infer.theta_s) {
      for (const SnippetInterval& iv : segment_tcas(cas, theta)) {
        Proposal p;
        p.video_id = record.video_id;
        p.class_id = c;
        // Sampled [a, b) covers original snippets from map[a] up to map[b] (or the end).
        p.start_snippet = index_map[iv.start];
        p.end_snippet = iv.end < index_map.size() ? index_map[iv.end] : length;
        p.end_snippet = std::max(p.end_snippet, p.start_snippet + 1);
        p.start_sec = static_cast<double>(p.start_snippet) * seconds;
        p.end_sec = static_cast<double>(p.end_snippet) * seconds;
        p.score = score_proposal(cas, iv, settings.infer.margin_frac);
        pooled.push_back(std::move(p));
      }
    }
  }
  std::vector<Proposal> kept = nms(std::move(pooled), settings.infer.nms_iou);
  sort_canonical(kept);
  return kept;
}

LocalizeOutput localize(const ModelParams& params, const std::filesystem::path& manifest_path,
                        const LocalizeSettings& settings) {
  settings.infer.validate();
  const std::vector<VideoRecord> records = read_manifest(manifest_path, ManifestMode::kInference);
  LocalizeOutput output;
  for (const VideoRecord& rec : records) {
    Tensor2 features;
    try {
      features = read_features(resolve_feature_path(rec, manifest_path));
    } catch (const FormatError& e) {
      output.errors.push_back({rec.video_id, e.what()});
      continue;
    }
    std::vector<Proposal> props = localize_video(params, rec, features, settings);
    output.proposals.insert(output.proposals.end(), std::make_move_iterator(props.begin()),
                            std::make_move_iterator(props.end()));
  }
  sort_canonical(output.proposals);
  return output;
}

std::string format_proposals(std::span<const Proposal> proposals,
                             std::span<const std::string> class_names) {
  std::string out;
  for (const Proposal& p : proposals) {
    const std::string name = static_cast<std::size_t>(p.class_id) < class_names.size()
                                 ? class_names[static_cast<std::size_t>(p.class_id)]
                                 : "class_" + std::to_string(p.class_id);
    nlohmann::json obj = {{"video_id", p.video_id},         {"class_id", p.class_id},
                          {"class_name", name},             {"start_sec", p.start_sec},
                          {"end_sec", p.end_sec},           {"start_snippet", p.start_snippet},
                          {"end_snippet", p.end_snippet},   {"score", p.score}};
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::vector<Detection> parse_detections(std::string_view text, const std::string& source) {
  std::vector<Detection> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const nlohmann::json obj = nlohmann::json::parse(line);
      out.push_back({obj.at("video_id").get<std::string>(), obj.at("class_id").get<int>(),
                     obj.at("start_sec").get<double>(), obj.at("end_sec").get<double>(),
                     obj.at("score").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return out;
}

std::vector<Detection> to_detections(std::span<const Proposal> proposals) {
  std::vector<Detection> out;
  out.reserve(proposals.size());
  for (const Proposal& p : proposals) {
    out.push_back({p.video_id, p.class_id, p.start_sec, p.end_sec, p.score});
  }
  return out;
}

}  // namespace cola
