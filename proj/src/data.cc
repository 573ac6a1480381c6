#include "cola/data.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "binary_io.h"
#include "cola/errors.h"
#include "cola/rng.h"

namespace cola {
namespace {

constexpr std::string_view kFeatureMagic = "COLAFT01";

using nlohmann::json;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  detail::write_file_bytes(path, text);
}

// Calls fn(line_number, parsed_object) for every non-blank line.
template <typename Fn>
void for_each_json_line(std::string_view text, const std::string& source, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(source, line_no, "expected a JSON object");
    try {
      fn(line_no, obj);
    } catch (const json::exception& e) {
      throw ParseError(source, line_no, std::string("bad field type: ") + e.what());
    }
    if (end == text.size()) break;
  }
}

template <typename T>
T required(const json& obj, const char* key, const std::string& source, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    throw ParseError(source, line, std::string("missing required field '") + key + "'");
  }
  return it->get<T>();
}

}  // namespace

Tensor2 parse_features(std::string_view bytes, const std::string& source) {
  detail::ByteReader in(bytes, source);
  if (in.bytes(kFeatureMagic.size(), "magic") != kFeatureMagic) {
    throw FormatError(source + ": bad feature-file magic at byte offset 0");
  }
  const std::size_t version_offset = in.offset();
  const std::uint32_t version = in.u32("version");
  if (version != kFeatureFormatVersion) {
    throw FormatError(source + ": unsupported feature-file version " + std::to_string(version) +
                      " at byte offset " + std::to_string(version_offset));
  }
  const std::size_t shape_offset = in.offset();
  const std::uint32_t steps = in.u32("snippet count");
  const std::uint32_t width = in.u32("feature width");
  if (steps == 0 || width == 0) {
    throw FormatError(source + ": empty feature matrix (" + std::to_string(steps) + "x" +
                      std::to_string(width) + ") at byte offset " + std::to_string(shape_offset));
  }
  const std::size_t count = static_cast<std::size_t>(steps) * width;
  if (in.remaining() < count * 4) {
    in.fail("truncated payload (need " + std::to_string(count * 4) + " bytes, have " +
            std::to_string(in.remaining()) + ")");
  }
  Tensor2 out(steps, width);
  for (double& v : out.data()) v = static_cast<double>(in.f32("payload"));
  if (in.remaining() != 0) in.fail("trailing bytes after payload");
  return out;
}

std::string serialize_features(const Tensor2& features) {
  if (features.rows() == 0 || features.cols() == 0) {
    throw std::invalid_argument("write_features: empty feature matrix");
  }
  detail::ByteWriter out;
  out.bytes(kFeatureMagic);
  out.u32(kFeatureFormatVersion);
  out.u32(static_cast<std::uint32_t>(features.rows()));
  out.u32(static_cast<std::uint32_t>(features.cols()));
  for (double v : features.data()) out.f32(static_cast<float>(v));
  return out.buffer();
}

Tensor2 read_features(const std::filesystem::path& path) {
  return parse_features(detail::read_file_bytes(path), path.string());
}

void write_features(const std::filesystem::path& path, const Tensor2& features) {
  detail::write_file_bytes(path, serialize_features(features));
}

std::vector<VideoRecord> parse_manifest(std::string_view text, ManifestMode mode,
                                        const std::string& source) {
  std::vector<VideoRecord> records;
  for_each_json_line(text, source, [&](std::size_t line, json& obj) {
    VideoRecord rec;
    rec.video_id = required<std::string>(obj, "video_id", source, line);
    rec.feature_path = required<std::string>(obj, "feature_path", source, line);
    if (auto it = obj.find("labels"); it != obj.end() && !it->is_null()) {
      rec.labels = it->get<std::vector<int>>();
    }
    if (mode == ManifestMode::kTraining && rec.labels.empty()) {
      throw ParseError(source, line, "training record '" + rec.video_id + "' has no labels");
    }
    for (int c : rec.labels) {
      if (c < 0) throw ParseError(source, line, "negative class id");
    }
    if (auto it = obj.find("fps"); it != obj.end()) rec.fps = it->get<double>();
    if (auto it = obj.find("snippet_frames"); it != obj.end()) {
      rec.snippet_frames = it->get<std::uint32_t>();
    }
    if (!(rec.fps > 0.0) || rec.snippet_frames == 0) {
      throw ParseError(source, line, "fps and snippet_frames must be positive");
    }
    for (const char* known : {"video_id", "feature_path", "labels", "fps", "snippet_frames"}) {
      obj.erase(known);
    }
    rec.extra = std::move(obj);
    records.push_back(std::move(rec));
  });
  return records;
}

std::vector<VideoRecord> read_manifest(const std::filesystem::path& path, ManifestMode mode) {
  return parse_manifest(read_text(path), mode, path.string());
}

std::string format_manifest(const std::vector<VideoRecord>& records) {
  std::string out;
  for (const VideoRecord& rec : records) {
    json obj = rec.extra.is_object() ? rec.extra : json::object();
    obj["video_id"] = rec.video_id;
    obj["feature_path"] = rec.feature_path;
    obj["labels"] = rec.labels;
    obj["fps"] = rec.fps;
    obj["snippet_frames"] = rec.snippet_frames;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<VideoRecord>& records) {
  write_text(path, format_manifest(records));
}

std::filesystem::path resolve_feature_path(const VideoRecord& record,
                                           const std::filesystem::path& manifest_path) {
  const std::filesystem::path p(record.feature_path);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("COLA_DATA_DIR"); root != nullptr && *root != '\0') {
    return std::filesystem::path(root) / p;
  }
  return manifest_path.parent_path() / p;
}

std::vector<GroundTruthSegment> parse_gt(std::string_view text, const std::string& source) {
  std::vector<GroundTruthSegment> segments;
  for_each_json_line(text, source, [&](std::size_t line, const json& obj) {
    GroundTruthSegment seg;
    seg.video_id = required<std::string>(obj, "video_id", source, line);
    seg.class_id = required<int>(obj, "class_id", source, line);
    seg.start_sec = required<double>(obj, "start_sec", source, line);
    seg.end_sec = required<double>(obj, "end_sec", source, line);
    if (!(seg.end_sec > seg.start_sec)) {
      throw ParseError(source, line, "segment end_sec must be greater than start_sec");
    }
    if (seg.class_id < 0) throw ParseError(source, line, "negative class id");
    segments.push_back(std::move(seg));
  });
  return segments;
}

std::vector<GroundTruthSegment> read_gt(const std::filesystem::path& path) {
  return parse_gt(read_text(path), path.string());
}

std::string format_gt(const std::vector<GroundTruthSegment>& segments) {
  std::string out;
  for (const GroundTruthSegment& seg : segments) {
    json obj = {{"video_id", seg.video_id},
                {"class_id", seg.class_id},
                {"start_sec", seg.start_sec},
                {"end_sec", seg.end_sec}};
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void write_gt(const std::filesystem::path& path, const std::vector<GroundTruthSegment>& segments) {
  write_text(path, format_gt(segments));
}

std::vector<std::string> read_class_names(const std::filesystem::path& path,
                                          std::size_t num_classes) {
  std::vector<std::string> names;
  if (std::ifstream in(path); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) names.push_back(line);
    }
  }
  for (std::size_t c = names.size(); c < num_classes; ++c) {
    names.push_back("class_" + std::to_string(c));
  }
  return names;
}

void SynthConfig::validate() const {
  if (num_classes < 2) throw ConfigError("synth.num_classes must be >= 2");
  if (feature_dim < 1) throw ConfigError("synth.feature_dim must be >= 1");
  if (min_length < 1 || max_length < min_length) {
    throw ConfigError("synth length range must satisfy 1 <= min_length <= max_length");
  }
  if (min_segments < 1 || max_segments < min_segments) {
    throw ConfigError("synth segment count range must satisfy 1 <= min <= max");
  }
  if (min_segment_length < 1 || max_segment_length < min_segment_length) {
    throw ConfigError("synth segment length range must satisfy 1 <= min <= max");
  }
  if (transition_width < 1) throw ConfigError("synth.transition_width must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("synth.noise_sigma must be >= 0");
  if (!(fps > 0.0) || snippet_frames == 0) {
    throw ConfigError("synth.fps and synth.snippet_frames must be positive");
  }
}

namespace {

std::vector<double> random_unit_vector(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& x : v) x = rng.normal();
    norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
  }
  for (double& x : v) x /= norm;
  return v;
}

struct PlannedSegment {
  std::size_t start;
  std::size_t end;
};

// Places `lengths` as non-overlapping segments whose blend zones do not touch.
std::vector<PlannedSegment> place_segments(std::size_t video_length,
                                           std::vector<std::size_t> lengths, std::size_t gap,
                                           Rng& rng) {
  constexpr int kAttempts = 200;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    std::vector<PlannedSegment> placed;
    bool ok = true;
    for (std::size_t len : lengths) {
      if (len > video_length) {
        ok = false;
        break;
      }
      const std::size_t start = rng.below(video_length - len + 1);
      const PlannedSegment candidate{start, start + len};
      for (const PlannedSegment& other : placed) {
        if (candidate.start < other.end + gap && other.start < candidate.end + gap) {
          ok = false;
          break;
        }
      }
      if (!ok) break;
      placed.push_back(candidate);
    }
    if (ok) {
      std::sort(placed.begin(), placed.end(),
                [](const PlannedSegment& a, const PlannedSegment& b) { return a.start < b.start; });
      return placed;
    }
  }
  throw ConfigError("synth: segments cannot fit in a video of " + std::to_string(video_length) +
                    " snippets");
}

// Weight of the action prototype at snippet t for segment [start, end).
double blend_weight(std::size_t t, const PlannedSegment& seg, std::size_t width) {
  const double w2 = 2.0 * static_cast<double>(width);
  const double x = static_cast<double>(t);
  const double rise = (x - static_cast<double>(seg.start) + static_cast<double>(width) + 0.5) / w2;
  const double fall = (static_cast<double>(seg.end) + static_cast<double>(width) - x - 0.5) / w2;
  return std::clamp(std::min(rise, fall), 0.0, 1.0);
}

void generate_split(const SynthConfig& config, const SyntheticDataset& protos, const char* prefix,
                    std::uint32_t count, std::uint64_t stream, SyntheticSplit& split) {
  const std::size_t width = 2 * static_cast<std::size_t>(config.feature_dim);
  const double seconds_per_snippet = static_cast<double>(config.snippet_frames) / config.fps;
  for (std::uint32_t i = 0; i < count; ++i) {
    Rng rng(Rng::derive(config.seed, stream, i));
    char id[64];
    std::snprintf(id, sizeof(id), "%s_%04u", prefix, i);

    const std::size_t length = rng.between(config.min_length, config.max_length);
    const std::size_t num_segments = rng.between(config.min_segments, config.max_segments);
    const int class_id = static_cast<int>(rng.below(config.num_classes));
    std::vector<std::size_t> lengths(num_segments);
    for (std::size_t& len : lengths) {
      len = rng.between(config.min_segment_length, config.max_segment_length);
    }
    const std::vector<PlannedSegment> segments =
        place_segments(length, lengths, 2 * config.transition_width + 2, rng);

    Tensor2 features(length, width);
    const auto proto = protos.class_prototypes.row(static_cast<std::size_t>(class_id));
    for (std::size_t t = 0; t < length; ++t) {
      double alpha = 0.0;
      for (const PlannedSegment& seg : segments) {
        alpha = std::max(alpha, blend_weight(t, seg, config.transition_width));
      }
      auto row = features.row(t);
      for (std::size_t j = 0; j < width; ++j) {
        const double clean = alpha * proto[j] + (1.0 - alpha) * protos.background_prototype[j];
        const double noise = config.noise_sigma > 0.0 ? config.noise_sigma * rng.normal() : 0.0;
        // Stored as float32 on disk, so keep the in-memory copy identical.
        row[j] = static_cast<double>(static_cast<float>(clean + noise));
      }
    }

    VideoRecord rec;
    rec.video_id = id;
    rec.feature_path = std::string("features/") + id + ".bin";
    rec.labels = {class_id};
    rec.fps = config.fps;
    rec.snippet_frames = config.snippet_frames;
    rec.extra = {{"num_snippets", length}};
    split.records.push_back(std::move(rec));
    split.features.push_back(std::move(features));
    for (const PlannedSegment& seg : segments) {
      split.gt.push_back({id, class_id, static_cast<double>(seg.start) * seconds_per_snippet,
                          static_cast<double>(seg.end) * seconds_per_snippet});
    }
  }
}

}  // namespace

SyntheticDataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  const std::size_t width = 2 * static_cast<std::size_t>(config.feature_dim);
  SyntheticDataset dataset;
  Rng proto_rng(Rng::derive(config.seed, 1));
  dataset.class_prototypes = Tensor2(config.num_classes, width);
  for (std::size_t c = 0; c < config.num_classes; ++c) {
    const std::vector<double> v = random_unit_vector(width, proto_rng);
    std::copy(v.begin(), v.end(), dataset.class_prototypes.row(c).begin());
    dataset.class_names.push_back("class_" + std::to_string(c));
  }
  dataset.background_prototype = random_unit_vector(width, proto_rng);
  generate_split(config, dataset, "train", config.num_train, 2, dataset.train);
  generate_split(config, dataset, "test", config.num_test, 3, dataset.test);
  return dataset;
}

void write_synthetic(const SyntheticDataset& dataset, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "features");
  const auto write_split = [&](const SyntheticSplit& split, const char* manifest, const char* gt) {
    for (std::size_t i = 0; i < split.records.size(); ++i) {
      write_features(out_dir / split.records[i].feature_path, split.features[i]);
    }
    write_manifest(out_dir / manifest, split.records);
    write_gt(out_dir / gt, split.gt);
  };
  write_split(dataset.train, "train.jsonl", "gt_train.jsonl");
  write_split(dataset.test, "test.jsonl", "gt_test.jsonl");
  std::string names;
  for (const std::string& name : dataset.class_names) names += name + "\n";
  detail::write_file_bytes(out_dir / "classes.txt", names);
}

}  // namespace cola
