#include "cola/config.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "cola/errors.h"

namespace cola {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(std::string_view key, std::string_view text) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view text) {
  Int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" +
                      std::string(text) + "'");
  }
  return value;
}

std::string_view refinement_name(Refinement r) {
  switch (r) {
    case Refinement::kBoth: return "both";
    case Refinement::kHardActionOnly: return "ha";
    case Refinement::kHardBackgroundOnly: return "hb";
  }
  return "both";
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

template <typename Member>
Field u32_field(Member member) {
  return {[member](RunConfig& c, std::string_view k, std::string_view v) {
            member(c) = to_int<std::uint32_t>(k, v);
          },
          [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Field f64_field(Member member) {
  return {[member](RunConfig& c, std::string_view k, std::string_view v) {
            member(c) = to_double(k, v);
          },
          [member](const RunConfig& c) { return num(member(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Field grid_field(Member member) {
  return {[member](RunConfig& c, std::string_view k, std::string_view v) {
            try {
              member(c) = parse_grid(v);
            } catch (const ConfigError& e) {
              throw ConfigError(std::string(k) + ": " + e.what());
            }
          },
          [member](const RunConfig& c) { return format_grid(member(const_cast<RunConfig&>(c))); }};
}

#define COLA_MEMBER(path) [](RunConfig& c) -> auto& { return c.path; }

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = {
      {"model.feature_dim", u32_field(COLA_MEMBER(train.model.feature_dim))},
      {"model.num_classes", u32_field(COLA_MEMBER(train.model.num_classes))},
      {"model.embed_kernel", u32_field(COLA_MEMBER(train.model.embed_kernel))},
      {"model.cls_kernel", u32_field(COLA_MEMBER(train.model.cls_kernel))},
      {"model.dropout_rate", f64_field(COLA_MEMBER(train.model.dropout_rate))},
      {"mining.theta_b", f64_field(COLA_MEMBER(train.mining.theta_b))},
      {"mining.mask_small", u32_field(COLA_MEMBER(train.mining.mask_small))},
      {"mining.mask_large", u32_field(COLA_MEMBER(train.mining.mask_large))},
      {"mining.r_easy", u32_field(COLA_MEMBER(train.mining.r_easy))},
      {"mining.r_hard", u32_field(COLA_MEMBER(train.mining.r_hard))},
      {"loss.lambda", f64_field(COLA_MEMBER(train.loss.lambda))},
      {"loss.tau", f64_field(COLA_MEMBER(train.loss.tau))},
      {"loss.negatives", u32_field(COLA_MEMBER(train.loss.negatives))},
      {"loss.refinement",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          if (v == "both") c.train.loss.refinement = Refinement::kBoth;
          else if (v == "ha") c.train.loss.refinement = Refinement::kHardActionOnly;
          else if (v == "hb") c.train.loss.refinement = Refinement::kHardBackgroundOnly;
          else throw ConfigError(std::string(k) + ": expected one of both, ha, hb");
        },
        [](const RunConfig& c) { return std::string(refinement_name(c.train.loss.refinement)); }}},
      {"train.t_sample", u32_field(COLA_MEMBER(train.t_sample))},
      {"train.batch_size", u32_field(COLA_MEMBER(train.batch_size))},
      {"train.epochs", u32_field(COLA_MEMBER(train.epochs))},
      {"train.lr", f64_field(COLA_MEMBER(train.lr))},
      {"train.seed",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          c.train.seed = to_int<std::uint64_t>(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.train.seed); }}},
      {"train.snapshot_every", u32_field(COLA_MEMBER(train.snapshot_every))},
      {"infer.theta_v", f64_field(COLA_MEMBER(infer.theta_v))},
      {"infer.theta_s", grid_field(COLA_MEMBER(infer.theta_s))},
      {"infer.nms_iou", f64_field(COLA_MEMBER(infer.nms_iou))},
      {"infer.margin_frac", f64_field(COLA_MEMBER(infer.margin_frac))},
      {"synth.num_classes", u32_field(COLA_MEMBER(synth.num_classes))},
      {"synth.num_train", u32_field(COLA_MEMBER(synth.num_train))},
      {"synth.num_test", u32_field(COLA_MEMBER(synth.num_test))},
      {"synth.feature_dim", u32_field(COLA_MEMBER(synth.feature_dim))},
      {"synth.min_length", u32_field(COLA_MEMBER(synth.min_length))},
      {"synth.max_length", u32_field(COLA_MEMBER(synth.max_length))},
      {"synth.min_segments", u32_field(COLA_MEMBER(synth.min_segments))},
      {"synth.max_segments", u32_field(COLA_MEMBER(synth.max_segments))},
      {"synth.min_segment_length", u32_field(COLA_MEMBER(synth.min_segment_length))},
      {"synth.max_segment_length", u32_field(COLA_MEMBER(synth.max_segment_length))},
      {"synth.transition_width", u32_field(COLA_MEMBER(synth.transition_width))},
      {"synth.noise_sigma", f64_field(COLA_MEMBER(synth.noise_sigma))},
      {"synth.fps", f64_field(COLA_MEMBER(synth.fps))},
      {"synth.snippet_frames", u32_field(COLA_MEMBER(synth.snippet_frames))},
      {"synth.seed",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          c.synth.seed = to_int<std::uint64_t>(k, v);
        },
        [](const RunConfig& c) { return std::to_string(c.synth.seed); }}},
      {"eval.iou_grid", grid_field(COLA_MEMBER(eval.iou_grid))},
      {"eval.mrdo_deltas", grid_field(COLA_MEMBER(eval.mrdo_deltas))},
  };
  return table;
}

#undef COLA_MEMBER

}  // namespace

std::vector<double> parse_grid(std::string_view text) {
  text = trim(text);
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    std::vector<double> parts;
    std::size_t pos = 0;
    while (true) {
      const std::size_t colon = text.find(':', pos);
      parts.push_back(to_double("grid", trim(text.substr(pos, colon - pos))));
      if (colon == std::string_view::npos) break;
      pos = colon + 1;
    }
    if (parts.size() != 3) throw ConfigError("grid must be lo:hi:step");
    const double lo = parts[0], hi = parts[1], step = parts[2];
    if (!(step > 0.0) || hi < lo) throw ConfigError("grid needs step > 0 and hi >= lo");
    for (std::size_t i = 0;; ++i) {
      const double v = lo + static_cast<double>(i) * step;
      if (v > hi + 1e-9) break;
      // Snap to 12 decimals so 0.1 + 2*0.1 prints and compares as 0.3.
      out.push_back(std::round(v * 1e12) / 1e12);
    }
  } else {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t comma = std::min(text.find(',', pos), text.size());
      out.push_back(to_double("grid", trim(text.substr(pos, comma - pos))));
      pos = comma + 1;
    }
  }
  if (out.empty()) throw ConfigError("grid is empty");
  return out;
}

std::string format_grid(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += num(values[i]);
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& entry : fields()) keys.push_back(entry.first);
  return keys;
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  const auto& table = fields();
  auto it = table.find(key);
  if (it == table.end()) {
    std::string message = "unknown config key '" + std::string(key) + "'; valid keys:";
    for (const auto& entry : table) message += " " + entry.first;
    throw ConfigError(message);
  }
  it->second.set(config, key, value);
}

void apply_assignment(RunConfig& config, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  }
  apply_setting(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

RunConfig parse_run_config(std::string_view text, const std::string& source) {
  RunConfig config;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    try {
      apply_assignment(config, line);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str(), path.string());
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace cola
