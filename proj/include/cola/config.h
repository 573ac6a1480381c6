#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cola/data.h"
#include "cola/inference.h"
#include "cola/trainer.h"

namespace cola {

struct EvalConfig {
  std::vector<double> iou_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  std::vector<double> mrdo_deltas = {0.2, 0.4, 0.6, 0.8, 1.0};
};

// Union of every stage's settings, read from `key = value` lines ('#' starts a comment).
struct RunConfig {
  TrainConfig train;
  InferConfig infer;
  SynthConfig synth;
  EvalConfig eval;
};

// "lo:hi:step" (hi inclusive within 1e-9) or a comma-separated list.
std::vector<double> parse_grid(std::string_view text);
std::string format_grid(const std::vector<double>& values);

// Throws ConfigError for an unknown key (listing the valid ones) or a bad value.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);
// Parses "key=value".
void apply_assignment(RunConfig& config, std::string_view assignment);

RunConfig parse_run_config(std::string_view text, const std::string& source = "config");
RunConfig load_run_config(const std::filesystem::path& path);
std::string format_run_config(const RunConfig& config);
std::vector<std::string> config_keys();

}  // namespace cola
