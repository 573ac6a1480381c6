#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cola/config.h"

namespace cola {

// Loss-term ablation on a synthetic dataset directory (as written by write_synthetic).
struct ReproOptions {
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;  // empty: keep everything in memory
  RunConfig config;
  std::size_t num_seeds = 3;      // training seeds config.train.seed + 0 .. num_seeds-1
  bool ablation = false;          // add the single-refinement rows
  bool negatives_sweep = false;   // add an S = 1 row
  std::ostream* progress = nullptr;
};

struct ReproRun {
  std::string setting;
  std::uint64_t seed = 0;
  double map_at_05 = 0.0;
  double average_map = 0.0;
  double initial_loss_a = 0.0;
  double final_loss_a = 0.0;
  std::size_t num_proposals = 0;
  double seconds = 0.0;
};

struct ReproRow {
  std::string setting;
  std::string loss;
  std::vector<double> map_per_seed;
  double mean_map_at_05 = 0.0;
  double mean_average_map = 0.0;
};

struct MrdoCurve {
  std::vector<double> deltas;
  std::vector<double> initial;  // epoch-0 checkpoint, averaged over seeds
  std::vector<double> final;    // final checkpoint, averaged over seeds
};

struct ReproReport {
  std::vector<ReproRow> rows;  // rows[0] is the baseline, rows[1] CoLA
  std::vector<ReproRun> runs;
  MrdoCurve mrdo;              // hard snippets of the CoLA runs on the test split

  const ReproRow& row(const std::string& setting) const;
  nlohmann::json to_json() const;
  std::string format_table() const;
};

ReproReport run_repro(const ReproOptions& options);

}  // namespace cola
