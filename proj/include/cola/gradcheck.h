#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cola {

struct GradcheckOptions {
  std::size_t steps = 16;
  std::uint32_t feature_dim = 8;
  std::uint32_t num_classes = 3;
  double lambda = 0.01;
  double epsilon = 1e-4;
  double rel_tolerance = 1e-3;
  // Entries whose analytic and numeric values are both this small are compared absolutely.
  double abs_floor = 1e-7;
  std::uint64_t seed = 7;
};

struct GradcheckResult {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool snico_active = false;  // the contrastive term contributed to the checked loss
  double seconds = 0.0;
  std::vector<std::string> failures;  // first few offending entries

  bool passed() const { return failed == 0 && checked > 0; }
};

// Central finite differences of L_total w.r.t. every model parameter, with dropout off
// and the mined snippet sets and contrastive draws frozen.
GradcheckResult run_gradcheck(const GradcheckOptions& options);

}  // namespace cola
