#include "cola/mining.h"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "cola/errors.h"

namespace cola {
namespace {

// AND over the window when eroding, OR otherwise.
BinarySeq window_scan(const BinarySeq& seq, std::size_t k, bool erosion) {
  if (k == 0) throw std::invalid_argument("morphology mask size must be >= 1");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(seq.size());
  const std::ptrdiff_t left = static_cast<std::ptrdiff_t>((k - 1) / 2);
  const std::ptrdiff_t right = static_cast<std::ptrdiff_t>(k - 1) - left;

  // Prefix counts of ones make each window O(1).
  std::vector<std::ptrdiff_t> prefix(seq.size() + 1, 0);
  for (std::size_t i = 0; i < seq.size(); ++i) prefix[i + 1] = prefix[i] + (seq[i] ? 1 : 0);

  BinarySeq out(seq.size(), 0);
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const std::ptrdiff_t lo = t - left;
    const std::ptrdiff_t hi = t + right;
    const std::ptrdiff_t ones = prefix[std::min(hi, n - 1) + 1] - prefix[std::max<std::ptrdiff_t>(lo, 0)];
    if (erosion) {
      out[t] = (lo >= 0 && hi < n && ones == static_cast<std::ptrdiff_t>(k)) ? 1 : 0;
    } else {
      out[t] = ones > 0 ? 1 : 0;
    }
  }
  return out;
}

std::vector<std::size_t> draw_from(const std::vector<std::size_t>& region, std::size_t count,
                                   Rng& rng) {
  std::vector<std::size_t> out;
  if (region.empty()) return out;
  out.reserve(count);
  if (region.size() >= count) {
    std::vector<std::size_t> pool = region;
    // Partial Fisher-Yates: the first `count` slots become a uniform sample.
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
      out.push_back(pool[i]);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) out.push_back(region[rng.below(region.size())]);
  }
  return out;
}

}  // namespace

void MiningConfig::validate() const {
  if (!(theta_b > 0.0 && theta_b < 1.0)) throw ConfigError("theta_b must be in (0, 1)");
  if (mask_small < 1) throw ConfigError("mask_small must be >= 1");
  if (mask_large <= mask_small) throw ConfigError("mask_large must exceed mask_small");
  if (r_easy < 1) throw ConfigError("r_easy must be >= 1");
  if (r_hard < 1) throw ConfigError("r_hard must be >= 1");
}

std::size_t ratio_count(std::size_t length, std::size_t ratio) {
  if (ratio == 0) throw std::invalid_argument("ratio_count: ratio must be >= 1");
  return std::max<std::size_t>(1, length / ratio);
}

BinarySeq binarize(std::span<const double> actionness, double theta_b) {
  BinarySeq bits(actionness.size());
  for (std::size_t t = 0; t < actionness.size(); ++t) bits[t] = actionness[t] >= theta_b ? 1 : 0;
  return bits;
}

BinarySeq dilate(const BinarySeq& seq, std::size_t k) { return window_scan(seq, k, false); }
BinarySeq erode(const BinarySeq& seq, std::size_t k) { return window_scan(seq, k, true); }

BoundaryRegions boundary_regions(const BinarySeq& bits, std::size_t mask_small,
                                 std::size_t mask_large) {
  if (mask_large <= mask_small) {
    throw std::invalid_argument("boundary_regions: mask_large must exceed mask_small");
  }
  const BinarySeq eroded_small = erode(bits, mask_small);
  const BinarySeq eroded_large = erode(bits, mask_large);
  const BinarySeq dilated_small = dilate(bits, mask_small);
  const BinarySeq dilated_large = dilate(bits, mask_large);
  BoundaryRegions regions;
  for (std::size_t t = 0; t < bits.size(); ++t) {
    if (eroded_small[t] && !eroded_large[t]) regions.inner.push_back(t);
    if (dilated_large[t] && !dilated_small[t]) regions.outer.push_back(t);
  }
  return regions;
}

HardSnippets mine_hard(const BoundaryRegions& regions, std::size_t k_hard, Rng& rng) {
  if (k_hard == 0) throw std::invalid_argument("mine_hard: k_hard must be >= 1");
  HardSnippets out;
  out.action = draw_from(regions.inner, k_hard, rng);
  out.background = draw_from(regions.outer, k_hard, rng);
  return out;
}

EasySnippets mine_easy(std::span<const double> actionness, const BoundaryRegions& regions,
                       std::size_t k_easy) {
  if (k_easy == 0) throw std::invalid_argument("mine_easy: k_easy must be >= 1");
  std::vector<std::uint8_t> excluded(actionness.size(), 0);
  for (std::size_t t : regions.inner) excluded[t] = 1;
  for (std::size_t t : regions.outer) excluded[t] = 1;

  std::vector<std::size_t> candidates;
  for (std::size_t t = 0; t < actionness.size(); ++t) {
    if (!excluded[t]) candidates.push_back(t);
  }
  EasySnippets out;
  if (candidates.empty()) {
    out.degenerate = true;
    return out;
  }

  std::vector<std::size_t> descending = candidates;
  std::stable_sort(descending.begin(), descending.end(),
                   [&](std::size_t a, std::size_t b) { return actionness[a] > actionness[b]; });
  std::vector<std::size_t> ascending = candidates;
  std::stable_sort(ascending.begin(), ascending.end(),
                   [&](std::size_t a, std::size_t b) { return actionness[a] < actionness[b]; });

  std::vector<std::uint8_t> taken(actionness.size(), 0);
  for (std::size_t t : descending) {
    if (out.action.size() == k_easy) break;
    out.action.push_back(t);
    taken[t] = 1;
  }
  for (std::size_t t : ascending) {
    if (out.background.size() == k_easy) break;
    if (taken[t]) continue;
    out.background.push_back(t);
  }
  return out;
}

SnippetSets mine_snippets(std::span<const double> actionness, const MiningConfig& config, Rng& rng) {
  SnippetSets sets;
  sets.k_hard = ratio_count(actionness.size(), config.r_hard);
  sets.k_easy = ratio_count(actionness.size(), config.r_easy);
  const BinarySeq bits = binarize(actionness, config.theta_b);
  BoundaryRegions regions = boundary_regions(bits, config.mask_small, config.mask_large);
  HardSnippets hard = mine_hard(regions, sets.k_hard, rng);
  EasySnippets easy = mine_easy(actionness, regions, sets.k_easy);
  sets.inner = std::move(regions.inner);
  sets.outer = std::move(regions.outer);
  sets.hard_action = std::move(hard.action);
  sets.hard_background = std::move(hard.background);
  sets.easy_action = std::move(easy.action);
  sets.easy_background = std::move(easy.background);
  sets.easy_degenerate = easy.degenerate;
  return sets;
}

}  // namespace cola
