#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cola/rng.h"

namespace cola {

using BinarySeq = std::vector<std::uint8_t>;

struct MiningConfig {
  double theta_b = 0.5;
  std::uint32_t mask_small = 3;  // m
  std::uint32_t mask_large = 6;  // M
  std::uint32_t r_easy = 5;
  std::uint32_t r_hard = 20;

  void validate() const;  // throws ConfigError
};

// max(1, floor(length / ratio))
std::size_t ratio_count(std::size_t length, std::size_t ratio);

// bits[t] = 1 iff actionness[t] >= theta_b.
BinarySeq binarize(std::span<const double> actionness, double theta_b);

// Window at t spans [t - floor((k-1)/2), t + ceil((k-1)/2)]; positions outside the
// sequence read as 0 for both operations, so erosion also eats in from the borders.
BinarySeq dilate(const BinarySeq& seq, std::size_t k);
BinarySeq erode(const BinarySeq& seq, std::size_t k);

struct BoundaryRegions {
  std::vector<std::size_t> inner;  // erode(m) and not erode(M)
  std::vector<std::size_t> outer;  // dilate(M) and not dilate(m)
};

BoundaryRegions boundary_regions(const BinarySeq& bits, std::size_t mask_small,
                                 std::size_t mask_large);

struct HardSnippets {
  std::vector<std::size_t> action;      // drawn from the inner region
  std::vector<std::size_t> background;  // drawn from the outer region
};

// k_hard draws per region: without replacement when the region holds at least k_hard
// snippets, with replacement otherwise. An empty region yields an empty set.
HardSnippets mine_hard(const BoundaryRegions& regions, std::size_t k_hard, Rng& rng);

struct EasySnippets {
  std::vector<std::size_t> action;
  std::vector<std::size_t> background;
  bool degenerate = false;  // no candidate left after removing both boundary regions
};

// Top and bottom k_easy actionness among snippets outside both regions. Ties go to the
// smaller index; the action set fills first and the background set never overlaps it.
EasySnippets mine_easy(std::span<const double> actionness, const BoundaryRegions& regions,
                       std::size_t k_easy);

struct SnippetSets {
  std::vector<std::size_t> inner;
  std::vector<std::size_t> outer;
  std::vector<std::size_t> hard_action;
  std::vector<std::size_t> hard_background;
  std::vector<std::size_t> easy_action;
  std::vector<std::size_t> easy_background;
  std::size_t k_hard = 0;
  std::size_t k_easy = 0;
  bool easy_degenerate = false;
};

SnippetSets mine_snippets(std::span<const double> actionness, const MiningConfig& config, Rng& rng);

}  // namespace cola
