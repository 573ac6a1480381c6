#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cola/mining.h"
#include "cola/rng.h"
#include "cola/tensor.h"

namespace cola {

// Which contrastive refinements contribute to the snippet contrast loss.
enum class Refinement { kBoth, kHardActionOnly, kHardBackgroundOnly };

struct LossConfig {
  double lambda = 0.01;
  double tau = 0.07;
  std::uint32_t negatives = 0;  // S; 0 means S = k_easy
  Refinement refinement = Refinement::kBoth;

  void validate() const;  // throws ConfigError
};

struct VideoScore {
  std::vector<double> aggregate;      // a_n: per-class top-k mean of the T-CAS
  std::vector<double> probabilities;  // p_n = softmax(a_n)
  std::vector<std::vector<std::size_t>> topk;  // rows selected for each class
};

// Ties inside a column resolve to the earlier row.
VideoScore video_class_scores(const Tensor2& tcas, std::size_t k);

// Uniform distribution over the video's positive classes.
std::vector<double> normalized_labels(std::span<const int> labels, std::size_t num_classes);

inline constexpr double kLogClamp = 1e-12;

// -sum_c target[c] * log(max(p[c], 1e-12)). Increments *clamp_count once per clamped term.
double action_loss(std::span<const double> probs, std::span<const double> target,
                   std::size_t* clamp_count = nullptr);

// dL/dA for one video: (p_c - y_c) / k at each class's top-k rows, 0 elsewhere.
Tensor2 action_loss_grad(const VideoScore& score, std::span<const double> target,
                         std::size_t rows);

struct NceResult {
  double loss = 0.0;
  std::vector<double> grad_query;
  std::vector<double> grad_positive;
  Tensor2 grad_negatives;
};

// Temperature-scaled InfoNCE over unit-sphere projections of the inputs.
// Throws DegenerateVectorError if any vector has zero norm.
NceResult nce_term_with_grad(std::span<const double> query, std::span<const double> positive,
                             const Tensor2& negatives, double tau);
double nce_term(std::span<const double> query, std::span<const double> positive,
                const Tensor2& negatives, double tau);

struct SnicoResult {
  double loss = 0.0;  // hard_action_term + hard_background_term
  double hard_action_term = 0.0;
  double hard_background_term = 0.0;
  Tensor2 grad_embedded;  // dL_s/dX^E, same shape as X^E
  std::size_t skipped_pairs = 0;  // queries dropped for a zero-norm vector
  std::size_t negatives_used = 0;
  bool degenerate = false;  // neither refinement could be formed
};

// Every hard snippet is a query once; each query draws one positive uniformly and S
// negatives without replacement. S is lowered to the available easy count when short.
SnicoResult snico_loss(const Tensor2& embedded, const SnippetSets& sets, const LossConfig& config,
                       Rng& rng);

inline double total_loss(double action, double snico, double lambda) {
  return action + lambda * snico;
}

}  // namespace cola
