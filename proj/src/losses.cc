#include "cola/losses.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "cola/errors.h"
#include "cola/ops.h"

namespace cola {
namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Pulls a gradient taken w.r.t. u = v / |v| back to v: (g - u (u.g)) / |v|.
void unnormalize_grad(std::span<double> grad, std::span<const double> unit, double norm) {
  const double along = dot(unit, grad);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = (grad[i] - unit[i] * along) / norm;
}

struct Refine {
  const std::vector<std::size_t>* queries;
  const std::vector<std::size_t>* positives;
  const std::vector<std::size_t>* negatives;
};

bool has_zero_norm(const Tensor2& embedded, std::size_t row) {
  for (double v : embedded.row(row)) {
    if (v != 0.0) return false;
  }
  return true;
}

}  // namespace

void LossConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be > 0");
}

VideoScore video_class_scores(const Tensor2& tcas, std::size_t k) {
  const std::size_t rows = tcas.rows();
  if (k == 0 || k > rows) {
    throw std::invalid_argument("video_class_scores: k must be in [1, T], got " + std::to_string(k));
  }
  VideoScore score;
  score.aggregate.resize(tcas.cols());
  score.topk.resize(tcas.cols());
  std::vector<std::size_t> order(rows);
  for (std::size_t c = 0; c < tcas.cols(); ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double va = tcas(a, c);
                        const double vb = tcas(b, c);
                        return va > vb || (va == vb && a < b);
                      });
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) total += tcas(order[i], c);
    score.aggregate[c] = total / static_cast<double>(k);
    score.topk[c].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  }
  score.probabilities = softmax(score.aggregate);
  return score;
}

std::vector<double> normalized_labels(std::span<const int> labels, std::size_t num_classes) {
  std::vector<double> y(num_classes, 0.0);
  std::size_t positives = 0;
  for (int c : labels) {
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
      throw std::invalid_argument("normalized_labels: class id " + std::to_string(c) +
                                  " out of range");
    }
    if (y[c] == 0.0) ++positives;
    y[c] = 1.0;
  }
  if (positives == 0) throw std::invalid_argument("normalized_labels: empty label set");
  for (double& v : y) v /= static_cast<double>(positives);
  return y;
}

double action_loss(std::span<const double> probs, std::span<const double> target,
                   std::size_t* clamp_count) {
  if (probs.size() != target.size()) throw std::invalid_argument("action_loss: length mismatch");
  double loss = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (target[c] == 0.0) continue;
    double p = probs[c];
    if (p < kLogClamp) {
      p = kLogClamp;
      if (clamp_count) ++*clamp_count;
    }
    loss -= target[c] * std::log(p);
  }
  return loss;
}

Tensor2 action_loss_grad(const VideoScore& score, std::span<const double> target, std::size_t rows) {
  const std::size_t classes = score.probabilities.size();
  if (target.size() != classes) throw std::invalid_argument("action_loss_grad: length mismatch");
  const double target_mass = std::accumulate(target.begin(), target.end(), 0.0);
  Tensor2 grad(rows, classes);
  for (std::size_t c = 0; c < classes; ++c) {
    // d/da_c of -sum_j y_j log softmax(a)_j
    const double grad_aggregate = target_mass * score.probabilities[c] - target[c];
    const double per_row = grad_aggregate / static_cast<double>(score.topk[c].size());
    for (std::size_t t : score.topk[c]) grad(t, c) += per_row;
  }
  return grad;
}

NceResult nce_term_with_grad(std::span<const double> query, std::span<const double> positive,
                             const Tensor2& negatives, double tau) {
  const std::size_t dim = query.size();
  if (positive.size() != dim || negatives.cols() != dim) {
    throw std::invalid_argument("nce_term: dimension mismatch");
  }
  if (negatives.rows() == 0) throw std::invalid_argument("nce_term: need at least one negative");
  if (!(tau > 0.0)) throw std::invalid_argument("nce_term: tau must be > 0");

  const std::size_t count = negatives.rows() + 1;
  // Row 0 is the positive, rows 1.. are the negatives.
  Tensor2 keys(count, dim);
  std::copy(positive.begin(), positive.end(), keys.row(0).begin());
  for (std::size_t s = 0; s < negatives.rows(); ++s) {
    std::copy(negatives.row(s).begin(), negatives.row(s).end(), keys.row(s + 1).begin());
  }

  std::vector<double> unit_query(query.begin(), query.end());
  const double query_norm = norm2(unit_query);
  if (query_norm == 0.0) throw DegenerateVectorError("nce_term: zero-norm query");
  for (double& v : unit_query) v /= query_norm;

  std::vector<double> key_norms(count);
  for (std::size_t i = 0; i < count; ++i) {
    key_norms[i] = norm2(keys.row(i));
    if (key_norms[i] == 0.0) throw DegenerateVectorError("nce_term: zero-norm key");
    for (double& v : keys.row(i)) v /= key_norms[i];
  }

  std::vector<double> logits(count);
  for (std::size_t i = 0; i < count; ++i) logits[i] = dot(unit_query, keys.row(i)) / tau;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double z : logits) denom += std::exp(z - peak);

  NceResult result;
  result.loss = -(logits[0] - peak) + std::log(denom);

  // dl/dz_i = softmax_i - [i == 0]
  std::vector<double> grad_logits(count);
  for (std::size_t i = 0; i < count; ++i) grad_logits[i] = std::exp(logits[i] - peak) / denom;
  grad_logits[0] -= 1.0;

  result.grad_query.assign(dim, 0.0);
  Tensor2 grad_keys(count, dim);
  for (std::size_t i = 0; i < count; ++i) {
    const double g = grad_logits[i] / tau;
    const auto key = keys.row(i);
    auto gk = grad_keys.row(i);
    for (std::size_t j = 0; j < dim; ++j) {
      result.grad_query[j] += g * key[j];
      gk[j] = g * unit_query[j];
    }
    unnormalize_grad(gk, key, key_norms[i]);
  }
  unnormalize_grad(result.grad_query, unit_query, query_norm);

  result.grad_positive.assign(grad_keys.row(0).begin(), grad_keys.row(0).end());
  result.grad_negatives = Tensor2(negatives.rows(), dim);
  for (std::size_t s = 0; s < negatives.rows(); ++s) {
    std::copy(grad_keys.row(s + 1).begin(), grad_keys.row(s + 1).end(),
              result.grad_negatives.row(s).begin());
  }
  return result;
}

double nce_term(std::span<const double> query, std::span<const double> positive,
                const Tensor2& negatives, double tau) {
  return nce_term_with_grad(query, positive, negatives, tau).loss;
}

SnicoResult snico_loss(const Tensor2& embedded, const SnippetSets& sets, const LossConfig& config,
                       Rng& rng) {
  SnicoResult result;
  result.grad_embedded = Tensor2(embedded.rows(), embedded.cols());
  const std::size_t dim = embedded.cols();

  const bool use_ha = config.refinement != Refinement::kHardBackgroundOnly;
  const bool use_hb = config.refinement != Refinement::kHardActionOnly;
  const Refine ha{&sets.hard_action, &sets.easy_action, &sets.easy_background};
  const Refine hb{&sets.hard_background, &sets.easy_background, &sets.easy_action};

  bool any_term = false;
  auto run = [&](const Refine& refine, bool enabled) -> double {
    if (!enabled || refine.queries->empty() || refine.positives->empty() ||
        refine.negatives->empty()) {
      return 0.0;
    }
    const std::size_t requested = config.negatives == 0 ? sets.k_easy : config.negatives;
    const std::size_t s_count = std::min(requested, refine.negatives->size());
    result.negatives_used = std::max(result.negatives_used, s_count);

    std::vector<std::size_t> pool = *refine.negatives;
    std::vector<std::size_t> chosen(s_count);
    double total = 0.0;
    std::size_t used = 0;
    Tensor2 neg(s_count, dim);
    // Gradients are buffered per refinement so each term can be averaged over its queries.
    Tensor2 grad(embedded.rows(), dim);
    for (std::size_t q : *refine.queries) {
      const std::size_t p = (*refine.positives)[rng.below(refine.positives->size())];
      for (std::size_t i = 0; i < s_count; ++i) {
        std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
        chosen[i] = pool[i];
      }
      bool degenerate = has_zero_norm(embedded, q) || has_zero_norm(embedded, p);
      for (std::size_t i = 0; i < s_count && !degenerate; ++i) {
        degenerate = has_zero_norm(embedded, chosen[i]);
      }
      if (degenerate) {
        ++result.skipped_pairs;
        continue;
      }
      for (std::size_t i = 0; i < s_count; ++i) {
        std::copy(embedded.row(chosen[i]).begin(), embedded.row(chosen[i]).end(),
                  neg.row(i).begin());
      }
      const NceResult term = nce_term_with_grad(embedded.row(q), embedded.row(p), neg, config.tau);
      total += term.loss;
      ++used;
      for (std::size_t j = 0; j < dim; ++j) {
        grad(q, j) += term.grad_query[j];
        grad(p, j) += term.grad_positive[j];
      }
      for (std::size_t i = 0; i < s_count; ++i) {
        for (std::size_t j = 0; j < dim; ++j) grad(chosen[i], j) += term.grad_negatives(i, j);
      }
    }
    if (used == 0) return 0.0;
    any_term = true;
    const double inv = 1.0 / static_cast<double>(used);
    result.grad_embedded.add_scaled(grad, inv);
    return total * inv;
  };

  result.hard_action_term = run(ha, use_ha);
  result.hard_background_term = run(hb, use_hb);
  result.loss = result.hard_action_term + result.hard_background_term;
  result.degenerate = !any_term;
  return result;
}

}  // namespace cola
