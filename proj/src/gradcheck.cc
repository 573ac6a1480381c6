#include "cola/gradcheck.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "cola/trainer.h"

namespace cola {

GradcheckResult run_gradcheck(const GradcheckOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  Rng rng(options.seed);

  TrainConfig config;
  config.t_sample = static_cast<std::uint32_t>(options.steps);
  config.model.feature_dim = options.feature_dim;
  config.model.num_classes = options.num_classes;
  config.model.dropout_rate = 0.0;
  config.loss.lambda = options.lambda;
  // Small masks and ratios so a 16-snippet clip still yields every snippet set.
  config.mining.mask_small = 1;
  config.mining.mask_large = 3;
  config.mining.r_easy = 4;
  config.mining.r_hard = 8;
  config.validate();

  ModelParams params = ModelParams::initialize(config.model, rng);
  // Nonzero biases keep the embedding away from the all-dead ReLU corner.
  for (double& b : params.embed_bias.value.data()) b = rng.uniform(0.05, 0.2);
  for (double& b : params.cls_bias.value.data()) b = rng.uniform(-0.1, 0.1);

  Tensor2 raw(options.steps, config.model.input_width());
  for (double& v : raw.data()) v = rng.uniform(-1.0, 1.0);
  std::vector<int> labels = {static_cast<int>(rng.below(options.num_classes))};

  const std::uint64_t draw_seed = rng.next_u64();
  SnippetSets sets;
  {
    Rng draws(draw_seed);
    const ForwardOutput out = forward(raw, params, false, draws);
    sets = mine_snippets(out.actionness, config.mining, draws);
  }
  if (sets.hard_action.empty() || sets.hard_background.empty() || sets.easy_action.empty() ||
      sets.easy_background.empty()) {
    // Untrained actionness can binarize to a single level; fall back to fixed sets.
    sets.hard_action = {5, 6};
    sets.hard_background = {9, 10};
    sets.easy_action = {0, 1, 2, 3};
    sets.easy_background = {12, 13, 14, 15};
    sets.k_hard = 2;
    sets.k_easy = 4;
  }

  const auto loss_at = [&](const ModelParams& p) {
    Rng draws(draw_seed);
    return evaluate_objective(raw, labels, p, config, false, draws, &sets);
  };

  params.zero_grad();
  {
    const VideoObjective base = loss_at(params);
    backward(raw, base.forward, base.grad_tcas, base.grad_embedded, params);
    // Dropout is off, so the cached forward is the exact point we differentiate at.
  }
  GradcheckResult result;
  result.snico_active = options.lambda > 0.0 && loss_at(params).loss_snico > 0.0;

  const char* names[] = {"embed_weight", "embed_bias", "cls_weight", "cls_bias"};
  const auto slots = params.slots();
  for (std::size_t s = 0; s < slots.size(); ++s) {
    auto values = slots[s]->value.data();
    const auto analytic = slots[s]->grad.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.epsilon;
      const double plus = loss_at(params).loss_total;
      values[i] = saved - options.epsilon;
      const double minus = loss_at(params).loss_total;
      values[i] = saved;

      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double abs_err = std::abs(numeric - analytic[i]);
      const double scale = std::max(std::abs(numeric), std::abs(analytic[i]));
      const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
      ++result.checked;
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      if (scale > options.abs_floor) result.max_rel_error = std::max(result.max_rel_error, rel_err);
      const bool ok = abs_err <= options.abs_floor || rel_err <= options.rel_tolerance;
      if (!ok) {
        ++result.failed;
        if (result.failures.size() < 10) {
          char buf[160];
          std::snprintf(buf, sizeof(buf), "%s[%zu]: analytic %.10g numeric %.10g", names[s], i,
                        analytic[i], numeric);
          result.failures.emplace_back(buf);
        }
      }
    }
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace cola
