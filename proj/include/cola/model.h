#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cola/ops.h"
#include "cola/rng.h"
#include "cola/tensor.h"

namespace cola {

struct ModelConfig {
  std::uint32_t feature_dim = 0;  // per-stream width d; the model input is 2d wide
  std::uint32_t num_classes = 0;
  std::uint32_t embed_kernel = 3;
  std::uint32_t cls_kernel = 1;
  double dropout_rate = 0.7;

  std::size_t input_width() const { return 2 * static_cast<std::size_t>(feature_dim); }
  void validate() const;  // throws ConfigError

  bool operator==(const ModelConfig&) const = default;
};

// Learnable tensors: the embedding conv (2d -> 2d) and the snippet classifier conv (2d -> C).
struct ModelParams {
  ModelConfig config;
  ParamSlot embed_weight;
  ParamSlot embed_bias;
  ParamSlot cls_weight;
  ParamSlot cls_bias;

  // He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
  static ModelParams initialize(const ModelConfig& config, Rng& rng);

  // Checkpoint order: embed_weight, embed_bias, cls_weight, cls_bias.
  std::array<ParamSlot*, 4> slots();
  std::array<const ParamSlot*, 4> slots() const;

  void zero_grad();
};

struct EmbedOutput {
  Tensor2 pre_activation;
  Tensor2 embedded;  // relu(pre_activation)
};

// X^E = relu(conv1d(raw)). raw is T x 2d, the two streams already concatenated.
EmbedOutput embed_features(const Tensor2& raw, const ModelParams& params);

struct ClassifierOutput {
  Tensor2 tcas;             // T x C, unbounded logits
  Tensor2 classifier_input;  // dropout(X^E)
  Tensor2 dropout_mask;
};

ClassifierOutput classify_snippets(const Tensor2& embedded, const ModelParams& params,
                                   bool training, Rng& rng);

// sigmoid of each T-CAS row sum.
std::vector<double> actionness(const Tensor2& tcas);

struct ForwardOutput {
  Tensor2 pre_activation;
  Tensor2 embedded;
  Tensor2 classifier_input;
  Tensor2 dropout_mask;
  Tensor2 tcas;
  std::vector<double> actionness;
};

ForwardOutput forward(const Tensor2& raw, const ModelParams& params, bool training, Rng& rng);

// Accumulates parameter gradients given dL/dA and an optional direct dL/dX^E term
// (pass an empty tensor when there is none).
void backward(const Tensor2& raw, const ForwardOutput& cache, const Tensor2& grad_tcas,
              const Tensor2& grad_embedded, ModelParams& params);

// Binary checkpoint: "COLAMDL1", u32 feature_dim, num_classes, embed_kernel, cls_kernel,
// f64 dropout_rate, then per tensor u32 rows, u32 cols, rows*cols f64. All little-endian.
std::string serialize_checkpoint(const ModelParams& params);
ModelParams deserialize_checkpoint(const std::string& bytes, const std::string& source = "checkpoint");
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace cola
