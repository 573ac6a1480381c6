#include "cola/model.h"

#include <cmath>
#include <stdexcept>
#include <string>

#include "binary_io.h"
#include "cola/errors.h"

namespace cola {
namespace {

constexpr std::string_view kCheckpointMagic = "COLAMDL1";

Tensor2 he_uniform(std::size_t rows, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor2 w(rows, fan_in);
  for (double& v : w.data()) v = rng.uniform(-bound, bound);
  return w;
}

void accumulate(Tensor2& into, const Tensor2& delta) { into.add_scaled(delta, 1.0); }

}  // namespace

void ModelConfig::validate() const {
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (embed_kernel < 1) throw ConfigError("embed_kernel must be >= 1");
  if (cls_kernel < 1) throw ConfigError("cls_kernel must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout_rate must be in [0, 1)");
  }
}

ModelParams ModelParams::initialize(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t width = config.input_width();
  ModelParams params;
  params.config = config;
  params.embed_weight = ParamSlot(he_uniform(width, width * config.embed_kernel, rng));
  params.embed_bias = ParamSlot(Tensor2(1, width));
  params.cls_weight = ParamSlot(he_uniform(config.num_classes, width * config.cls_kernel, rng));
  params.cls_bias = ParamSlot(Tensor2(1, config.num_classes));
  return params;
}

std::array<ParamSlot*, 4> ModelParams::slots() {
  return {&embed_weight, &embed_bias, &cls_weight, &cls_bias};
}

std::array<const ParamSlot*, 4> ModelParams::slots() const {
  return {&embed_weight, &embed_bias, &cls_weight, &cls_bias};
}

void ModelParams::zero_grad() {
  for (ParamSlot* slot : slots()) slot->zero_grad();
}

EmbedOutput embed_features(const Tensor2& raw, const ModelParams& params) {
  if (raw.cols() != params.config.input_width()) {
    throw std::invalid_argument("embed_features: input has " + std::to_string(raw.cols()) +
                                " columns, model expects " +
                                std::to_string(params.config.input_width()));
  }
  EmbedOutput out;
  out.pre_activation = conv1d_forward(raw, params.embed_weight.value, params.embed_bias.value,
                                      params.config.embed_kernel);
  out.embedded = relu(out.pre_activation);
  return out;
}

ClassifierOutput classify_snippets(const Tensor2& embedded, const ModelParams& params,
                                   bool training, Rng& rng) {
  DropoutResult dropped = dropout(embedded, params.config.dropout_rate, rng, training);
  ClassifierOutput out;
  out.tcas = conv1d_forward(dropped.output, params.cls_weight.value, params.cls_bias.value,
                            params.config.cls_kernel);
  out.classifier_input = std::move(dropped.output);
  out.dropout_mask = std::move(dropped.mask);
  return out;
}

std::vector<double> actionness(const Tensor2& tcas) {
  std::vector<double> out(tcas.rows());
  for (std::size_t t = 0; t < tcas.rows(); ++t) {
    double total = 0.0;
    for (double v : tcas.row(t)) total += v;
    out[t] = sigmoid(total);
  }
  return out;
}

ForwardOutput forward(const Tensor2& raw, const ModelParams& params, bool training, Rng& rng) {
  EmbedOutput embed = embed_features(raw, params);
  ClassifierOutput cls = classify_snippets(embed.embedded, params, training, rng);
  ForwardOutput out;
  out.actionness = actionness(cls.tcas);
  out.pre_activation = std::move(embed.pre_activation);
  out.embedded = std::move(embed.embedded);
  out.classifier_input = std::move(cls.classifier_input);
  out.dropout_mask = std::move(cls.dropout_mask);
  out.tcas = std::move(cls.tcas);
  return out;
}

void backward(const Tensor2& raw, const ForwardOutput& cache, const Tensor2& grad_tcas,
              const Tensor2& grad_embedded, ModelParams& params) {
  Conv1dGrads cls = conv1d_backward(grad_tcas, cache.classifier_input, params.cls_weight.value,
                                    params.config.cls_kernel);
  accumulate(params.cls_weight.grad, cls.kernel);
  accumulate(params.cls_bias.grad, cls.bias);

  Tensor2 grad_x = dropout_backward(cls.input, cache.dropout_mask, params.config.dropout_rate);
  if (!grad_embedded.empty()) accumulate(grad_x, grad_embedded);

  const Tensor2 grad_pre = relu_backward(grad_x, cache.pre_activation);
  Conv1dGrads embed = conv1d_backward(grad_pre, raw, params.embed_weight.value,
                                      params.config.embed_kernel);
  accumulate(params.embed_weight.grad, embed.kernel);
  accumulate(params.embed_bias.grad, embed.bias);
}

std::string serialize_checkpoint(const ModelParams& params) {
  detail::ByteWriter out;
  out.bytes(kCheckpointMagic);
  out.u32(params.config.feature_dim);
  out.u32(params.config.num_classes);
  out.u32(params.config.embed_kernel);
  out.u32(params.config.cls_kernel);
  out.f64(params.config.dropout_rate);
  for (const ParamSlot* slot : params.slots()) {
    out.u32(static_cast<std::uint32_t>(slot->value.rows()));
    out.u32(static_cast<std::uint32_t>(slot->value.cols()));
    for (double v : slot->value.data()) out.f64(v);
  }
  return out.buffer();
}

ModelParams deserialize_checkpoint(const std::string& bytes, const std::string& source) {
  detail::ByteReader in(bytes, source);
  if (in.bytes(kCheckpointMagic.size(), "magic") != kCheckpointMagic) {
    throw FormatError(source + ": bad checkpoint magic at byte offset 0");
  }
  ModelConfig config;
  config.feature_dim = in.u32("feature_dim");
  config.num_classes = in.u32("num_classes");
  config.embed_kernel = in.u32("embed_kernel");
  config.cls_kernel = in.u32("cls_kernel");
  config.dropout_rate = in.f64("dropout_rate");
  try {
    config.validate();
  } catch (const ConfigError& e) {
    in.fail(std::string("invalid model config (") + e.what() + ")");
  }

  Rng unused(0);
  ModelParams params = ModelParams::initialize(config, unused);
  for (ParamSlot* slot : params.slots()) {
    const std::uint32_t rows = in.u32("tensor rows");
    const std::uint32_t cols = in.u32("tensor cols");
    if (rows != slot->value.rows() || cols != slot->value.cols()) {
      in.fail("tensor shape " + std::to_string(rows) + "x" + std::to_string(cols) +
              " does not match the model config");
    }
    for (double& v : slot->value.data()) v = in.f64("tensor payload");
  }
  if (in.remaining() != 0) in.fail("trailing bytes after checkpoint payload");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  detail::write_file_bytes(path, serialize_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(detail::read_file_bytes(path), path.string());
}

}  // namespace cola
