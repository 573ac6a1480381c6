#include "cola/ops.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cola/errors.h"

namespace cola {
namespace {

void check_conv_shapes(const Tensor2& input, const Tensor2& kernel, std::size_t width,
                       const char* where) {
  if (width == 0) throw std::invalid_argument(std::string(where) + ": kernel width must be >= 1");
  if (kernel.cols() != input.cols() * width) {
    throw std::invalid_argument(std::string(where) + ": kernel has " +
                                std::to_string(kernel.cols()) + " columns, expected Cin*width = " +
                                std::to_string(input.cols() * width));
  }
}

// Reorders kernel[co][ci * width + k] into taps[k][co][ci] so the inner loops are contiguous.
std::vector<double> kernel_to_taps(const Tensor2& kernel, std::size_t cin, std::size_t width) {
  const std::size_t cout = kernel.rows();
  std::vector<double> taps(width * cout * cin);
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t k = 0; k < width; ++k) {
        taps[(k * cout + co) * cin + ci] = kernel(co, ci * width + k);
      }
    }
  }
  return taps;
}

}  // namespace

Tensor2 conv1d_forward(const Tensor2& input, const Tensor2& kernel, const Tensor2& bias,
                       std::size_t width) {
  check_conv_shapes(input, kernel, width, "conv1d_forward");
  const std::size_t steps = input.rows();
  const std::size_t cin = input.cols();
  const std::size_t cout = kernel.rows();
  if (bias.rows() != 1 || bias.cols() != cout) {
    throw std::invalid_argument("conv1d_forward: bias must be 1 x " + std::to_string(cout));
  }
  const std::size_t left = (width - 1) / 2;
  const std::vector<double> taps = kernel_to_taps(kernel, cin, width);

  Tensor2 out(steps, cout);
  for (std::size_t t = 0; t < steps; ++t) {
    auto out_row = out.row(t);
    for (std::size_t co = 0; co < cout; ++co) out_row[co] = bias(0, co);
    for (std::size_t k = 0; k < width; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(left);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
      const double* x = input.row(static_cast<std::size_t>(src)).data();
      for (std::size_t co = 0; co < cout; ++co) {
        const double* w = taps.data() + (k * cout + co) * cin;
        double acc = 0.0;
        for (std::size_t ci = 0; ci < cin; ++ci) acc += x[ci] * w[ci];
        out_row[co] += acc;
      }
    }
  }
  return out;
}

Conv1dGrads conv1d_backward(const Tensor2& grad_out, const Tensor2& input, const Tensor2& kernel,
                            std::size_t width) {
  check_conv_shapes(input, kernel, width, "conv1d_backward");
  const std::size_t steps = input.rows();
  const std::size_t cin = input.cols();
  const std::size_t cout = kernel.rows();
  if (grad_out.rows() != steps || grad_out.cols() != cout) {
    throw std::invalid_argument("conv1d_backward: grad_out must be " + std::to_string(steps) +
                                " x " + std::to_string(cout));
  }
  const std::size_t left = (width - 1) / 2;
  const std::vector<double> taps = kernel_to_taps(kernel, cin, width);
  std::vector<double> grad_taps(taps.size(), 0.0);

  Conv1dGrads grads{Tensor2(steps, cin), Tensor2(cout, cin * width), Tensor2(1, cout)};
  for (std::size_t t = 0; t < steps; ++t) {
    const auto g = grad_out.row(t);
    for (std::size_t co = 0; co < cout; ++co) grads.bias(0, co) += g[co];
    for (std::size_t k = 0; k < width; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(left);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
      const double* x = input.row(static_cast<std::size_t>(src)).data();
      double* gx = grads.input.row(static_cast<std::size_t>(src)).data();
      for (std::size_t co = 0; co < cout; ++co) {
        const double gco = g[co];
        if (gco == 0.0) continue;
        const double* w = taps.data() + (k * cout + co) * cin;
        double* gw = grad_taps.data() + (k * cout + co) * cin;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          gx[ci] += gco * w[ci];
          gw[ci] += gco * x[ci];
        }
      }
    }
  }
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t k = 0; k < width; ++k) {
        grads.kernel(co, ci * width + k) = grad_taps[(k * cout + co) * cin + ci];
      }
    }
  }
  return grads;
}

Tensor2 relu(const Tensor2& x) {
  Tensor2 out = x;
  for (double& v : out.data()) v = v < 0.0 ? 0.0 : v;  // NaN passes through
  return out;
}

Tensor2 relu_backward(const Tensor2& grad_out, const Tensor2& pre_activation) {
  if (!grad_out.same_shape(pre_activation)) {
    throw std::invalid_argument("relu_backward: shape mismatch");
  }
  Tensor2 out = grad_out;
  auto g = out.data();
  const auto x = pre_activation.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > 0.0)) g[i] = 0.0;
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> sigmoid(std::span<const double> x) {
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return sigmoid(v); });
  return out;
}

std::vector<double> sigmoid_backward(std::span<const double> grad_out,
                                     std::span<const double> output) {
  if (grad_out.size() != output.size()) {
    throw std::invalid_argument("sigmoid_backward: length mismatch");
  }
  std::vector<double> out(output.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = grad_out[i] * output[i] * (1.0 - output[i]);
  return out;
}

std::vector<double> softmax(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("softmax: empty input");
  const double peak = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Tensor2 softmax_rows(const Tensor2& x) {
  Tensor2 out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = softmax(x.row(r));
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

DropoutResult dropout(const Tensor2& input, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  DropoutResult result{input, Tensor2(input.rows(), input.cols(), 1.0)};
  if (!training || rate == 0.0) return result;
  const double scale = 1.0 / (1.0 - rate);
  auto out = result.output.data();
  auto mask = result.mask.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (rng.uniform() < rate) {
      mask[i] = 0.0;
      out[i] = 0.0;
    } else {
      out[i] *= scale;
    }
  }
  return result;
}

Tensor2 dropout_backward(const Tensor2& grad_out, const Tensor2& mask, double rate) {
  if (!grad_out.same_shape(mask)) throw std::invalid_argument("dropout_backward: shape mismatch");
  const double scale = 1.0 / (1.0 - rate);
  Tensor2 out = grad_out;
  auto g = out.data();
  const auto m = mask.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= m[i] * scale;
  return out;
}

void adam_step(ParamSlot& slot, const AdamConfig& config) {
  if (!slot.grad.same_shape(slot.value)) throw std::invalid_argument("adam_step: grad shape mismatch");
  if (!slot.grad.all_finite()) {
    throw TrainingDivergedError("adam_step: non-finite gradient entry");
  }
  slot.step_count += 1;
  const double t = static_cast<double>(slot.step_count);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  auto value = slot.value.data();
  auto grad = slot.grad.data();
  auto m = slot.adam_m.data();
  auto v = slot.adam_v.data();
  for (std::size_t i = 0; i < value.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    value[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
  slot.zero_grad();
}

}  // namespace cola
