#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cola/rng.h"
#include "cola/tensor.h"

namespace cola {

// Temporal convolution with stride 1 and zero "same" padding.
//
// input:  T x Cin
// kernel: Cout x (Cin * width), element [co][ci * width + k]
// bias:   1 x Cout
// output: T x Cout with
//   out[t][co] = bias[co] + sum_{ci,k} input[t - (width - 1) / 2 + k][ci] * kernel[co][ci * width + k]
Tensor2 conv1d_forward(const Tensor2& input, const Tensor2& kernel, const Tensor2& bias,
                       std::size_t width);

struct Conv1dGrads {
  Tensor2 input;
  Tensor2 kernel;
  Tensor2 bias;
};

Conv1dGrads conv1d_backward(const Tensor2& grad_out, const Tensor2& input, const Tensor2& kernel,
                            std::size_t width);

Tensor2 relu(const Tensor2& x);
// grad_out masked by (pre_activation > 0).
Tensor2 relu_backward(const Tensor2& grad_out, const Tensor2& pre_activation);

double sigmoid(double x);
std::vector<double> sigmoid(std::span<const double> x);
// dL/dx given dL/dy and y = sigmoid(x).
std::vector<double> sigmoid_backward(std::span<const double> grad_out,
                                     std::span<const double> output);

std::vector<double> softmax(std::span<const double> x);
Tensor2 softmax_rows(const Tensor2& x);

struct DropoutResult {
  Tensor2 output;
  Tensor2 mask;  // 1 where the entry survived, 0 where it was dropped
};

// Inverted dropout: survivors are scaled by 1 / (1 - rate). Identity when not training.
DropoutResult dropout(const Tensor2& input, double rate, Rng& rng, bool training);
Tensor2 dropout_backward(const Tensor2& grad_out, const Tensor2& mask, double rate);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update; zeroes the gradient afterwards.
// Throws TrainingDivergedError (leaving the slot untouched) on a non-finite gradient.
void adam_step(ParamSlot& slot, const AdamConfig& config);

}  // namespace cola
