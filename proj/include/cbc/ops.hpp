#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cbc/tensor.hpp"

namespace cbc {

/// Geometry of one convolution: kernel window, channel fan, stride, symmetric
/// zero padding. Output spatial size must come out >= 1.
struct ConvGeometry {
    std::size_t kernel_h = 1, kernel_w = 1;
    std::size_t in_channels = 1, out_channels = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t out_extent(std::size_t in_extent, std::size_t kernel) const;
    bool operator==(const ConvGeometry&) const = default;
};

/// out[n,m,i,j] = bias[m] + sum_{c,u,v} in[n,c,i*s+u-p, j*s+v-p] * w[m,c,u,v]
/// (cross-correlation; out-of-range input reads as zero).
Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& weights,
                       std::span<const double> bias, const ConvGeometry& geom);

struct ConvWeightGrads {
    Tensor4 weights;           // [M,C,H,W]
    std::vector<double> bias;  // [M]
};

ConvWeightGrads conv2d_backward_weights(const Tensor4& input, const Tensor4& grad_out,
                                        const ConvGeometry& geom);

Tensor4 conv2d_backward_input(const Tensor4& weights, const Tensor4& grad_out,
                              const ConvGeometry& geom, std::size_t in_h, std::size_t in_w);

Tensor4 relu_forward(const Tensor4& input);
Tensor4 relu_backward(const Tensor4& input, const Tensor4& grad_out);

struct MaxPoolResult {
    Tensor4 output;
    std::vector<std::size_t> argmax;  // flat input index feeding each output element
};

/// 2x2 window, stride 2; odd trailing rows/cols are dropped.
MaxPoolResult maxpool2x2_forward(const Tensor4& input);
Tensor4 maxpool2x2_backward(const Dims4& input_dims, const std::vector<std::size_t>& argmax,
                            const Tensor4& grad_out);

Tensor4 global_avg_pool_forward(const Tensor4& input);
Tensor4 global_avg_pool_backward(const Dims4& input_dims, const Tensor4& grad_out);

/// Fully connected over the flattened (c,h,w) extent. weights is [units, K, 1, 1]
/// with K = c*h*w of the input; output is [N, units, 1, 1].
Tensor4 dense_forward(const Tensor4& input, const Tensor4& weights,
                      std::span<const double> bias);

struct DenseGrads {
    Tensor4 input;
    Tensor4 weights;
    std::vector<double> bias;
};

DenseGrads dense_backward(const Tensor4& input, const Tensor4& weights, const Tensor4& grad_out);

/// Per-channel batch stats captured during the forward pass; backward needs them.
struct BatchNormCache {
    std::vector<double> mean;     // per channel
    std::vector<double> inv_std;  // 1/sqrt(var + eps), biased var
};

/// Training mode: normalizes with batch statistics and folds them into the
/// running estimates (unbiased variance, `momentum` weight on the new batch).
Tensor4 batchnorm_forward_train(const Tensor4& input, std::span<const double> gamma,
                                std::span<const double> beta, double eps, double momentum,
                                std::span<double> running_mean, std::span<double> running_var,
                                BatchNormCache& cache);

Tensor4 batchnorm_forward_eval(const Tensor4& input, std::span<const double> gamma,
                               std::span<const double> beta, std::span<const double> running_mean,
                               std::span<const double> running_var, double eps);

struct BatchNormGrads {
    Tensor4 input;
    std::vector<double> gamma;
    std::vector<double> beta;
};

BatchNormGrads batchnorm_backward(const Tensor4& input, std::span<const double> gamma,
                                  const BatchNormCache& cache, const Tensor4& grad_out);

struct SoftmaxXentResult {
    double loss = 0.0;   // mean over the batch
    Tensor4 grad_logits; // includes the 1/N factor
};

/// logits is [N,K,1,1]; labels in [0,K).
SoftmaxXentResult softmax_cross_entropy(const Tensor4& logits, std::span<const int> labels);

}  // namespace cbc
