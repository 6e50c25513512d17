#include "cbc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cbc {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

std::string dims_str(const Dims4& d) {
    return "(" + std::to_string(d.n) + "," + std::to_string(d.c) + "," + std::to_string(d.h) +
           "," + std::to_string(d.w) + ")";
}

}  // namespace

std::size_t ConvGeometry::out_extent(std::size_t in_extent, std::size_t kernel) const {
    std::size_t padded = in_extent + 2 * padding;
    if (padded < kernel || stride == 0)
        throw ShapeError("conv output extent would be < 1");
    return (padded - kernel) / stride + 1;
}

Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& weights,
                       std::span<const double> bias, const ConvGeometry& geom) {
    const Dims4& id = input.dims();
    const Dims4& wd = weights.dims();
    require(!input.empty() && !weights.empty(), "conv2d_forward: empty tensor");
    require(wd.n == geom.out_channels && wd.c == geom.in_channels && wd.h == geom.kernel_h &&
                wd.w == geom.kernel_w,
            "conv2d_forward: weights " + dims_str(wd) + " do not match geometry");
    require(id.c == geom.in_channels, "conv2d_forward: input channels != geometry in_channels");
    require(bias.size() == geom.out_channels, "conv2d_forward: bias length != out_channels");
    if (!input.all_finite() || !weights.all_finite())
        throw NumericError("conv2d_forward: non-finite input");

    const std::size_t out_h = geom.out_extent(id.h, geom.kernel_h);
    const std::size_t out_w = geom.out_extent(id.w, geom.kernel_w);
    Tensor4 out(id.n, geom.out_channels, out_h, out_w);

    const long pad = static_cast<long>(geom.padding);
    for (std::size_t n = 0; n < id.n; ++n)
        for (std::size_t m = 0; m < geom.out_channels; ++m)
            for (std::size_t i = 0; i < out_h; ++i)
                for (std::size_t j = 0; j < out_w; ++j) {
                    double acc = bias[m];
                    for (std::size_t c = 0; c < id.c; ++c)
                        for (std::size_t u = 0; u < geom.kernel_h; ++u) {
                            const long y = static_cast<long>(i * geom.stride + u) - pad;
                            if (y < 0 || y >= static_cast<long>(id.h)) continue;
                            for (std::size_t v = 0; v < geom.kernel_w; ++v) {
                                const long x = static_cast<long>(j * geom.stride + v) - pad;
                                if (x < 0 || x >= static_cast<long>(id.w)) continue;
                                acc += input.at(n, c, static_cast<std::size_t>(y),
                                                static_cast<std::size_t>(x)) *
                                       weights.at(m, c, u, v);
                            }
                        }
                    out.at(n, m, i, j) = acc;
                }
    return out;
}

ConvWeightGrads conv2d_backward_weights(const Tensor4& input, const Tensor4& grad_out,
                                        const ConvGeometry& geom) {
    const Dims4& id = input.dims();
    const Dims4& gd = grad_out.dims();
    require(!input.empty() && !grad_out.empty(), "conv2d_backward_weights: empty tensor");
    require(id.c == geom.in_channels, "conv2d_backward_weights: input channel mismatch");
    require(gd.n == id.n && gd.c == geom.out_channels,
            "conv2d_backward_weights: grad_out shape mismatch");
    require(gd.h == geom.out_extent(id.h, geom.kernel_h) &&
                gd.w == geom.out_extent(id.w, geom.kernel_w),
            "conv2d_backward_weights: grad_out spatial size mismatch");

    ConvWeightGrads grads{Tensor4(geom.out_channels, geom.in_channels, geom.kernel_h, geom.kernel_w),
                          std::vector<double>(geom.out_channels, 0.0)};
    const long pad = static_cast<long>(geom.padding);
    for (std::size_t n = 0; n < id.n; ++n)
        for (std::size_t m = 0; m < geom.out_channels; ++m)
            for (std::size_t i = 0; i < gd.h; ++i)
                for (std::size_t j = 0; j < gd.w; ++j) {
                    const double g = grad_out.at(n, m, i, j);
                    grads.bias[m] += g;
                    for (std::size_t c = 0; c < id.c; ++c)
                        for (std::size_t u = 0; u < geom.kernel_h; ++u) {
                            const long y = static_cast<long>(i * geom.stride + u) - pad;
                            if (y < 0 || y >= static_cast<long>(id.h)) continue;
                            for (std::size_t v = 0; v < geom.kernel_w; ++v) {
                                const long x = static_cast<long>(j * geom.stride + v) - pad;
                                if (x < 0 || x >= static_cast<long>(id.w)) continue;
                                grads.weights.at(m, c, u, v) +=
                                    g * input.at(n, c, static_cast<std::size_t>(y),
                                                 static_cast<std::size_t>(x));
                            }
                        }
                }
    return grads;
}

Tensor4 conv2d_backward_input(const Tensor4& weights, const Tensor4& grad_out,
                              const ConvGeometry& geom, std::size_t in_h, std::size_t in_w) {
    const Dims4& wd = weights.dims();
    const Dims4& gd = grad_out.dims();
    require(!weights.empty() && !grad_out.empty(), "conv2d_backward_input: empty tensor");
    require(wd.n == geom.out_channels && wd.c == geom.in_channels && wd.h == geom.kernel_h &&
                wd.w == geom.kernel_w,
            "conv2d_backward_input: weights do not match geometry");
    require(gd.c == geom.out_channels, "conv2d_backward_input: grad_out channel mismatch");
    require(gd.h == geom.out_extent(in_h, geom.kernel_h) &&
                gd.w == geom.out_extent(in_w, geom.kernel_w),
            "conv2d_backward_input: grad_out spatial size mismatch");

    Tensor4 grad_in(gd.n, geom.in_channels, in_h, in_w);
    const long pad = static_cast<long>(geom.padding);
    for (std::size_t n = 0; n < gd.n; ++n)
        for (std::size_t m = 0; m < geom.out_channels; ++m)
            for (std::size_t i = 0; i < gd.h; ++i)
                for (std::size_t j = 0; j < gd.w; ++j) {
                    const double g = grad_out.at(n, m, i, j);
                    for (std::size_t c = 0; c < geom.in_channels; ++c)
                        for (std::size_t u = 0; u < geom.kernel_h; ++u) {
                            const long y = static_cast<long>(i * geom.stride + u) - pad;
                            if (y < 0 || y >= static_cast<long>(in_h)) continue;
                            for (std::size_t v = 0; v < geom.kernel_w; ++v) {
                                const long x = static_cast<long>(j * geom.stride + v) - pad;
                                if (x < 0 || x >= static_cast<long>(in_w)) continue;
                                grad_in.at(n, c, static_cast<std::size_t>(y),
                                           static_cast<std::size_t>(x)) +=
                                    g * weights.at(m, c, u, v);
                            }
                        }
                }
    return grad_in;
}

Tensor4 relu_forward(const Tensor4& input) {
    require(!input.empty(), "relu_forward: empty tensor");
    Tensor4 out(input.dims());
    auto in = input.values();
    auto o = out.values();
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
    return out;
}

Tensor4 relu_backward(const Tensor4& input, const Tensor4& grad_out) {
    require(input.dims() == grad_out.dims(), "relu_backward: shape mismatch");
    Tensor4 grad_in(input.dims());
    auto in = input.values();
    auto g = grad_out.values();
    auto o = grad_in.values();
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0 ? g[i] : 0.0;
    return grad_in;
}

MaxPoolResult maxpool2x2_forward(const Tensor4& input) {
    const Dims4& id = input.dims();
    require(id.h >= 2 && id.w >= 2, "maxpool2x2_forward: input smaller than window");
    const std::size_t oh = id.h / 2, ow = id.w / 2;
    MaxPoolResult res{Tensor4(id.n, id.c, oh, ow), {}};
    res.argmax.resize(res.output.size());
    std::size_t out_idx = 0;
    for (std::size_t n = 0; n < id.n; ++n)
        for (std::size_t c = 0; c < id.c; ++c)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double best = input.at(n, c, 2 * i, 2 * j);
                    std::size_t best_at = ((n * id.c + c) * id.h + 2 * i) * id.w + 2 * j;
                    for (std::size_t u = 0; u < 2; ++u)
                        for (std::size_t v = 0; v < 2; ++v) {
                            const double val = input.at(n, c, 2 * i + u, 2 * j + v);
                            if (val > best) {
                                best = val;
                                best_at = ((n * id.c + c) * id.h + 2 * i + u) * id.w + 2 * j + v;
                            }
                        }
                    res.output.at(n, c, i, j) = best;
                    res.argmax[out_idx++] = best_at;
                }
    return res;
}

Tensor4 maxpool2x2_backward(const Dims4& input_dims, const std::vector<std::size_t>& argmax,
                            const Tensor4& grad_out) {
    require(argmax.size() == grad_out.size(), "maxpool2x2_backward: argmax size mismatch");
    require(grad_out.dims().h == input_dims.h / 2 && grad_out.dims().w == input_dims.w / 2 &&
                grad_out.dims().n == input_dims.n && grad_out.dims().c == input_dims.c,
            "maxpool2x2_backward: grad_out shape mismatch");
    Tensor4 grad_in(input_dims);
    auto g = grad_out.values();
    for (std::size_t i = 0; i < g.size(); ++i) grad_in.values()[argmax[i]] += g[i];
    return grad_in;
}

Tensor4 global_avg_pool_forward(const Tensor4& input) {
    const Dims4& id = input.dims();
    require(!input.empty(), "global_avg_pool_forward: empty tensor");
    Tensor4 out(id.n, id.c, 1, 1);
    const double scale = 1.0 / static_cast<double>(id.h * id.w);
    for (std::size_t n = 0; n < id.n; ++n)
        for (std::size_t c = 0; c < id.c; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < id.h; ++i)
                for (std::size_t j = 0; j < id.w; ++j) acc += input.at(n, c, i, j);
            out.at(n, c, 0, 0) = acc * scale;
        }
    return out;
}

Tensor4 global_avg_pool_backward(const Dims4& input_dims, const Tensor4& grad_out) {
    require(grad_out.dims().n == input_dims.n && grad_out.dims().c == input_dims.c &&
                grad_out.dims().h == 1 && grad_out.dims().w == 1,
            "global_avg_pool_backward: grad_out shape mismatch");
    Tensor4 grad_in(input_dims);
    const double scale = 1.0 / static_cast<double>(input_dims.h * input_dims.w);
    for (std::size_t n = 0; n < input_dims.n; ++n)
        for (std::size_t c = 0; c < input_dims.c; ++c) {
            const double g = grad_out.at(n, c, 0, 0) * scale;
            for (std::size_t i = 0; i < input_dims.h; ++i)
                for (std::size_t j = 0; j < input_dims.w; ++j) grad_in.at(n, c, i, j) = g;
        }
    return grad_in;
}

Tensor4 dense_forward(const Tensor4& input, const Tensor4& weights,
                      std::span<const double> bias) {
    const Dims4& id = input.dims();
    const Dims4& wd = weights.dims();
    const std::size_t k = id.c * id.h * id.w;
    require(wd.c == k && wd.h == 1 && wd.w == 1, "dense_forward: weight fan-in mismatch");
    require(bias.size() == wd.n, "dense_forward: bias length mismatch");

    Tensor4 out(id.n, wd.n, 1, 1);
    const double* in = input.data();
    for (std::size_t n = 0; n < id.n; ++n)
        for (std::size_t u = 0; u < wd.n; ++u) {
            double acc = bias[u];
            const double* row = weights.data() + u * k;
            const double* x = in + n * k;
            for (std::size_t i = 0; i < k; ++i) acc += row[i] * x[i];
            out.at(n, u, 0, 0) = acc;
        }
    return out;
}

DenseGrads dense_backward(const Tensor4& input, const Tensor4& weights, const Tensor4& grad_out) {
    const Dims4& id = input.dims();
    const Dims4& wd = weights.dims();
    const std::size_t k = id.c * id.h * id.w;
    require(wd.c == k, "dense_backward: weight fan-in mismatch");
    require(grad_out.dims().n == id.n && grad_out.dims().c == wd.n && grad_out.dims().h == 1 &&
                grad_out.dims().w == 1,
            "dense_backward: grad_out shape mismatch");

    DenseGrads grads{Tensor4(id), Tensor4(wd), std::vector<double>(wd.n, 0.0)};
    for (std::size_t n = 0; n < id.n; ++n) {
        const double* x = input.data() + n * k;
        double* gx = grads.input.data() + n * k;
        for (std::size_t u = 0; u < wd.n; ++u) {
            const double g = grad_out.at(n, u, 0, 0);
            grads.bias[u] += g;
            const double* row = weights.data() + u * k;
            double* grow = grads.weights.data() + u * k;
            for (std::size_t i = 0; i < k; ++i) {
                grow[i] += g * x[i];
                gx[i] += g * row[i];
            }
        }
    }
    return grads;
}

Tensor4 batchnorm_forward_train(const Tensor4& input, std::span<const double> gamma,
                                std::span<const double> beta, double eps, double momentum,
                                std::span<double> running_mean, std::span<double> running_var,
                                BatchNormCache& cache) {
    const Dims4& id = input.dims();
    require(gamma.size() == id.c && beta.size() == id.c && running_mean.size() == id.c &&
                running_var.size() == id.c,
            "batchnorm_forward_train: per-channel arrays must have length C");
    const std::size_t m = id.n * id.h * id.w;
    if (m < 2)
        throw ShapeError("batchnorm_forward_train: needs more than one value per channel");

    cache.mean.assign(id.c, 0.0);
    cache.inv_std.assign(id.c, 0.0);
    Tensor4 out(id);
    for (std::size_t c = 0; c < id.c; ++c) {
        double sum = 0.0;
        for (std::size_t n = 0; n < id.n; ++n)
            for (std::size_t i = 0; i < id.h; ++i)
                for (std::size_t j = 0; j < id.w; ++j) sum += input.at(n, c, i, j);
        const double mean = sum / static_cast<double>(m);
        double sq = 0.0;
        for (std::size_t n = 0; n < id.n; ++n)
            for (std::size_t i = 0; i < id.h; ++i)
                for (std::size_t j = 0; j < id.w; ++j) {
                    const double d = input.at(n, c, i, j) - mean;
                    sq += d * d;
                }
        const double var = sq / static_cast<double>(m);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        cache.mean[c] = mean;
        cache.inv_std[c] = inv_std;

        // running stats carry the unbiased variance
        const double var_unbiased = sq / static_cast<double>(m - 1);
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean;
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var_unbiased;

        for (std::size_t n = 0; n < id.n; ++n)
            for (std::size_t i = 0; i < id.h; ++i)
                for (std::size_t j = 0; j < id.w; ++j)
                    out.at(n, c, i, j) = gamma[c] * (input.at(n, c, i, j) - mean) * inv_std + beta[c];
    }
    return out;
}

Tensor4 batchnorm_forward_eval(const Tensor4& input, std::span<const double> gamma,
                               std::span<const double> beta, std::span<const double> running_mean,
                               std::span<const double> running_var, double eps) {
    const Dims4& id = input.dims();
    require(gamma.size() == id.c && beta.size() == id.c && running_mean.size() == id.c &&
                running_var.size() == id.c,
            "batchnorm_forward_eval: per-channel arrays must have length C");
    Tensor4 out(id);
    for (std::size_t c = 0; c < id.c; ++c) {
        const double inv_std = 1.0 / std::sqrt(running_var[c] + eps);
        for (std::size_t n = 0; n < id.n; ++n)
            for (std::size_t i = 0; i < id.h; ++i)
                for (std::size_t j = 0; j < id.w; ++j)
                    out.at(n, c, i, j) =
                        gamma[c] * (input.at(n, c, i, j) - running_mean[c]) * inv_std + beta[c];
    }
    return out;
}

BatchNormGrads batchnorm_backward(const Tensor4& input, std::span<const double> gamma,
                                  const BatchNormCache& cache, const Tensor4& grad_out) {
    const Dims4& id = input.dims();
    require(grad_out.dims() == id, "batchnorm_backward: shape mismatch");
    require(cache.mean.size() == id.c && cache.inv_std.size() == id.c,
            "batchnorm_backward: cache channel mismatch");
    const double m = static_cast<double>(id.n * id.h * id.w);

    BatchNormGrads grads{Tensor4(id), std::vector<double>(id.c, 0.0),
                         std::vector<double>(id.c, 0.0)};
    for (std::size_t c = 0; c < id.c; ++c) {
        const double mean = cache.mean[c];
        const double inv_std = cache.inv_std[c];
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t n = 0; n < id.n; ++n)
            for (std::size_t i = 0; i < id.h; ++i)
                for (std::size_t j = 0; j < id.w; ++j) {
                    const double g = grad_out.at(n, c, i, j);
                    const double xhat = (input.at(n, c, i, j) - mean) * inv_std;
                    sum_g += g;
                    sum_gx += g * xhat;
                }
        grads.beta[c] = sum_g;
        grads.gamma[c] = sum_gx;
        const double scale = gamma[c] * inv_std;
        for (std::size_t n = 0; n < id.n; ++n)
            for (std::size_t i = 0; i < id.h; ++i)
                for (std::size_t j = 0; j < id.w; ++j) {
                    const double g = grad_out.at(n, c, i, j);
                    const double xhat = (input.at(n, c, i, j) - mean) * inv_std;
                    grads.input.at(n, c, i, j) = scale * (g - (sum_g + xhat * sum_gx) / m);
                }
    }
    return grads;
}

SoftmaxXentResult softmax_cross_entropy(const Tensor4& logits, std::span<const int> labels) {
    const Dims4& d = logits.dims();
    require(d.h == 1 && d.w == 1, "softmax_cross_entropy: logits must be [N,K,1,1]");
    require(labels.size() == d.n, "softmax_cross_entropy: one label per sample required");
    if (d.n == 0) throw ShapeError("softmax_cross_entropy: empty batch");

    SoftmaxXentResult res;
    res.grad_logits = Tensor4(d);
    const double inv_n = 1.0 / static_cast<double>(d.n);
    double loss = 0.0;
    for (std::size_t n = 0; n < d.n; ++n) {
        const int label = labels[n];
        if (label < 0 || static_cast<std::size_t>(label) >= d.c)
            throw ShapeError("softmax_cross_entropy: label out of range");
        double zmax = logits.at(n, 0, 0, 0);
        for (std::size_t k = 1; k < d.c; ++k) zmax = std::max(zmax, logits.at(n, k, 0, 0));
        double denom = 0.0;
        for (std::size_t k = 0; k < d.c; ++k) denom += std::exp(logits.at(n, k, 0, 0) - zmax);
        loss += (std::log(denom) - (logits.at(n, static_cast<std::size_t>(label), 0, 0) - zmax)) *
                inv_n;
        for (std::size_t k = 0; k < d.c; ++k) {
            const double p = std::exp(logits.at(n, k, 0, 0) - zmax) / denom;
            res.grad_logits.at(n, k, 0, 0) =
                (p - (static_cast<std::size_t>(label) == k ? 1.0 : 0.0)) * inv_n;
        }
    }
    res.loss = loss;
    return res;
}

}  // namespace cbc
