#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "cbc/hybrid.hpp"
#include "cbc/ops.hpp"

namespace cbc {

/// Execution node of a built model. Forward caches whatever its backward
/// needs; backward before forward is a state error.
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor4 forward(const Tensor4& input, bool training) = 0;
    virtual Tensor4 backward(const Tensor4& grad_out) = 0;
    virtual void collect_params(std::vector<ParamSlice>&) {}
    virtual const char* kind() const = 0;

    /// Learnable + running state for checkpoints; null when stateless.
    virtual nlohmann::json state_json() const { return nullptr; }
    virtual void load_state(const nlohmann::json&) {}
};

class HybridConvNode final : public Layer {
public:
    explicit HybridConvNode(HybridCbcLayer layer) : layer_(std::move(layer)) {}

    Tensor4 forward(const Tensor4& input, bool) override { return layer_.forward(input); }
    Tensor4 backward(const Tensor4& grad_out) override { return layer_.backward(grad_out); }
    void collect_params(std::vector<ParamSlice>& out) override { layer_.collect_params(out); }
    const char* kind() const override { return "hybrid_conv"; }
    nlohmann::json state_json() const override;
    void load_state(const nlohmann::json& j) override;

    HybridCbcLayer& layer() { return layer_; }
    const HybridCbcLayer& layer() const { return layer_; }

private:
    HybridCbcLayer layer_;
};

class ReluNode final : public Layer {
public:
    Tensor4 forward(const Tensor4& input, bool) override;
    Tensor4 backward(const Tensor4& grad_out) override;
    const char* kind() const override { return "relu"; }

private:
    Tensor4 cached_input_;
    bool has_cache_ = false;
};

class MaxPoolNode final : public Layer {
public:
    Tensor4 forward(const Tensor4& input, bool) override;
    Tensor4 backward(const Tensor4& grad_out) override;
    const char* kind() const override { return "maxpool"; }

private:
    Dims4 input_dims_{};
    std::vector<std::size_t> argmax_;
    bool has_cache_ = false;
};

class GlobalAvgPoolNode final : public Layer {
public:
    Tensor4 forward(const Tensor4& input, bool) override;
    Tensor4 backward(const Tensor4& grad_out) override;
    const char* kind() const override { return "global_avg_pool"; }

private:
    Dims4 input_dims_{};
    bool has_cache_ = false;
};

class BatchNormNode final : public Layer {
public:
    explicit BatchNormNode(std::size_t channels, double eps = 1e-5, double momentum = 0.1);

    Tensor4 forward(const Tensor4& input, bool training) override;
    Tensor4 backward(const Tensor4& grad_out) override;
    void collect_params(std::vector<ParamSlice>& out) override;
    const char* kind() const override { return "batchnorm"; }
    nlohmann::json state_json() const override;
    void load_state(const nlohmann::json& j) override;

    std::size_t channels() const { return gamma_.size(); }

private:
    double eps_, momentum_;
    std::vector<double> gamma_, beta_, gamma_grad_, beta_grad_;
    std::vector<double> running_mean_, running_var_;
    Tensor4 cached_input_;
    BatchNormCache cache_;
    bool has_cache_ = false;
};

class DenseNode final : public Layer {
public:
    DenseNode(std::size_t in_features, std::size_t units, std::uint64_t seed);

    Tensor4 forward(const Tensor4& input, bool) override;
    Tensor4 backward(const Tensor4& grad_out) override;
    void collect_params(std::vector<ParamSlice>& out) override;
    const char* kind() const override { return "dense"; }
    nlohmann::json state_json() const override;
    void load_state(const nlohmann::json& j) override;

    std::size_t units() const { return weights_.dims().n; }
    std::size_t in_features() const { return weights_.dims().c; }
    std::size_t weight_count() const { return weights_.size(); }

private:
    Tensor4 weights_, weight_grads_;  // [units, K, 1, 1]
    std::vector<double> bias_, bias_grads_;
    Tensor4 cached_input_;
    bool has_cache_ = false;
};

/// Bottleneck block: 1x1 reduce, 3x3, 1x1 expand, each with batch norm, plus
/// an identity or projected shortcut added before the closing relu.
class ResidualBlockNode final : public Layer {
public:
    ResidualBlockNode(std::vector<std::unique_ptr<Layer>> main_path,
                      std::vector<std::unique_ptr<Layer>> shortcut);

    Tensor4 forward(const Tensor4& input, bool training) override;
    Tensor4 backward(const Tensor4& grad_out) override;
    void collect_params(std::vector<ParamSlice>& out) override;
    const char* kind() const override { return "residual_block"; }
    nlohmann::json state_json() const override;
    void load_state(const nlohmann::json& j) override;

private:
    std::vector<std::unique_ptr<Layer>> main_path_, shortcut_;
    Tensor4 cached_sum_;
    bool has_cache_ = false;
};

}  // namespace cbc
