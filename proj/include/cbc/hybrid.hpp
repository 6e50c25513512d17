#pragma once

#include <cstdint>
#include <vector>

#include "cbc/basis.hpp"
#include "cbc/ops.hpp"
#include "cbc/util.hpp"

namespace cbc {

struct VariantPair {
    SpatialKind spatial = SpatialKind::product;
    FeatureKind feature = FeatureKind::direct;
    bool operator==(const VariantPair&) const = default;
};

/// alpha*M rounded half-to-even: how many of a layer's M filters are
/// cosine-based, the rest staying standard weight filters.
std::size_t cbc_filter_split(double alpha, std::size_t out_channels);

/// Convolution layer whose first ceil-part of output filters are synthesized
/// from cosine-basis parameters and the rest are plain weight blocks.
/// Output ordering is CBC filters first, then standard filters; fixed.
/// For 1x1 kernels the spatial basis is forced to unit.
class HybridCbcLayer {
public:
    HybridCbcLayer() = default;

    static HybridCbcLayer init(const ConvGeometry& geom, double alpha, VariantPair variant,
                               std::uint64_t seed, bool has_bias = true);

    /// Full [M,C,H,W] weight bank: synthesized CBC slabs then verbatim
    /// standard slabs.
    Tensor4 materialize() const;

    /// Convolution with the materialized bank; caches input and weights.
    Tensor4 forward(const Tensor4& input);

    /// Gradient of the cached forward. Standard-filter slabs of dL/dW pass
    /// through; CBC slabs are contracted down to basis-parameter gradients.
    /// Returns dL/dinput.
    Tensor4 backward(const Tensor4& grad_out);

    /// Learnable scalars: packed CBC params + standard weights + biases.
    /// Excludes any following batch norm, which the model accounts separately.
    long param_count() const;

    void collect_params(std::vector<ParamSlice>& out);

    const ConvGeometry& geom() const { return geom_; }
    double alpha() const { return alpha_; }
    VariantPair variant() const { return variant_; }
    bool has_bias() const { return has_bias_; }
    std::size_t cbc_filter_count() const { return cbc_count_; }
    std::size_t std_filter_count() const { return std_count_; }
    std::size_t values_per_cbc_filter() const { return per_filter_; }

    std::vector<double>& cbc_values() { return cbc_values_; }
    const std::vector<double>& cbc_values() const { return cbc_values_; }
    std::vector<double>& std_values() { return std_values_; }
    const std::vector<double>& std_values() const { return std_values_; }
    std::vector<double>& bias() { return bias_; }
    const std::vector<double>& bias() const { return bias_; }

    std::span<const double> cbc_grads() const { return cbc_grads_; }
    std::span<const double> std_grads() const { return std_grads_; }
    std::span<const double> bias_grads() const { return bias_grads_; }

    /// Structured view of one CBC filter's parameters.
    CbcFilterParams filter_params(std::size_t index) const;

    void clear_cache();

private:
    ConvGeometry geom_{};
    double alpha_ = 0.0;
    VariantPair variant_{};
    bool has_bias_ = true;
    std::size_t cbc_count_ = 0, std_count_ = 0, per_filter_ = 0;

    std::vector<double> cbc_values_, cbc_grads_;
    std::vector<double> std_values_, std_grads_;  // [m_std, C, H, W] row-major
    std::vector<double> bias_, bias_grads_;

    Tensor4 cached_input_, cached_weights_;
    bool has_cache_ = false;
};

}  // namespace cbc
