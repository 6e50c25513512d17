#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cbc/tensor.hpp"

namespace cbc {

// A cosine-based filter stores a handful of basis parameters instead of the
// full H*W*C weight block. The spatial factor is sampled on a centered grid,
// the feature factor along the raw channel index, and the filter weights are
// the product of the two.

enum class SpatialKind { product, direction, unit };
enum class FeatureKind { direct, weight };

/// cos(freq_x*x + phase_x) * cos(freq_y*y + phase_y)
struct SpatialProduct {
    double freq_x = 0.0, phase_x = 0.0;
    double freq_y = 0.0, phase_y = 0.0;
    bool operator==(const SpatialProduct&) const = default;
};

/// cos(freq_x*x + freq_y*y + phase) — one oriented harmonic
struct SpatialDirection {
    double freq_x = 0.0, freq_y = 0.0, phase = 0.0;
    bool operator==(const SpatialDirection&) const = default;
};

/// identically 1; the spatial factor of every 1x1 filter
struct SpatialUnit {
    bool operator==(const SpatialUnit&) const = default;
};

using SpatialBasis = std::variant<SpatialProduct, SpatialDirection, SpatialUnit>;

/// amplitude * cos(freq_c*c + phase_c) along the channel index
struct FeatureDirect {
    double amplitude = 0.0, freq_c = 0.0, phase_c = 0.0;
    bool operator==(const FeatureDirect&) const = default;
};

/// one free amplitude per input channel
struct FeatureWeight {
    std::vector<double> amplitudes;
    bool operator==(const FeatureWeight&) const = default;
};

using FeatureBasis = std::variant<FeatureDirect, FeatureWeight>;

struct CbcFilterParams {
    SpatialBasis spatial;
    FeatureBasis feature;
    bool operator==(const CbcFilterParams&) const = default;
};

SpatialKind spatial_kind(const SpatialBasis& s);
FeatureKind feature_kind(const FeatureBasis& f);
const char* spatial_kind_name(SpatialKind k);
const char* feature_kind_name(FeatureKind k);
SpatialKind parse_spatial_kind(const std::string& name);
FeatureKind parse_feature_kind(const std::string& name);

double spatial_eval(const SpatialBasis& s, double x, double y);
double feature_eval(const FeatureBasis& f, std::size_t channel);

/// Sampling grid of the continuous cosine surface. xs/ys are centered
/// (integers for odd extents, half-integers for even ones, mean exactly 0);
/// cs is the raw 0-based channel ramp.
struct CoordinateGrid {
    std::vector<double> xs, ys, cs;
    static CoordinateGrid make(std::size_t kernel_h, std::size_t kernel_w, std::size_t channels);
};

/// Weights of one filter as a [1,C,H,W] tensor:
/// weight[c,y,x] = spatial_eval(xs[x], ys[y]) * feature_eval(c).
Tensor4 synthesize_weights(const CbcFilterParams& p, std::size_t kernel_h, std::size_t kernel_w,
                           std::size_t channels);

/// Same, writing into a caller-provided C*H*W slab.
void synthesize_weights_into(const CbcFilterParams& p, std::size_t kernel_h,
                             std::size_t kernel_w, std::size_t channels, std::span<double> out);

/// Learnable scalars for one filter of the given variant pair (bias excluded;
/// biases are accounted at layer level). Independent of kernel size except
/// through C for the per-channel-amplitude variant.
std::size_t param_count(SpatialKind spatial, FeatureKind feature, std::size_t channels);
std::size_t param_count(const CbcFilterParams& p, std::size_t channels);

// Flat packed layout, spatial scalars first then feature scalars:
//   product:   [freq_x, phase_x, freq_y, phase_y]
//   direction: [freq_x, freq_y, phase]
//   unit:      []
//   direct:    [amplitude, freq_c, phase_c]
//   weight:    [amplitude(0) .. amplitude(C-1)]
// packed size == param_count. The layer, the optimizer and the serializer all
// share this layout.
void pack_params(const CbcFilterParams& p, std::span<double> out);
CbcFilterParams unpack_params(SpatialKind spatial, FeatureKind feature, std::size_t channels,
                              std::span<const double> values);

/// Chain rule through the synthesis: given dL/dW as a [1,C,H,W] tensor (same
/// grid as synthesize_weights), returns dL/dtheta shaped like `p`.
CbcFilterParams grad_params(const CbcFilterParams& p, const Tensor4& grad_weights);

}  // namespace cbc
