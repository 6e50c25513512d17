#include "cbc/hybrid.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace cbc {

std::size_t cbc_filter_split(double alpha, std::size_t out_channels) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
    const double x = alpha * static_cast<double>(out_channels);
    const double fl = std::floor(x);
    const double frac = x - fl;
    std::size_t k = static_cast<std::size_t>(fl);
    if (frac > 0.5)
        ++k;
    else if (frac == 0.5 && (k % 2) == 1)
        ++k;  // ties to even
    return k;
}

HybridCbcLayer HybridCbcLayer::init(const ConvGeometry& geom, double alpha, VariantPair variant,
                                    std::uint64_t seed, bool has_bias) {
    if (geom.kernel_h == 0 || geom.kernel_w == 0 || geom.in_channels == 0 ||
        geom.out_channels == 0 || geom.stride == 0)
        throw ShapeError("hybrid layer: geometry extents must be >= 1");

    HybridCbcLayer layer;
    layer.geom_ = geom;
    layer.alpha_ = alpha;
    layer.variant_ = variant;
    if (geom.kernel_h == 1 && geom.kernel_w == 1)
        layer.variant_.spatial = SpatialKind::unit;  // spatial factor buys nothing at 1x1
    layer.has_bias_ = has_bias;
    layer.cbc_count_ = cbc_filter_split(alpha, geom.out_channels);
    layer.std_count_ = geom.out_channels - layer.cbc_count_;
    layer.per_filter_ =
        cbc::param_count(layer.variant_.spatial, layer.variant_.feature, geom.in_channels);

    const std::size_t fan = geom.in_channels * geom.kernel_h * geom.kernel_w;
    const double amp_bound = std::sqrt(2.0 / static_cast<double>(fan));
    const double std_bound = std::sqrt(
        6.0 / static_cast<double>(fan + geom.out_channels * geom.kernel_h * geom.kernel_w));
    const double pi = std::numbers::pi;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> freq(0.0, pi);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * pi);
    std::uniform_real_distribution<double> amp(-amp_bound, amp_bound);
    std::uniform_real_distribution<double> std_w(-std_bound, std_bound);

    layer.cbc_values_.resize(layer.cbc_count_ * layer.per_filter_);
    double* v = layer.cbc_values_.data();
    for (std::size_t k = 0; k < layer.cbc_count_; ++k) {
        switch (layer.variant_.spatial) {
            case SpatialKind::product:
                *v++ = freq(rng);   // freq_x
                *v++ = phase(rng);  // phase_x
                *v++ = freq(rng);   // freq_y
                *v++ = phase(rng);  // phase_y
                break;
            case SpatialKind::direction:
                *v++ = freq(rng);
                *v++ = freq(rng);
                *v++ = phase(rng);
                break;
            case SpatialKind::unit: break;
        }
        if (layer.variant_.feature == FeatureKind::direct) {
            *v++ = amp(rng);    // amplitude
            *v++ = freq(rng);   // freq_c
            *v++ = phase(rng);  // phase_c
        } else {
            for (std::size_t c = 0; c < geom.in_channels; ++c) *v++ = amp(rng);
        }
    }

    layer.std_values_.resize(layer.std_count_ * fan);
    for (double& w : layer.std_values_) w = std_w(rng);

    layer.bias_.assign(geom.out_channels, 0.0);
    layer.cbc_grads_.assign(layer.cbc_values_.size(), 0.0);
    layer.std_grads_.assign(layer.std_values_.size(), 0.0);
    layer.bias_grads_.assign(layer.bias_.size(), 0.0);
    return layer;
}

CbcFilterParams HybridCbcLayer::filter_params(std::size_t index) const {
    if (index >= cbc_count_) throw ShapeError("filter_params: index out of range");
    return unpack_params(variant_.spatial, variant_.feature, geom_.in_channels,
                         std::span<const double>(cbc_values_.data() + index * per_filter_,
                                                 per_filter_));
}

Tensor4 HybridCbcLayer::materialize() const {
    Tensor4 bank(geom_.out_channels, geom_.in_channels, geom_.kernel_h, geom_.kernel_w);
    const std::size_t slab = geom_.in_channels * geom_.kernel_h * geom_.kernel_w;
    for (std::size_t k = 0; k < cbc_count_; ++k) {
        synthesize_weights_into(filter_params(k), geom_.kernel_h, geom_.kernel_w,
                                geom_.in_channels,
                                std::span<double>(bank.data() + k * slab, slab));
    }
    std::copy(std_values_.begin(), std_values_.end(), bank.data() + cbc_count_ * slab);
    return bank;
}

Tensor4 HybridCbcLayer::forward(const Tensor4& input) {
    cached_weights_ = materialize();
    Tensor4 out = conv2d_forward(input, cached_weights_, bias_, geom_);
    cached_input_ = input;
    has_cache_ = true;
    return out;
}

Tensor4 HybridCbcLayer::backward(const Tensor4& grad_out) {
    if (!has_cache_) throw StateError("hybrid layer backward called before forward");

    ConvWeightGrads wg = conv2d_backward_weights(cached_input_, grad_out, geom_);
    const std::size_t slab = geom_.in_channels * geom_.kernel_h * geom_.kernel_w;

    // CBC slabs contract through the basis chain rule
    Tensor4 slab_grad(1, geom_.in_channels, geom_.kernel_h, geom_.kernel_w);
    for (std::size_t k = 0; k < cbc_count_; ++k) {
        std::copy_n(wg.weights.data() + k * slab, slab, slab_grad.data());
        const CbcFilterParams g = grad_params(filter_params(k), slab_grad);
        pack_params(g, std::span<double>(cbc_grads_.data() + k * per_filter_, per_filter_));
    }
    std::copy_n(wg.weights.data() + cbc_count_ * slab, std_count_ * slab, std_grads_.data());
    // written in place: collected grad spans must stay valid across steps
    std::copy(wg.bias.begin(), wg.bias.end(), bias_grads_.begin());

    return conv2d_backward_input(cached_weights_, grad_out, geom_, cached_input_.dims().h,
                                 cached_input_.dims().w);
}

long HybridCbcLayer::param_count() const {
    return static_cast<long>(cbc_count_ * per_filter_ + std_values_.size() +
                             (has_bias_ ? bias_.size() : 0));
}

void HybridCbcLayer::collect_params(std::vector<ParamSlice>& out) {
    if (!cbc_values_.empty()) out.push_back({cbc_values_, cbc_grads_});
    if (!std_values_.empty()) out.push_back({std_values_, std_grads_});
    if (has_bias_ && !bias_.empty()) out.push_back({bias_, bias_grads_});
}

void HybridCbcLayer::clear_cache() {
    cached_input_ = Tensor4();
    cached_weights_ = Tensor4();
    has_cache_ = false;
}

}  // namespace cbc
