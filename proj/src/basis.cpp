#include "cbc/basis.hpp"

#include <cmath>

namespace cbc {

namespace {

template <class... Ts>
struct Overload : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overload(Ts...) -> Overload<Ts...>;

}  // namespace

SpatialKind spatial_kind(const SpatialBasis& s) {
    return std::visit(Overload{[](const SpatialProduct&) { return SpatialKind::product; },
                               [](const SpatialDirection&) { return SpatialKind::direction; },
                               [](const SpatialUnit&) { return SpatialKind::unit; }},
                      s);
}

FeatureKind feature_kind(const FeatureBasis& f) {
    return std::visit(Overload{[](const FeatureDirect&) { return FeatureKind::direct; },
                               [](const FeatureWeight&) { return FeatureKind::weight; }},
                      f);
}

const char* spatial_kind_name(SpatialKind k) {
    switch (k) {
        case SpatialKind::product: return "product";
        case SpatialKind::direction: return "direction";
        case SpatialKind::unit: return "unit";
    }
    return "?";
}

const char* feature_kind_name(FeatureKind k) {
    return k == FeatureKind::direct ? "direct" : "weight";
}

SpatialKind parse_spatial_kind(const std::string& name) {
    if (name == "product") return SpatialKind::product;
    if (name == "direction") return SpatialKind::direction;
    if (name == "unit") return SpatialKind::unit;
    throw ConfigError("unknown spatial basis '" + name + "'");
}

FeatureKind parse_feature_kind(const std::string& name) {
    if (name == "direct") return FeatureKind::direct;
    if (name == "weight") return FeatureKind::weight;
    throw ConfigError("unknown feature basis '" + name + "'");
}

double spatial_eval(const SpatialBasis& s, double x, double y) {
    return std::visit(
        Overload{[&](const SpatialProduct& p) {
                     return std::cos(p.freq_x * x + p.phase_x) * std::cos(p.freq_y * y + p.phase_y);
                 },
                 [&](const SpatialDirection& d) {
                     return std::cos(d.freq_x * x + d.freq_y * y + d.phase);
                 },
                 [](const SpatialUnit&) { return 1.0; }},
        s);
}

double feature_eval(const FeatureBasis& f, std::size_t channel) {
    return std::visit(
        Overload{[&](const FeatureDirect& d) {
                     return d.amplitude * std::cos(d.freq_c * static_cast<double>(channel) + d.phase_c);
                 },
                 [&](const FeatureWeight& w) {
                     if (channel >= w.amplitudes.size())
                         throw ShapeError("feature_eval: channel index out of range");
                     return w.amplitudes[channel];
                 }},
        f);
}

CoordinateGrid CoordinateGrid::make(std::size_t kernel_h, std::size_t kernel_w,
                                    std::size_t channels) {
    CoordinateGrid g;
    g.xs.resize(kernel_w);
    g.ys.resize(kernel_h);
    g.cs.resize(channels);
    const double x0 = -(static_cast<double>(kernel_w) - 1.0) / 2.0;
    const double y0 = -(static_cast<double>(kernel_h) - 1.0) / 2.0;
    for (std::size_t i = 0; i < kernel_w; ++i) g.xs[i] = x0 + static_cast<double>(i);
    for (std::size_t i = 0; i < kernel_h; ++i) g.ys[i] = y0 + static_cast<double>(i);
    for (std::size_t i = 0; i < channels; ++i) g.cs[i] = static_cast<double>(i);
    return g;
}

static void check_feature_length(const CbcFilterParams& p, std::size_t channels) {
    if (const auto* w = std::get_if<FeatureWeight>(&p.feature))
        if (w->amplitudes.size() != channels)
            throw ShapeError("feature amplitude vector length != channel count");
}

void synthesize_weights_into(const CbcFilterParams& p, std::size_t kernel_h,
                             std::size_t kernel_w, std::size_t channels, std::span<double> out) {
    if (kernel_h == 0 || kernel_w == 0 || channels == 0)
        throw ShapeError("synthesize_weights: dims must be >= 1");
    if (out.size() != channels * kernel_h * kernel_w)
        throw ShapeError("synthesize_weights: output slab size mismatch");
    check_feature_length(p, channels);

    const CoordinateGrid grid = CoordinateGrid::make(kernel_h, kernel_w, channels);
    std::vector<double> spatial(kernel_h * kernel_w);
    for (std::size_t y = 0; y < kernel_h; ++y)
        for (std::size_t x = 0; x < kernel_w; ++x)
            spatial[y * kernel_w + x] = spatial_eval(p.spatial, grid.xs[x], grid.ys[y]);

    for (std::size_t c = 0; c < channels; ++c) {
        const double f = feature_eval(p.feature, c);
        double* slab = out.data() + c * kernel_h * kernel_w;
        for (std::size_t i = 0; i < kernel_h * kernel_w; ++i) slab[i] = spatial[i] * f;
    }
}

Tensor4 synthesize_weights(const CbcFilterParams& p, std::size_t kernel_h, std::size_t kernel_w,
                           std::size_t channels) {
    Tensor4 out(1, channels, kernel_h, kernel_w);
    synthesize_weights_into(p, kernel_h, kernel_w, channels, out.values());
    return out;
}

std::size_t param_count(SpatialKind spatial, FeatureKind feature, std::size_t channels) {
    std::size_t n = 0;
    switch (spatial) {
        case SpatialKind::product: n = 4; break;
        case SpatialKind::direction: n = 3; break;
        case SpatialKind::unit: n = 0; break;
    }
    n += feature == FeatureKind::direct ? 3 : channels;
    return n;
}

std::size_t param_count(const CbcFilterParams& p, std::size_t channels) {
    return param_count(spatial_kind(p.spatial), feature_kind(p.feature), channels);
}

void pack_params(const CbcFilterParams& p, std::span<double> out) {
    std::size_t i = 0;
    std::visit(Overload{[&](const SpatialProduct& s) {
                            out[i++] = s.freq_x;
                            out[i++] = s.phase_x;
                            out[i++] = s.freq_y;
                            out[i++] = s.phase_y;
                        },
                        [&](const SpatialDirection& s) {
                            out[i++] = s.freq_x;
                            out[i++] = s.freq_y;
                            out[i++] = s.phase;
                        },
                        [](const SpatialUnit&) {}},
               p.spatial);
    std::visit(Overload{[&](const FeatureDirect& f) {
                            out[i++] = f.amplitude;
                            out[i++] = f.freq_c;
                            out[i++] = f.phase_c;
                        },
                        [&](const FeatureWeight& f) {
                            for (double a : f.amplitudes) out[i++] = a;
                        }},
               p.feature);
    if (i != out.size()) throw ShapeError("pack_params: span size != param count");
}

CbcFilterParams unpack_params(SpatialKind spatial, FeatureKind feature, std::size_t channels,
                              std::span<const double> values) {
    if (values.size() != param_count(spatial, feature, channels))
        throw ShapeError("unpack_params: span size != param count");
    CbcFilterParams p;
    std::size_t i = 0;
    switch (spatial) {
        case SpatialKind::product:
            p.spatial = SpatialProduct{values[i], values[i + 1], values[i + 2], values[i + 3]};
            i += 4;
            break;
        case SpatialKind::direction:
            p.spatial = SpatialDirection{values[i], values[i + 1], values[i + 2]};
            i += 3;
            break;
        case SpatialKind::unit:
            p.spatial = SpatialUnit{};
            break;
    }
    if (feature == FeatureKind::direct) {
        p.feature = FeatureDirect{values[i], values[i + 1], values[i + 2]};
    } else {
        FeatureWeight w;
        w.amplitudes.assign(values.begin() + static_cast<std::ptrdiff_t>(i), values.end());
        p.feature = std::move(w);
    }
    return p;
}

CbcFilterParams grad_params(const CbcFilterParams& p, const Tensor4& grad_weights) {
    const Dims4& gd = grad_weights.dims();
    if (gd.n != 1) throw ShapeError("grad_params: grad_weights must be [1,C,H,W]");
    const std::size_t channels = gd.c, kernel_h = gd.h, kernel_w = gd.w;
    check_feature_length(p, channels);

    const CoordinateGrid grid = CoordinateGrid::make(kernel_h, kernel_w, channels);

    // gradient record starts as a zero of the same shape
    CbcFilterParams g = p;
    std::visit(Overload{[](SpatialProduct& s) { s = {}; }, [](SpatialDirection& s) { s = {}; },
                        [](SpatialUnit&) {}},
               g.spatial);
    std::visit(Overload{[](FeatureDirect& f) { f = {}; },
                        [](FeatureWeight& f) {
                            std::fill(f.amplitudes.begin(), f.amplitudes.end(), 0.0);
                        }},
               g.feature);

    std::visit(
        [&](const auto& sp, const auto& fe) {
            using S = std::decay_t<decltype(sp)>;
            using F = std::decay_t<decltype(fe)>;
            for (std::size_t c = 0; c < channels; ++c) {
                const double cc = grid.cs[c];
                const double fval = feature_eval(p.feature, c);
                double sum_g_s = 0.0;  // sum over (y,x) of upstream * spatial factor
                for (std::size_t y = 0; y < kernel_h; ++y) {
                    const double yy = grid.ys[y];
                    for (std::size_t x = 0; x < kernel_w; ++x) {
                        const double xx = grid.xs[x];
                        const double up = grad_weights.at(0, c, y, x);
                        if constexpr (std::is_same_v<S, SpatialProduct>) {
                            const double ax = sp.freq_x * xx + sp.phase_x;
                            const double ay = sp.freq_y * yy + sp.phase_y;
                            const double cx = std::cos(ax), sx = std::sin(ax);
                            const double cy = std::cos(ay), sy = std::sin(ay);
                            auto& gs = std::get<SpatialProduct>(g.spatial);
                            gs.freq_x += up * fval * (-xx * sx * cy);
                            gs.phase_x += up * fval * (-sx * cy);
                            gs.freq_y += up * fval * (-yy * sy * cx);
                            gs.phase_y += up * fval * (-sy * cx);
                            sum_g_s += up * cx * cy;
                        } else if constexpr (std::is_same_v<S, SpatialDirection>) {
                            const double a = sp.freq_x * xx + sp.freq_y * yy + sp.phase;
                            const double sa = std::sin(a);
                            auto& gs = std::get<SpatialDirection>(g.spatial);
                            gs.freq_x += up * fval * (-xx * sa);
                            gs.freq_y += up * fval * (-yy * sa);
                            gs.phase += up * fval * (-sa);
                            sum_g_s += up * std::cos(a);
                        } else {
                            sum_g_s += up;
                        }
                    }
                }
                if constexpr (std::is_same_v<F, FeatureDirect>) {
                    const double u = fe.freq_c * cc + fe.phase_c;
                    auto& gf = std::get<FeatureDirect>(g.feature);
                    gf.amplitude += sum_g_s * std::cos(u);
                    gf.freq_c += sum_g_s * (-fe.amplitude * cc * std::sin(u));
                    gf.phase_c += sum_g_s * (-fe.amplitude * std::sin(u));
                } else {
                    std::get<FeatureWeight>(g.feature).amplitudes[c] += sum_g_s;
                }
            }
        },
        p.spatial, p.feature);
    return g;
}

}  // namespace cbc
