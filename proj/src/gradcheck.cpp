#include "cbc/gradcheck.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

#include "cbc/util.hpp"

namespace cbc {
namespace {

constexpr double kStep = 1e-5;

double sum_product(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

CbcFilterParams random_params(SpatialKind spatial, FeatureKind feature, std::size_t channels,
                              std::mt19937_64& rng) {
    std::uniform_real_distribution<double> freq(0.0, std::numbers::pi);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> amp(-1.0, 1.0);

    CbcFilterParams p;
    switch (spatial) {
        case SpatialKind::product:
            p.spatial = SpatialProduct{freq(rng), phase(rng), freq(rng), phase(rng)};
            break;
        case SpatialKind::direction:
            p.spatial = SpatialDirection{freq(rng), freq(rng), phase(rng)};
            break;
        case SpatialKind::unit:
            p.spatial = SpatialUnit{};
            break;
    }
    if (feature == FeatureKind::direct) {
        p.feature = FeatureDirect{amp(rng), freq(rng), phase(rng)};
    } else {
        FeatureWeight fw;
        fw.amplitudes.resize(channels);
        for (double& a : fw.amplitudes) a = amp(rng);
        p.feature = fw;
    }
    return p;
}

void record(GradCheckStats& stats, double analytic, double finite, double tol) {
    const double err = fd_relative_error(analytic, finite);
    ++stats.checked;
    if (!(err < tol) || !std::isfinite(err)) ++stats.failed;
    if (std::isfinite(err)) stats.max_rel_err = std::max(stats.max_rel_err, err);
}

}  // namespace

void GradCheckStats::merge(const GradCheckStats& other) {
    checked += other.checked;
    failed += other.failed;
    max_rel_err = std::max(max_rel_err, other.max_rel_err);
}

double fd_relative_error(double analytic, double finite) {
    const double denom = std::max({std::abs(analytic), std::abs(finite), 1e-3});
    return std::abs(analytic - finite) / denom;
}

GradCheckStats check_basis_gradients(SpatialKind spatial, FeatureKind feature,
                                     std::size_t channels, std::size_t kernel,
                                     std::size_t instances, std::uint64_t seed, double tol) {
    if (kernel == 1) spatial = SpatialKind::unit;  // same coercion the layer applies
    GradCheckStats stats;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        std::mt19937_64 rng(mix64(seed, 0xba515, inst));
        CbcFilterParams p = random_params(spatial, feature, channels, rng);

        Tensor4 upstream(1, channels, kernel, kernel);
        std::uniform_real_distribution<double> udist(-1.0, 1.0);
        for (double& v : upstream.values()) v = udist(rng);

        const CbcFilterParams analytic = grad_params(p, upstream);
        const std::size_t n = param_count(spatial, feature, channels);
        std::vector<double> packed(n), analytic_packed(n);
        pack_params(p, packed);
        pack_params(analytic, analytic_packed);

        std::vector<double> probe = packed;
        for (std::size_t i = 0; i < n; ++i) {
            probe[i] = packed[i] + kStep;
            const Tensor4 plus =
                synthesize_weights(unpack_params(spatial, feature, channels, probe), kernel,
                                   kernel, channels);
            probe[i] = packed[i] - kStep;
            const Tensor4 minus =
                synthesize_weights(unpack_params(spatial, feature, channels, probe), kernel,
                                   kernel, channels);
            probe[i] = packed[i];
            const double fd = (sum_product(upstream.values(), plus.values()) -
                               sum_product(upstream.values(), minus.values())) /
                              (2.0 * kStep);
            record(stats, analytic_packed[i], fd, tol);
        }
    }
    return stats;
}

GradCheckStats check_layer_gradients(SpatialKind spatial, FeatureKind feature, double alpha,
                                     std::size_t kernel, std::size_t instances,
                                     std::uint64_t seed, double tol) {
    constexpr std::size_t kChannels = 2;
    constexpr std::size_t kFilters = 3;
    constexpr std::size_t kExtent = 6;

    GradCheckStats stats;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        const std::uint64_t inst_seed = mix64(seed, 0x1a9e4, inst);
        ConvGeometry geom{kernel, kernel, kChannels, kFilters, 1, kernel / 2};
        HybridCbcLayer layer = HybridCbcLayer::init(geom, alpha, VariantPair{spatial, feature},
                                                    inst_seed, true);

        std::mt19937_64 rng(mix64(inst_seed, 0xda7a));
        std::uniform_real_distribution<double> udist(-1.0, 1.0);
        Tensor4 input(2, kChannels, kExtent, kExtent);
        for (double& v : input.values()) v = udist(rng);

        const std::size_t out_extent = geom.out_extent(kExtent, kernel);
        Tensor4 upstream(2, kFilters, out_extent, out_extent);
        for (double& v : upstream.values()) v = udist(rng);

        layer.forward(input);
        layer.backward(upstream);

        std::vector<ParamSlice> slices;
        layer.collect_params(slices);
        for (const ParamSlice& slice : slices) {
            for (std::size_t i = 0; i < slice.value.size(); ++i) {
                const double saved = slice.value[i];
                const double analytic = slice.grad[i];
                slice.value[i] = saved + kStep;
                const double plus = sum_product(upstream.values(), layer.forward(input).values());
                slice.value[i] = saved - kStep;
                const double minus = sum_product(upstream.values(), layer.forward(input).values());
                slice.value[i] = saved;
                record(stats, analytic, (plus - minus) / (2.0 * kStep), tol);
            }
        }
    }
    return stats;
}

bool run_gradcheck_suites(std::size_t instances, std::uint64_t seed, std::ostream& out) {
    constexpr double kBasisTol = 1e-6;
    constexpr double kLayerTol = 1e-5;
    bool all_pass = true;

    for (SpatialKind spatial : {SpatialKind::product, SpatialKind::direction, SpatialKind::unit})
        for (FeatureKind feature : {FeatureKind::direct, FeatureKind::weight}) {
            GradCheckStats basis;
            for (std::size_t kernel : {1, 3, 5})
                basis.merge(check_basis_gradients(spatial, feature, 3, kernel, instances,
                                                  mix64(seed, kernel), kBasisTol));
            out << "basis " << spatial_kind_name(spatial) << "/" << feature_kind_name(feature)
                << ": " << basis.checked << " checks, " << basis.failed
                << " failures, max rel err " << basis.max_rel_err << "  "
                << (basis.pass() ? "ok" : "FAIL") << "\n";
            all_pass = all_pass && basis.pass();

            for (double alpha : {0.0, 0.5, 1.0}) {
                GradCheckStats layer;
                for (std::size_t kernel : {1, 3, 5})
                    layer.merge(check_layer_gradients(spatial, feature, alpha, kernel, instances,
                                                      mix64(seed, kernel, 17), kLayerTol));
                out << "layer " << spatial_kind_name(spatial) << "/" << feature_kind_name(feature)
                    << " alpha=" << alpha << ": " << layer.checked << " checks, " << layer.failed
                    << " failures, max rel err " << layer.max_rel_err << "  "
                    << (layer.pass() ? "ok" : "FAIL") << "\n";
                all_pass = all_pass && layer.pass();
            }
        }
    return all_pass;
}

}  // namespace cbc
