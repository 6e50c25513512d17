#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cbc/basis.hpp"
#include "cbc/errors.hpp"
#include "cbc/util.hpp"

using namespace cbc;

namespace {

CbcFilterParams random_params(SpatialKind spatial, FeatureKind feature, std::size_t channels,
                              std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    CbcFilterParams p;
    switch (spatial) {
        case SpatialKind::product:
            p.spatial = SpatialProduct{dist(rng), dist(rng), dist(rng), dist(rng)};
            break;
        case SpatialKind::direction:
            p.spatial = SpatialDirection{dist(rng), dist(rng), dist(rng)};
            break;
        case SpatialKind::unit:
            p.spatial = SpatialUnit{};
            break;
    }
    if (feature == FeatureKind::direct) {
        p.feature = FeatureDirect{dist(rng), dist(rng), dist(rng)};
    } else {
        FeatureWeight w;
        w.amplitudes.resize(channels);
        for (double& a : w.amplitudes) a = dist(rng);
        p.feature = w;
    }
    return p;
}

constexpr SpatialKind kSpatials[] = {SpatialKind::product, SpatialKind::direction,
                                     SpatialKind::unit};
constexpr FeatureKind kFeatures[] = {FeatureKind::direct, FeatureKind::weight};

std::size_t expected_count(SpatialKind s, FeatureKind f, std::size_t c) {
    std::size_t spatial = s == SpatialKind::product ? 4 : (s == SpatialKind::direction ? 3 : 0);
    std::size_t feature = f == FeatureKind::direct ? 3 : c;
    return spatial + feature;
}

}  // namespace

TEST_CASE("parameter count per filter: closed forms over 1000 random shapes") {
    std::mt19937_64 rng(mix64(2024, 0x7ab1e));
    std::uniform_int_distribution<std::size_t> kdist(1, 11);
    std::uniform_int_distribution<std::size_t> cdist(1, 512);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t kh = kdist(rng), kw = kdist(rng), c = cdist(rng);
        CHECK(param_count(SpatialKind::product, FeatureKind::direct, c) == 7);
        CHECK(param_count(SpatialKind::product, FeatureKind::weight, c) == c + 4);
        CHECK(param_count(SpatialKind::direction, FeatureKind::direct, c) == 6);
        CHECK(param_count(SpatialKind::direction, FeatureKind::weight, c) == c + 3);
        CHECK(param_count(SpatialKind::unit, FeatureKind::direct, c) == 3);
        CHECK(param_count(SpatialKind::unit, FeatureKind::weight, c) == c);
        // the count never depends on the kernel extent, only (for per-channel
        // amplitudes) on the channel fan
        for (SpatialKind s : kSpatials)
            for (FeatureKind f : kFeatures) {
                CHECK(param_count(s, f, c) == expected_count(s, f, c));
                CbcFilterParams p = random_params(s, f, c, rng);
                CHECK(param_count(p, c) == expected_count(s, f, c));
                const Tensor4 w = synthesize_weights(p, kh, kw, c);
                CHECK(w.dims() == Dims4{1, c, kh, kw});
            }
    }
}

TEST_CASE("coordinate grid centering") {
    SUBCASE("odd extents sample integers") {
        const CoordinateGrid g = CoordinateGrid::make(5, 3, 2);
        REQUIRE(g.ys.size() == 5);
        REQUIRE(g.xs.size() == 3);
        const double ys[] = {-2.0, -1.0, 0.0, 1.0, 2.0};
        const double xs[] = {-1.0, 0.0, 1.0};
        for (std::size_t i = 0; i < 5; ++i) CHECK(g.ys[i] == ys[i]);
        for (std::size_t i = 0; i < 3; ++i) CHECK(g.xs[i] == xs[i]);
    }
    SUBCASE("even extents sample half-integers") {
        const CoordinateGrid g = CoordinateGrid::make(2, 4, 1);
        const double ys[] = {-0.5, 0.5};
        const double xs[] = {-1.5, -0.5, 0.5, 1.5};
        for (std::size_t i = 0; i < 2; ++i) CHECK(g.ys[i] == ys[i]);
        for (std::size_t i = 0; i < 4; ++i) CHECK(g.xs[i] == xs[i]);
    }
    SUBCASE("grids are exactly symmetric, channels are the raw ramp") {
        for (std::size_t k = 1; k <= 8; ++k) {
            const CoordinateGrid g = CoordinateGrid::make(k, k, 4);
            double sum = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                CHECK(g.xs[i] == -g.xs[k - 1 - i]);
                sum += g.xs[i];
            }
            CHECK(sum == 0.0);
            REQUIRE(g.cs.size() == 4);
            for (std::size_t c = 0; c < 4; ++c) CHECK(g.cs[c] == static_cast<double>(c));
        }
    }
}

TEST_CASE("basis evaluation matches the cosine formulas") {
    const SpatialProduct sp{0.7, 0.1, -1.2, 0.4};
    CHECK(spatial_eval(SpatialBasis{sp}, 1.5, -2.0) ==
          doctest::Approx(std::cos(0.7 * 1.5 + 0.1) * std::cos(-1.2 * -2.0 + 0.4))
              .epsilon(1e-15));

    const SpatialDirection sd{0.3, -0.9, 0.25};
    CHECK(spatial_eval(SpatialBasis{sd}, 2.0, 1.0) ==
          doctest::Approx(std::cos(0.3 * 2.0 + -0.9 * 1.0 + 0.25)).epsilon(1e-15));

    CHECK(spatial_eval(SpatialBasis{SpatialUnit{}}, 123.0, -45.0) == 1.0);

    const FeatureDirect fd{1.4, 0.6, -0.2};
    CHECK(feature_eval(FeatureBasis{fd}, 3) ==
          doctest::Approx(1.4 * std::cos(0.6 * 3.0 - 0.2)).epsilon(1e-15));

    FeatureWeight fw;
    fw.amplitudes = {0.5, -1.5, 2.5};
    CHECK(feature_eval(FeatureBasis{fw}, 0) == 0.5);
    CHECK(feature_eval(FeatureBasis{fw}, 2) == 2.5);
    CHECK_THROWS_AS(feature_eval(FeatureBasis{fw}, 3), ShapeError);
}

TEST_CASE("synthesized weights factor into spatial times feature") {
    std::mt19937_64 rng(mix64(7, 0xfac702));
    for (SpatialKind s : kSpatials)
        for (FeatureKind f : kFeatures) {
            const std::size_t kh = 3, kw = 5, c = 4;
            const CbcFilterParams p = random_params(s, f, c, rng);
            const Tensor4 w = synthesize_weights(p, kh, kw, c);
            const CoordinateGrid g = CoordinateGrid::make(kh, kw, c);
            for (std::size_t ci = 0; ci < c; ++ci)
                for (std::size_t y = 0; y < kh; ++y)
                    for (std::size_t x = 0; x < kw; ++x)
                        CHECK(w.at(0, ci, y, x) ==
                              doctest::Approx(spatial_eval(p.spatial, g.xs[x], g.ys[y]) *
                                              feature_eval(p.feature, ci))
                                  .epsilon(1e-15));
        }
}

TEST_CASE("unit spatial basis reduces the filter to its feature profile") {
    FeatureWeight fw;
    fw.amplitudes = {0.25, -3.0};
    const CbcFilterParams p{SpatialUnit{}, fw};
    const Tensor4 w = synthesize_weights(p, 3, 3, 2);
    for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) {
            CHECK(w.at(0, 0, y, x) == 0.25);
            CHECK(w.at(0, 1, y, x) == -3.0);
        }
}

TEST_CASE("kernel growth keeps the filter core: 3x3 is the central crop of 5x5 and 7x7") {
    std::mt19937_64 rng(mix64(11, 0x9a0e));
    std::uniform_int_distribution<std::size_t> cdist(1, 8);
    int draws = 0;
    for (int i = 0; i < 200; ++i) {
        for (SpatialKind s : kSpatials)
            for (FeatureKind f : kFeatures) {
                const std::size_t c = cdist(rng);
                const CbcFilterParams p = random_params(s, f, c, rng);
                const Tensor4 small = synthesize_weights(p, 3, 3, c);
                for (std::size_t big_k : {std::size_t{5}, std::size_t{7}}) {
                    const Tensor4 big = synthesize_weights(p, big_k, big_k, c);
                    const std::size_t off = (big_k - 3) / 2;
                    for (std::size_t ci = 0; ci < c; ++ci)
                        for (std::size_t y = 0; y < 3; ++y)
                            for (std::size_t x = 0; x < 3; ++x)
                                CHECK(std::abs(small.at(0, ci, y, x) -
                                               big.at(0, ci, y + off, x + off)) < 1e-12);
                }
                ++draws;
            }
    }
    CHECK(draws == 1200);
}

TEST_CASE("packed layout round-trips and follows the documented order") {
    SUBCASE("documented order, product + direct") {
        const CbcFilterParams p{SpatialProduct{1.0, 2.0, 3.0, 4.0}, FeatureDirect{5.0, 6.0, 7.0}};
        std::vector<double> buf(param_count(p, 9));
        pack_params(p, buf);
        const std::vector<double> want{1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0};
        CHECK(buf == want);
    }
    SUBCASE("documented order, direction + weight") {
        FeatureWeight fw;
        fw.amplitudes = {8.0, 9.0};
        const CbcFilterParams p{SpatialDirection{1.5, 2.5, 3.5}, fw};
        std::vector<double> buf(param_count(p, 2));
        pack_params(p, buf);
        const std::vector<double> want{1.5, 2.5, 3.5, 8.0, 9.0};
        CHECK(buf == want);
    }
    SUBCASE("unpack inverts pack for every variant") {
        std::mt19937_64 rng(mix64(3, 0x9ac4));
        for (SpatialKind s : kSpatials)
            for (FeatureKind f : kFeatures)
                for (std::size_t c : {std::size_t{1}, std::size_t{3}, std::size_t{16}}) {
                    const CbcFilterParams p = random_params(s, f, c, rng);
                    std::vector<double> buf(param_count(p, c));
                    pack_params(p, buf);
                    const CbcFilterParams back = unpack_params(s, f, c, buf);
                    CHECK(back == p);
                }
    }
    SUBCASE("size mismatches are rejected") {
        const CbcFilterParams p{SpatialUnit{}, FeatureDirect{1.0, 1.0, 1.0}};
        std::vector<double> small(2);
        CHECK_THROWS_AS(pack_params(p, small), ShapeError);
        CHECK_THROWS_AS(unpack_params(SpatialKind::unit, FeatureKind::direct, 4, small),
                        ShapeError);
    }
}

TEST_CASE("analytic basis gradients match forward-only finite differences") {
    // The oracle perturbs the packed scalars and re-synthesizes; the analytic
    // chain rule under test never runs inside it.
    std::mt19937_64 rng(mix64(17, 0x60ad));
    std::uniform_real_distribution<double> gdist(-1.0, 1.0);
    for (SpatialKind s : kSpatials)
        for (FeatureKind f : kFeatures) {
            const std::size_t kh = 3, kw = 3, c = 5;
            const CbcFilterParams p = random_params(s, f, c, rng);
            Tensor4 upstream(1, c, kh, kw);
            for (double& v : upstream.values()) v = gdist(rng);

            const CbcFilterParams analytic = grad_params(p, upstream);
            std::vector<double> analytic_flat(param_count(p, c));
            pack_params(analytic, analytic_flat);

            std::vector<double> packed(param_count(p, c));
            pack_params(p, packed);
            for (std::size_t i = 0; i < packed.size(); ++i) {
                constexpr double h = 1e-6;
                const double saved = packed[i];
                auto loss_at = [&](double v) {
                    packed[i] = v;
                    const CbcFilterParams q = unpack_params(s, f, c, packed);
                    const Tensor4 w = synthesize_weights(q, kh, kw, c);
                    double acc = 0.0;
                    for (std::size_t j = 0; j < w.size(); ++j)
                        acc += w.values()[j] * upstream.values()[j];
                    return acc;
                };
                const double fd = (loss_at(saved + h) - loss_at(saved - h)) / (2.0 * h);
                packed[i] = saved;
                CHECK(analytic_flat[i] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
            }
        }
}

TEST_CASE("kind names parse and print") {
    CHECK(parse_spatial_kind("product") == SpatialKind::product);
    CHECK(parse_spatial_kind("direction") == SpatialKind::direction);
    CHECK(parse_spatial_kind("unit") == SpatialKind::unit);
    CHECK(parse_feature_kind("direct") == FeatureKind::direct);
    CHECK(parse_feature_kind("weight") == FeatureKind::weight);
    for (SpatialKind s : kSpatials) CHECK(parse_spatial_kind(spatial_kind_name(s)) == s);
    for (FeatureKind f : kFeatures) CHECK(parse_feature_kind(feature_kind_name(f)) == f);
    CHECK_THROWS_AS(parse_spatial_kind("fourier"), ConfigError);
    CHECK_THROWS_AS(parse_feature_kind(""), ConfigError);
}
