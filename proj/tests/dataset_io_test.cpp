#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "cbc/dataset.hpp"
#include "cbc/errors.hpp"
#include "cbc/util.hpp"

using namespace cbc;

namespace {

Dataset random_dataset(std::uint64_t seed, std::size_t samples = 20) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> byte(0, 255);
    Dataset ds;
    ds.channels = 3;
    ds.height = 4;
    ds.width = 5;
    ds.num_classes = 7;
    for (std::size_t i = 0; i < samples; ++i) {
        Sample s;
        s.label = static_cast<std::uint16_t>(i % ds.num_classes);
        s.pixels.resize(ds.pixel_count());
        for (std::uint8_t& p : s.pixels) p = static_cast<std::uint8_t>(byte(rng));
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

DataFormatError::Kind parse_kind(const std::vector<std::uint8_t>& bytes) {
    try {
        parse_dataset(bytes);
    } catch (const DataFormatError& e) {
        return e.kind();
    }
    throw std::logic_error("parse unexpectedly succeeded");
}

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

TEST_CASE("a handcrafted container decodes field by field") {
    // 17-byte header: magic, version 1, count 2, 1x2x2 images, 2 classes
    const std::vector<std::uint8_t> bytes{
        'C', 'B', 'C', '1',       // magic
        0x01, 0x00,               // version, little endian
        0x02, 0x00, 0x00, 0x00,   // sample count
        0x01,                     // channels
        0x02, 0x00,               // height
        0x02, 0x00,               // width
        0x02, 0x00,               // num_classes
        0x00, 0x00, 0, 255, 128, 64,    // sample 0: label 0, pixels
        0x01, 0x00, 10, 20, 30, 40,     // sample 1: label 1, pixels
    };
    const Dataset ds = parse_dataset(bytes);
    CHECK(ds.channels == 1);
    CHECK(ds.height == 2);
    CHECK(ds.width == 2);
    CHECK(ds.num_classes == 2);
    REQUIRE(ds.samples.size() == 2);
    CHECK(ds.samples[0].label == 0);
    CHECK(ds.samples[1].label == 1);
    CHECK(ds.samples[0].pixels == std::vector<std::uint8_t>{0, 255, 128, 64});

    const std::vector<double> img = image_of(ds, 0);
    CHECK(img[0] == 0.0);
    CHECK(img[1] == 1.0);  // 255 maps to exactly one
    CHECK(img[2] == doctest::Approx(128.0 / 255.0));

    CHECK(encode_dataset(ds) == bytes);
}

TEST_CASE("encode and parse round-trip every byte") {
    const Dataset ds = random_dataset(101);
    const std::vector<std::uint8_t> bytes = encode_dataset(ds);
    const Dataset back = parse_dataset(bytes);
    CHECK(back.samples.size() == ds.samples.size());
    CHECK(encode_dataset(back) == bytes);

    const std::string path = "dataset_roundtrip_test.cbc1";
    save_dataset(ds, path);
    const Dataset loaded = load_dataset_file(path);
    std::remove(path.c_str());
    CHECK(encode_dataset(loaded) == bytes);
}

TEST_CASE("each malformed container reports its own failure kind") {
    const std::vector<std::uint8_t> good = encode_dataset(random_dataset(5, 3));
    auto mutated = [&](auto fn) {
        std::vector<std::uint8_t> b = good;
        fn(b);
        return b;
    };

    CHECK(parse_kind({'C', 'B'}) == DataFormatError::Kind::truncated);
    CHECK(parse_kind(mutated([](auto& b) { b[0] = 'X'; })) == DataFormatError::Kind::bad_magic);
    CHECK(parse_kind({'C', 'B', 'C', '1', 0x01, 0x00, 0x02}) ==
          DataFormatError::Kind::truncated);
    CHECK(parse_kind(mutated([](auto& b) { b[4] = 0x02; })) == DataFormatError::Kind::bad_version);
    CHECK(parse_kind(mutated([](auto& b) { b[10] = 0; })) == DataFormatError::Kind::bad_header);
    CHECK(parse_kind(mutated([](auto& b) { b.pop_back(); })) == DataFormatError::Kind::truncated);
    CHECK(parse_kind(mutated([](auto& b) { b.push_back(0); })) ==
          DataFormatError::Kind::trailing_data);
    // first sample's label raised past num_classes (7)
    CHECK(parse_kind(mutated([](auto& b) { b[17] = 9; })) == DataFormatError::Kind::bad_label);

    // the category string mirrors the kind for CLI reporting
    try {
        parse_dataset(mutated([](auto& b) { b[0] = 'X'; }));
        FAIL("expected a throw");
    } catch (const DataFormatError& e) {
        CHECK(e.category() == "bad_magic");
    }
}

TEST_CASE("validate_dataset rejects inconsistent in-memory data") {
    Dataset ds = random_dataset(6, 2);
    ds.samples[1].label = 7;  // == num_classes
    CHECK_THROWS_AS(validate_dataset(ds), StateError);
    ds = random_dataset(6, 2);
    ds.samples[0].pixels.pop_back();
    CHECK_THROWS_AS(validate_dataset(ds), StateError);
    ds = random_dataset(6, 2);
    ds.channels = 300;  // a u8 field cannot carry it
    CHECK_THROWS_AS(validate_dataset(ds), StateError);
}

TEST_CASE("batch gathering rescales to the unit interval") {
    const Dataset ds = random_dataset(7, 4);
    const std::vector<std::size_t> idx{2, 0};
    const Tensor4 batch = batch_images(ds, idx);
    REQUIRE(batch.dims() == Dims4{2, 3, 4, 5});
    CHECK(batch.at(0, 0, 0, 0) == ds.samples[2].pixels[0] / 255.0);
    CHECK(batch.at(1, 0, 0, 1) == ds.samples[0].pixels[1] / 255.0);
    const std::vector<int> labels = batch_labels(ds, idx);
    CHECK(labels == std::vector<int>{static_cast<int>(ds.samples[2].label),
                                     static_cast<int>(ds.samples[0].label)});
    CHECK_THROWS_AS(batch_images(ds, std::vector<std::size_t>{}), ShapeError);
}

TEST_CASE("gratings reproduce the documented cosine field and rng stream") {
    const std::vector<GratingClass> classes = default_grating_classes(4);
    REQUIRE(classes.size() == 4);
    CHECK(classes[0].orientation_deg == 0.0);
    CHECK(classes[1].orientation_deg == 45.0);
    CHECK(classes[3].orientation_deg == 135.0);
    CHECK(classes[0].frequency == doctest::Approx(std::numbers::pi / 2.0));

    const std::size_t size = 8, n = 3;
    const std::uint64_t seed = 99;

    SUBCASE("noise-free pixels match the closed form") {
        const Dataset ds = generate_gratings(n, classes, size, 0.0, seed);
        REQUIRE(ds.samples.size() == classes.size() * n);
        for (std::size_t ci = 0; ci < classes.size(); ++ci)
            for (std::size_t si = 0; si < n; ++si) {
                // the per-sample stream yields the phase as its first draw
                std::mt19937_64 rng(mix64(seed, ci, si));
                std::uniform_real_distribution<double> phase_dist(0.0,
                                                                  2.0 * std::numbers::pi);
                const double phase = phase_dist(rng);
                const double theta = classes[ci].orientation_deg * std::numbers::pi / 180.0;
                const double w = classes[ci].frequency;
                const Sample& s = ds.samples[ci * n + si];
                CHECK(s.label == ci);
                for (std::size_t y = 0; y < size; ++y)
                    for (std::size_t x = 0; x < size; ++x) {
                        const double v =
                            0.5 + 0.5 * std::cos(w * (static_cast<double>(x) * std::cos(theta) +
                                                      static_cast<double>(y) * std::sin(theta)) +
                                                 phase);
                        CHECK(s.pixels[y * size + x] == quantize(v));
                    }
            }
    }

    SUBCASE("noisy pixels replay the same stream, noise drawn row-major") {
        const double sigma = 0.05;
        const Dataset ds = generate_gratings(n, classes, size, sigma, seed);
        const std::size_t ci = 2, si = 1;
        std::mt19937_64 rng(mix64(seed, ci, si));
        std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
        std::normal_distribution<double> noise(0.0, sigma);
        const double phase = phase_dist(rng);
        const double theta = classes[ci].orientation_deg * std::numbers::pi / 180.0;
        const double w = classes[ci].frequency;
        const Sample& s = ds.samples[ci * n + si];
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                const double v =
                    0.5 + 0.5 * std::cos(w * (static_cast<double>(x) * std::cos(theta) +
                                              static_cast<double>(y) * std::sin(theta)) +
                                         phase) +
                    noise(rng);
                CHECK(s.pixels[y * size + x] == quantize(v));
            }
    }

    SUBCASE("orientation 0 varies along columns only; 90 along rows only") {
        const std::vector<GratingClass> axes{{0.0, 1.0}, {90.0, 1.0}};
        const Dataset ds = generate_gratings(1, axes, size, 0.0, 3);
        const Sample& horizontal = ds.samples[0];
        for (std::size_t y = 1; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x)
                CHECK(horizontal.pixels[y * size + x] == horizontal.pixels[x]);
        const Sample& vertical = ds.samples[1];
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 1; x < size; ++x)
                CHECK(vertical.pixels[y * size + x] == vertical.pixels[y * size]);
    }

    SUBCASE("generation is reproducible and seed-sensitive") {
        const auto a = encode_dataset(generate_gratings(n, classes, size, 0.05, 42));
        const auto b = encode_dataset(generate_gratings(n, classes, size, 0.05, 42));
        const auto c = encode_dataset(generate_gratings(n, classes, size, 0.05, 43));
        CHECK(a == b);
        CHECK(a != c);
    }

    SUBCASE("degenerate class sets are rejected") {
        CHECK_THROWS_AS(generate_gratings(1, {{10.0, 1.0}}, size, 0.0, 1), ConfigError);
        CHECK_THROWS_AS(generate_gratings(1, {{10.0, 1.0}, {10.0, 1.0}}, size, 0.0, 1),
                        ConfigError);
        // a grating at theta+180 is the same grating once the phase randomizes
        CHECK_THROWS_AS(generate_gratings(1, {{10.0, 1.0}, {190.0, 1.0}}, size, 0.0, 1),
                        ConfigError);
        CHECK_THROWS_AS(generate_gratings(1, {{0.0, 1.0}, {45.0, 1e-12}}, size, 0.0, 1),
                        ConfigError);
        CHECK_THROWS_AS(generate_gratings(0, {{0.0, 1.0}, {45.0, 1.0}}, size, 0.0, 1),
                        ConfigError);
        // distinct frequencies at one orientation stay apart
        CHECK_NOTHROW(generate_gratings(1, {{10.0, 1.0}, {10.0, 2.0}}, size, 0.0, 1));
    }
}

TEST_CASE("horizontal flip reverses columns and is an involution") {
    ImageF64 img{1, 2, 4, {0, 1, 2, 3, 4, 5, 6, 7}};
    const ImageF64 flipped = hflip(img);
    CHECK(flipped.pixels == std::vector<double>{3, 2, 1, 0, 7, 6, 5, 4});
    CHECK(hflip(flipped).pixels == img.pixels);
}

TEST_CASE("rotation: zero angle is the identity, 90 degrees permutes exactly") {
    ImageF64 img{1, 3, 3, std::vector<double>(9, 0.0)};
    img.pixels[0 * 3 + 1] = 1.0;  // marker at top-center
    CHECK(rotate_bilinear(img, 0.0).pixels == img.pixels);

    // on an odd grid a quarter turn lands on integer taps: no interpolation loss
    const ImageF64 quarter = rotate_bilinear(img, 90.0);
    double total = 0.0;
    for (double v : quarter.pixels) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(quarter.pixels[1 * 3 + 0] == doctest::Approx(1.0).epsilon(1e-12));

    // the center pixel of a constant image survives any angle untouched
    ImageF64 flat{1, 5, 5, std::vector<double>(25, 0.75)};
    const ImageF64 tilted = rotate_bilinear(flat, 30.0);
    CHECK(tilted.pixels[2 * 5 + 2] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("pad-and-crop windows the padded plane with zero fill") {
    ImageF64 img{1, 2, 2, {1, 2, 3, 4}};
    const ImageF64 corner = pad_crop(img, 2, 1, 0, 0);
    CHECK(corner.pixels == std::vector<double>{0, 0, 0, 1});
    const ImageF64 center = pad_crop(img, 2, 1, 1, 1);
    CHECK(center.pixels == std::vector<double>{1, 2, 3, 4});
    CHECK_THROWS_AS(pad_crop(img, 5, 1, 0, 0), ShapeError);
    CHECK_THROWS_AS(pad_crop(img, 2, 1, 3, 0), ShapeError);
}

TEST_CASE("augment applies flip, rotation and crop with documented draws") {
    Sample s;
    s.label = 3;
    s.pixels = {10, 20, 30, 40, 50, 60, 70, 80, 90};

    SUBCASE("identity spec returns the sample unchanged") {
        const AugmentSpec spec{};
        CHECK_FALSE(spec.enabled());
        std::mt19937_64 rng(1);
        const Sample out = augment(s, 1, 3, 3, spec, rng);
        CHECK(out.label == 3);
        CHECK(out.pixels == s.pixels);
    }

    SUBCASE("certain flip equals the direct column reversal") {
        AugmentSpec spec;
        spec.hflip_prob = 1.0;
        std::mt19937_64 rng(2);
        const Sample out = augment(s, 1, 3, 3, spec, rng);
        CHECK(out.label == 3);
        const std::vector<std::uint8_t> want{30, 20, 10, 60, 50, 40, 90, 80, 70};
        CHECK(out.pixels == want);
    }

    SUBCASE("same seed, same result; the label never changes") {
        AugmentSpec spec;
        spec.hflip_prob = 0.5;
        spec.rotation_min_deg = 0.0;
        spec.rotation_max_deg = 15.0;
        spec.crop = {{3, 1}};
        std::mt19937_64 a(77), b(77), c(78);
        const Sample out_a = augment(s, 1, 3, 3, spec, a);
        const Sample out_b = augment(s, 1, 3, 3, spec, b);
        CHECK(out_a.pixels == out_b.pixels);
        CHECK(out_a.label == 3);
        bool any_diff = false;
        for (int i = 0; i < 16 && !any_diff; ++i) {
            const Sample out_c = augment(s, 1, 3, 3, spec, c);
            any_diff = out_c.pixels != out_a.pixels;
        }
        CHECK(any_diff);
    }

    SUBCASE("invalid specs are rejected up front") {
        AugmentSpec bad;
        bad.hflip_prob = 1.5;
        std::mt19937_64 rng(3);
        CHECK_THROWS_AS(augment(s, 1, 3, 3, bad, rng), ConfigError);
        bad.hflip_prob = 0.0;
        bad.rotation_min_deg = 20.0;
        bad.rotation_max_deg = 10.0;
        CHECK_THROWS_AS(augment(s, 1, 3, 3, bad, rng), ConfigError);
        AugmentSpec wrong_size;
        wrong_size.hflip_prob = 1.0;
        CHECK_THROWS_AS(augment(s, 1, 4, 4, wrong_size, rng), ShapeError);
    }
}
