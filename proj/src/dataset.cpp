#include "cbc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

#include "cbc/errors.hpp"
#include "cbc/util.hpp"

namespace cbc {
namespace {

constexpr char kMagic[4] = {'C', 'B', 'C', '1'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kHeaderSize = 17;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8)
        out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
}

std::uint16_t get_u16(std::span<const std::uint8_t> bytes, std::size_t at) {
    return static_cast<std::uint16_t>(bytes[at] | (bytes[at + 1] << 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
    return static_cast<std::uint32_t>(bytes[at]) | (static_cast<std::uint32_t>(bytes[at + 1]) << 8) |
           (static_cast<std::uint32_t>(bytes[at + 2]) << 16) |
           (static_cast<std::uint32_t>(bytes[at + 3]) << 24);
}

[[noreturn]] void format_fail(DataFormatError::Kind kind, const std::string& msg) {
    throw DataFormatError(kind, msg);
}

std::uint8_t quantize(double v) {
    const double clipped = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(clipped * 255.0));
}

}  // namespace

void validate_dataset(const Dataset& ds) {
    if (ds.channels == 0 || ds.height == 0 || ds.width == 0)
        throw StateError("dataset: image dimensions must be positive");
    if (ds.num_classes == 0) throw StateError("dataset: num_classes must be positive");
    if (ds.channels > 0xff || ds.height > 0xffff || ds.width > 0xffff || ds.num_classes > 0xffff)
        throw StateError("dataset: dimensions exceed container limits");
    if (ds.samples.size() > 0xffffffffull) throw StateError("dataset: too many samples");
    const std::size_t pixels = ds.pixel_count();
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        if (ds.samples[i].pixels.size() != pixels)
            throw StateError("dataset: sample " + std::to_string(i) + " has wrong pixel count");
        if (ds.samples[i].label >= ds.num_classes)
            throw StateError("dataset: sample " + std::to_string(i) + " label out of range");
    }
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
    validate_dataset(ds);
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + ds.samples.size() * (2 + ds.pixel_count()));
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(ds.samples.size()));
    out.push_back(static_cast<std::uint8_t>(ds.channels));
    put_u16(out, static_cast<std::uint16_t>(ds.height));
    put_u16(out, static_cast<std::uint16_t>(ds.width));
    put_u16(out, static_cast<std::uint16_t>(ds.num_classes));
    for (const Sample& s : ds.samples) {
        put_u16(out, s.label);
        out.insert(out.end(), s.pixels.begin(), s.pixels.end());
    }
    return out;
}

Dataset parse_dataset(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) format_fail(DataFormatError::Kind::truncated, "file shorter than magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        format_fail(DataFormatError::Kind::bad_magic, "magic is not 'CBC1'");
    if (bytes.size() < kHeaderSize)
        format_fail(DataFormatError::Kind::truncated, "header cut short");
    const std::uint16_t version = get_u16(bytes, 4);
    if (version != kVersion)
        format_fail(DataFormatError::Kind::bad_version,
                    "unsupported version " + std::to_string(version));

    Dataset ds;
    const std::uint32_t count = get_u32(bytes, 6);
    ds.channels = bytes[10];
    ds.height = get_u16(bytes, 11);
    ds.width = get_u16(bytes, 13);
    ds.num_classes = get_u16(bytes, 15);
    if (ds.channels == 0 || ds.height == 0 || ds.width == 0 || ds.num_classes == 0)
        format_fail(DataFormatError::Kind::bad_header, "zero dimension in header");

    const std::uint64_t pixels = static_cast<std::uint64_t>(ds.channels) * ds.height * ds.width;
    const std::uint64_t expected = kHeaderSize + static_cast<std::uint64_t>(count) * (2 + pixels);
    if (bytes.size() < expected)
        format_fail(DataFormatError::Kind::truncated,
                    "payload needs " + std::to_string(expected) + " bytes, have " +
                        std::to_string(bytes.size()));
    if (bytes.size() > expected)
        format_fail(DataFormatError::Kind::trailing_data,
                    std::to_string(bytes.size() - expected) + " bytes past the payload");

    ds.samples.resize(count);
    std::size_t at = kHeaderSize;
    for (std::uint32_t i = 0; i < count; ++i) {
        Sample& s = ds.samples[i];
        s.label = get_u16(bytes, at);
        at += 2;
        if (s.label >= ds.num_classes)
            format_fail(DataFormatError::Kind::bad_label,
                        "sample " + std::to_string(i) + " label " + std::to_string(s.label) +
                            " >= num_classes " + std::to_string(ds.num_classes));
        s.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(at),
                        bytes.begin() + static_cast<std::ptrdiff_t>(at + pixels));
        at += pixels;
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    const std::vector<std::uint8_t> bytes = encode_dataset(ds);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing dataset '" + path + "'");
}

Dataset load_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("failed reading dataset '" + path + "'");
    return parse_dataset(bytes);
}

std::vector<double> image_of(const Dataset& ds, std::size_t index) {
    const Sample& s = ds.samples.at(index);
    std::vector<double> out(s.pixels.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.pixels[i] / 255.0;
    return out;
}

Tensor4 batch_images(const Dataset& ds, std::span<const std::size_t> indices) {
    if (indices.empty()) throw ShapeError("batch_images: empty index list");
    Tensor4 batch(indices.size(), ds.channels, ds.height, ds.width);
    auto out = batch.values();
    const std::size_t pixels = ds.pixel_count();
    for (std::size_t n = 0; n < indices.size(); ++n) {
        const Sample& s = ds.samples.at(indices[n]);
        for (std::size_t i = 0; i < pixels; ++i) out[n * pixels + i] = s.pixels[i] / 255.0;
    }
    return batch;
}

std::vector<int> batch_labels(const Dataset& ds, std::span<const std::size_t> indices) {
    std::vector<int> labels(indices.size());
    for (std::size_t n = 0; n < indices.size(); ++n)
        labels[n] = static_cast<int>(ds.samples.at(indices[n]).label);
    return labels;
}

// ------------------------------------------------------------------ gratings

std::vector<GratingClass> default_grating_classes(std::size_t count) {
    std::vector<GratingClass> classes(count);
    for (std::size_t i = 0; i < count; ++i)
        classes[i] = {180.0 * static_cast<double>(i) / static_cast<double>(count),
                      std::numbers::pi / 2.0};
    return classes;
}

Dataset generate_gratings(std::size_t n_per_class, const std::vector<GratingClass>& classes,
                          std::size_t size, double noise_sigma, std::uint64_t seed) {
    if (classes.size() < 2) throw ConfigError("gratings: need at least 2 classes");
    if (n_per_class == 0) throw ConfigError("gratings: n_per_class must be positive");
    if (size == 0) throw ConfigError("gratings: size must be positive");
    if (!(noise_sigma >= 0.0)) throw ConfigError("gratings: noise_sigma must be non-negative");

    // A zero frequency collapses every image of the class to a constant, and
    // orientations 180 degrees apart describe the same grating once the phase
    // is randomized; both make classes indistinguishable.
    auto canonical = [](const GratingClass& g) {
        double deg = std::fmod(g.orientation_deg, 180.0);
        if (deg < 0.0) deg += 180.0;
        return std::pair<double, double>(deg, g.frequency);
    };
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (std::abs(classes[i].frequency) < 1e-9)
            throw ConfigError("gratings: class " + std::to_string(i) +
                              " has (near-)zero frequency; images would be constant");
        for (std::size_t j = i + 1; j < classes.size(); ++j) {
            const auto a = canonical(classes[i]);
            const auto b = canonical(classes[j]);
            const double ddeg = std::abs(a.first - b.first);
            const bool same_angle = std::min(ddeg, 180.0 - ddeg) < 1e-9;
            if (same_angle && std::abs(a.second - b.second) < 1e-9)
                throw ConfigError("gratings: classes " + std::to_string(i) + " and " +
                                  std::to_string(j) + " are degenerate duplicates");
        }
    }

    Dataset ds;
    ds.channels = 1;
    ds.height = size;
    ds.width = size;
    ds.num_classes = classes.size();
    ds.samples.reserve(classes.size() * n_per_class);
    constexpr double kDegToRad = std::numbers::pi / 180.0;

    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
        const double theta = classes[ci].orientation_deg * kDegToRad;
        const double cos_t = std::cos(theta);
        const double sin_t = std::sin(theta);
        const double w = classes[ci].frequency;
        for (std::size_t si = 0; si < n_per_class; ++si) {
            std::mt19937_64 rng(mix64(seed, ci, si));
            std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
            std::normal_distribution<double> noise(0.0, noise_sigma);
            const double phase = phase_dist(rng);
            Sample s;
            s.label = static_cast<std::uint16_t>(ci);
            s.pixels.resize(size * size);
            for (std::size_t y = 0; y < size; ++y)
                for (std::size_t x = 0; x < size; ++x) {
                    double v = 0.5 + 0.5 * std::cos(w * (static_cast<double>(x) * cos_t +
                                                         static_cast<double>(y) * sin_t) +
                                                    phase);
                    if (noise_sigma > 0.0) v += noise(rng);
                    s.pixels[y * size + x] = quantize(v);
                }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

// -------------------------------------------------------------- augmentation

void validate_augment_spec(const AugmentSpec& spec) {
    if (!(spec.hflip_prob >= 0.0 && spec.hflip_prob <= 1.0))
        throw ConfigError("augment: hflip_prob must lie in [0, 1]");
    if (!(spec.rotation_min_deg <= spec.rotation_max_deg))
        throw ConfigError("augment: rotation range is inverted");
    if (spec.rotation_min_deg < 0.0 || spec.rotation_max_deg >= 360.0)
        throw ConfigError("augment: rotation range must lie within [0, 360)");
    if (spec.crop && spec.crop->first == 0) throw ConfigError("augment: crop size must be positive");
}

ImageF64 hflip(const ImageF64& img) {
    ImageF64 out = img;
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x)
                out.pixels[(c * img.height + y) * img.width + x] =
                    img.pixels[(c * img.height + y) * img.width + (img.width - 1 - x)];
    return out;
}

ImageF64 rotate_bilinear(const ImageF64& img, double degrees) {
    if (degrees == 0.0) return img;
    const double rad = degrees * std::numbers::pi / 180.0;
    const double cos_a = std::cos(rad);
    const double sin_a = std::sin(rad);
    const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
    const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;

    ImageF64 out{img.channels, img.height, img.width,
                 std::vector<double>(img.pixels.size(), 0.0)};
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            // Destination pixel pulled from the source grid (inverse rotation).
            const double dy = static_cast<double>(y) - cy;
            const double dx = static_cast<double>(x) - cx;
            const double sy = cy + (sin_a * dx + cos_a * dy);
            const double sx = cx + (cos_a * dx - sin_a * dy);
            const double fy = std::floor(sy);
            const double fx = std::floor(sx);
            const double wy = sy - fy;
            const double wx = sx - fx;
            const long y0 = static_cast<long>(fy);
            const long x0 = static_cast<long>(fx);
            auto tap = [&](long yy, long xx, std::size_t c) -> double {
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(img.height) ||
                    xx >= static_cast<long>(img.width))
                    return 0.0;
                return img.pixels[(c * img.height + static_cast<std::size_t>(yy)) * img.width +
                                  static_cast<std::size_t>(xx)];
            };
            for (std::size_t c = 0; c < img.channels; ++c) {
                const double v = (1.0 - wy) * ((1.0 - wx) * tap(y0, x0, c) + wx * tap(y0, x0 + 1, c)) +
                                 wy * ((1.0 - wx) * tap(y0 + 1, x0, c) + wx * tap(y0 + 1, x0 + 1, c));
                out.pixels[(c * img.height + y) * img.width + x] = v;
            }
        }
    return out;
}

ImageF64 pad_crop(const ImageF64& img, std::size_t size, std::size_t padding, std::size_t offset_y,
                  std::size_t offset_x) {
    const std::size_t padded_h = img.height + 2 * padding;
    const std::size_t padded_w = img.width + 2 * padding;
    if (size > padded_h || size > padded_w)
        throw ShapeError("augment: crop window larger than padded image");
    if (offset_y + size > padded_h || offset_x + size > padded_w)
        throw ShapeError("augment: crop offset out of range");

    ImageF64 out{img.channels, size, size, std::vector<double>(img.channels * size * size, 0.0)};
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                const long sy = static_cast<long>(offset_y + y) - static_cast<long>(padding);
                const long sx = static_cast<long>(offset_x + x) - static_cast<long>(padding);
                double v = 0.0;
                if (sy >= 0 && sx >= 0 && sy < static_cast<long>(img.height) &&
                    sx < static_cast<long>(img.width))
                    v = img.pixels[(c * img.height + static_cast<std::size_t>(sy)) * img.width +
                                   static_cast<std::size_t>(sx)];
                out.pixels[(c * size + y) * size + x] = v;
            }
    return out;
}

Sample augment(const Sample& sample, std::size_t channels, std::size_t height, std::size_t width,
               const AugmentSpec& spec, std::mt19937_64& rng) {
    validate_augment_spec(spec);
    if (sample.pixels.size() != channels * height * width)
        throw ShapeError("augment: sample pixel count mismatch");

    ImageF64 img{channels, height, width, std::vector<double>(sample.pixels.size())};
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = sample.pixels[i] / 255.0;

    if (spec.hflip_prob > 0.0) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (u(rng) < spec.hflip_prob) img = hflip(img);
    }
    if (spec.rotation_max_deg > spec.rotation_min_deg) {
        std::uniform_real_distribution<double> angle(spec.rotation_min_deg, spec.rotation_max_deg);
        img = rotate_bilinear(img, angle(rng));
    } else if (spec.rotation_min_deg != 0.0) {
        img = rotate_bilinear(img, spec.rotation_min_deg);
    }
    if (spec.crop) {
        const auto [size, padding] = *spec.crop;
        const std::size_t padded_h = img.height + 2 * padding;
        const std::size_t padded_w = img.width + 2 * padding;
        if (size > padded_h || size > padded_w)
            throw ShapeError("augment: crop window larger than padded image");
        std::uniform_int_distribution<std::size_t> off_y(0, padded_h - size);
        std::uniform_int_distribution<std::size_t> off_x(0, padded_w - size);
        const std::size_t oy = off_y(rng);
        const std::size_t ox = off_x(rng);
        img = pad_crop(img, size, padding, oy, ox);
    }

    Sample out;
    out.label = sample.label;
    out.pixels.resize(img.pixels.size());
    for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = quantize(img.pixels[i]);
    return out;
}

}  // namespace cbc
