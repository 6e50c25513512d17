#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cbc/tensor.hpp"

namespace cbc {

struct Sample {
    std::uint16_t label = 0;
    std::vector<std::uint8_t> pixels;  // channels * height * width, row-major
};

/// Labeled u8 image set. Stored exactly as the CBC1 container encodes it so a
/// write -> read round trip preserves every byte; consumers get [0,1] f64
/// pixels through image_of / batch_images.
struct Dataset {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t num_classes = 0;
    std::vector<Sample> samples;

    std::size_t pixel_count() const { return channels * height * width; }
};

/// Throws StateError when labels or pixel buffers disagree with the header
/// fields or exceed what the container can encode.
void validate_dataset(const Dataset& ds);

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);

/// Decodes a CBC1 byte buffer. All malformed inputs raise DataFormatError with
/// a category (bad_magic, bad_version, bad_header, truncated, trailing_data,
/// bad_label); no partial datasets are returned.
Dataset parse_dataset(std::span<const std::uint8_t> bytes);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset_file(const std::string& path);

/// One sample as f64 pixels in [0,1] (255 -> 1.0).
std::vector<double> image_of(const Dataset& ds, std::size_t index);

/// Gathers the given samples into an input batch, rescaled to [0,1].
Tensor4 batch_images(const Dataset& ds, std::span<const std::size_t> indices);
std::vector<int> batch_labels(const Dataset& ds, std::span<const std::size_t> indices);

// ------------------------------------------------------------------ gratings

struct GratingClass {
    double orientation_deg = 0.0;
    double frequency = 0.0;  // radians per pixel
};

/// Evenly spaced orientations over [0, 180) at a fixed frequency of pi/2.
std::vector<GratingClass> default_grating_classes(std::size_t count);

/// Single-channel sinusoidal gratings:
///   value(x, y) = 0.5 + 0.5*cos(w*(x*cos(theta) + y*sin(theta)) + phase) + N(0, sigma)
/// with x the column and y the row index, a fresh uniform phase per sample,
/// clipped to [0,1] and quantized to u8. Classes whose (orientation mod 180,
/// frequency) coincide, or whose frequency is ~0, are rejected as degenerate.
Dataset generate_gratings(std::size_t n_per_class, const std::vector<GratingClass>& classes,
                          std::size_t size, double noise_sigma, std::uint64_t seed);

// -------------------------------------------------------------- augmentation

struct AugmentSpec {
    double hflip_prob = 0.0;
    double rotation_min_deg = 0.0;
    double rotation_max_deg = 0.0;
    // (crop size, zero padding applied before cropping)
    std::optional<std::pair<std::size_t, std::size_t>> crop;

    bool enabled() const {
        return hflip_prob > 0.0 || rotation_min_deg != 0.0 || rotation_max_deg != 0.0 ||
               crop.has_value();
    }
};

void validate_augment_spec(const AugmentSpec& spec);

struct ImageF64 {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;
};

ImageF64 hflip(const ImageF64& img);

/// Rotation about the image center with bilinear resampling and zero fill;
/// an angle of exactly 0 is the identity.
ImageF64 rotate_bilinear(const ImageF64& img, double degrees);

/// Zero-pads by `padding` on every side, then takes the size x size window at
/// (offset_y, offset_x). Throws ShapeError when the window does not fit.
ImageF64 pad_crop(const ImageF64& img, std::size_t size, std::size_t padding,
                  std::size_t offset_y, std::size_t offset_x);

/// Applies the spec with rng draws in fixed order: flip decision (when
/// hflip_prob > 0), rotation angle (when the range is non-trivial), then crop
/// offsets. The label never changes.
Sample augment(const Sample& sample, std::size_t channels, std::size_t height, std::size_t width,
               const AugmentSpec& spec, std::mt19937_64& rng);

}  // namespace cbc
