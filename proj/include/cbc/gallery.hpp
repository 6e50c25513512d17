#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cbc/basis.hpp"

namespace cbc {

/// Parses a filter-parameter file for the given variant pair. Expected shape:
///   {"spatial": {"freq_x":.., "phase_x":.., "freq_y":.., "phase_y":..},
///    "feature": {"amplitude":.., "freq_c":.., "phase_c":..}}
/// direction uses {"freq_x","freq_y","phase"}, the per-channel variant uses
/// {"amplitudes":[..]} (length = channels), and the unit spatial basis takes
/// no "spatial" object at all.
CbcFilterParams filter_params_from_json(const nlohmann::json& j, SpatialKind spatial,
                                        FeatureKind feature, std::size_t channels);

nlohmann::json filter_params_json(const CbcFilterParams& p);

/// Shortest decimal string that round-trips the exact double ('.' separator).
std::string format_double(double value);

/// One row per weight: "channel,row,col,value", CRLF line endings.
void write_filter_csv(const Tensor4& weights, const std::string& path);

/// Binary P5, one image per channel; gray levels are min-max normalized over
/// the whole filter so channels share one scale. A constant filter maps to
/// mid gray.
void write_filter_pgm(const Tensor4& weights, std::size_t channel, const std::string& path);

struct GalleryPaths {
    std::string csv;
    std::vector<std::string> pgms;
};

/// Writes "<prefix>weights.csv" and "<prefix>channel_<c>.pgm" for every input
/// channel, creating directories as needed.
GalleryPaths write_filter_gallery(const Tensor4& weights, const std::string& prefix);

}  // namespace cbc
