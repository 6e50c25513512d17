#include "cbc/gallery.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cbc/errors.hpp"

namespace cbc {
namespace {

double get_field(const nlohmann::json& j, const char* key, const char* ctx) {
    if (!j.contains(key) || !j.at(key).is_number())
        throw ConfigError(std::string("filter params: ") + ctx + " needs numeric '" + key + "'");
    return j.at(key).get<double>();
}

std::ofstream open_out(const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
        if (ec) throw IoError("cannot create directory '" + p.parent_path().string() + "'");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

}  // namespace

CbcFilterParams filter_params_from_json(const nlohmann::json& j, SpatialKind spatial,
                                        FeatureKind feature, std::size_t channels) {
    if (!j.is_object()) throw ConfigError("filter params: expected a JSON object");
    CbcFilterParams p;

    if (spatial == SpatialKind::unit) {
        if (j.contains("spatial") && !j.at("spatial").empty())
            throw ConfigError("filter params: unit spatial basis takes no 'spatial' fields");
        p.spatial = SpatialUnit{};
    } else {
        if (!j.contains("spatial") || !j.at("spatial").is_object())
            throw ConfigError("filter params: missing 'spatial' object");
        const auto& s = j.at("spatial");
        if (spatial == SpatialKind::product)
            p.spatial = SpatialProduct{get_field(s, "freq_x", "spatial"),
                                       get_field(s, "phase_x", "spatial"),
                                       get_field(s, "freq_y", "spatial"),
                                       get_field(s, "phase_y", "spatial")};
        else
            p.spatial = SpatialDirection{get_field(s, "freq_x", "spatial"),
                                         get_field(s, "freq_y", "spatial"),
                                         get_field(s, "phase", "spatial")};
    }

    if (!j.contains("feature") || !j.at("feature").is_object())
        throw ConfigError("filter params: missing 'feature' object");
    const auto& f = j.at("feature");
    if (feature == FeatureKind::direct) {
        p.feature = FeatureDirect{get_field(f, "amplitude", "feature"),
                                  get_field(f, "freq_c", "feature"),
                                  get_field(f, "phase_c", "feature")};
    } else {
        if (!f.contains("amplitudes") || !f.at("amplitudes").is_array())
            throw ConfigError("filter params: feature needs an 'amplitudes' array");
        const auto& arr = f.at("amplitudes");
        if (arr.size() != channels)
            throw ConfigError("filter params: 'amplitudes' must list " +
                              std::to_string(channels) + " values");
        FeatureWeight fw;
        for (const auto& v : arr) {
            if (!v.is_number()) throw ConfigError("filter params: amplitudes must be numeric");
            fw.amplitudes.push_back(v.get<double>());
        }
        p.feature = std::move(fw);
    }
    return p;
}

nlohmann::json filter_params_json(const CbcFilterParams& p) {
    nlohmann::json j = nlohmann::json::object();
    if (const auto* sp = std::get_if<SpatialProduct>(&p.spatial)) {
        j["spatial"] = {{"freq_x", sp->freq_x},
                        {"phase_x", sp->phase_x},
                        {"freq_y", sp->freq_y},
                        {"phase_y", sp->phase_y}};
    } else if (const auto* sd = std::get_if<SpatialDirection>(&p.spatial)) {
        j["spatial"] = {{"freq_x", sd->freq_x}, {"freq_y", sd->freq_y}, {"phase", sd->phase}};
    }
    if (const auto* fd = std::get_if<FeatureDirect>(&p.feature)) {
        j["feature"] = {{"amplitude", fd->amplitude},
                        {"freq_c", fd->freq_c},
                        {"phase_c", fd->phase_c}};
    } else {
        j["feature"] = {{"amplitudes", std::get<FeatureWeight>(p.feature).amplitudes}};
    }
    return j;
}

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

void write_filter_csv(const Tensor4& weights, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "channel,row,col,value\r\n";
    const Dims4 d = weights.dims();
    for (std::size_t c = 0; c < d.c; ++c)
        for (std::size_t y = 0; y < d.h; ++y)
            for (std::size_t x = 0; x < d.w; ++x)
                out << c << ',' << y << ',' << x << ',' << format_double(weights.at(0, c, y, x))
                    << "\r\n";
    if (!out) throw IoError("failed writing '" + path + "'");
}

void write_filter_pgm(const Tensor4& weights, std::size_t channel, const std::string& path) {
    const Dims4 d = weights.dims();
    if (channel >= d.c) throw ShapeError("pgm: channel index out of range");
    const auto v = weights.values();
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it;
    const double hi = *hi_it;

    std::ofstream out = open_out(path);
    out << "P5\n" << d.w << ' ' << d.h << "\n255\n";
    for (std::size_t y = 0; y < d.h; ++y)
        for (std::size_t x = 0; x < d.w; ++x) {
            const double raw = weights.at(0, channel, y, x);
            const double norm = hi > lo ? (raw - lo) / (hi - lo) : 0.5;
            out.put(static_cast<char>(static_cast<unsigned char>(std::lround(norm * 255.0))));
        }
    if (!out) throw IoError("failed writing '" + path + "'");
}

GalleryPaths write_filter_gallery(const Tensor4& weights, const std::string& prefix) {
    GalleryPaths paths;
    paths.csv = prefix + "weights.csv";
    write_filter_csv(weights, paths.csv);
    for (std::size_t c = 0; c < weights.dims().c; ++c) {
        paths.pgms.push_back(prefix + "channel_" + std::to_string(c) + ".pgm");
        write_filter_pgm(weights, c, paths.pgms.back());
    }
    return paths;
}

}  // namespace cbc
