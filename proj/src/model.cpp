#include "cbc/model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cbc/errors.hpp"
#include "cbc/util.hpp"

namespace cbc {
namespace {

constexpr int kSchemaVersion = 1;

[[noreturn]] void config_fail(const std::string& msg) { throw ConfigError(msg); }

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* key : allowed)
            if (it.key() == key) {
                ok = true;
                break;
            }
        if (!ok) config_fail(context + ": unknown key '" + it.key() + "'");
    }
}

std::size_t get_positive(const nlohmann::json& j, const char* key, const std::string& context) {
    if (!j.contains(key)) config_fail(context + ": missing '" + key + "'");
    const auto& v = j.at(key);
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0)
        config_fail(context + ": '" + key + "' must be a positive integer");
    return v.get<std::size_t>();
}

std::size_t get_size_or(const nlohmann::json& j, const char* key, std::size_t fallback,
                        const std::string& context) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) config_fail(context + ": '" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
}

double get_alpha(const nlohmann::json& j, const std::string& context) {
    const auto& v = j.at("alpha");
    if (!v.is_number()) config_fail(context + ": 'alpha' must be a number");
    const double a = v.get<double>();
    if (!(a >= 0.0 && a <= 1.0)) config_fail(context + ": 'alpha' must lie in [0, 1]");
    return a;
}

const char* spatial_code(SpatialKind k) {
    switch (k) {
        case SpatialKind::product: return "S_P";
        case SpatialKind::direction: return "S_D";
        case SpatialKind::unit: return "U";
    }
    return "?";
}

const char* feature_code(FeatureKind k) {
    return k == FeatureKind::direct ? "F_D" : "F_W";
}

std::string conv_label(const char* prefix, const ConvGeometry& g, double alpha, VariantPair v,
                       std::size_t stride) {
    std::ostringstream os;
    os << prefix << ' ' << g.kernel_h << 'x' << g.kernel_w << ' ' << g.in_channels << "->"
       << g.out_channels;
    if (stride != 1) os << " s" << stride;
    os << ' ' << spatial_code(v.spatial) << '/' << feature_code(v.feature) << " a=" << alpha;
    return os.str();
}

ConvPlan make_conv_plan(const char* prefix, std::size_t in_c, std::size_t out_c, std::size_t kernel,
                        std::size_t stride, std::size_t padding, double alpha, SpatialKind spatial,
                        FeatureKind feature, bool bias) {
    ConvPlan plan;
    plan.geom = ConvGeometry{kernel, kernel, in_c, out_c, stride, padding};
    plan.alpha = alpha;
    plan.variant = VariantPair{kernel == 1 ? SpatialKind::unit : spatial, feature};
    plan.bias = bias;
    plan.label = conv_label(prefix, plan.geom, alpha, plan.variant, stride);
    return plan;
}

struct LayerVariant {
    double alpha;
    SpatialKind spatial;
    FeatureKind feature;
    bool bias;
};

LayerVariant effective_variant(const LayerSpec& spec, const ModelDefaults& defaults) {
    return {spec.alpha.value_or(defaults.alpha), spec.spatial.value_or(defaults.spatial),
            spec.feature.value_or(defaults.feature), spec.bias.value_or(defaults.conv_bias)};
}

}  // namespace

const char* layer_kind_name(LayerSpec::Kind kind) {
    switch (kind) {
        case LayerSpec::Kind::hybrid_conv: return "hybrid_conv";
        case LayerSpec::Kind::relu: return "relu";
        case LayerSpec::Kind::maxpool: return "maxpool";
        case LayerSpec::Kind::global_avg_pool: return "global_avg_pool";
        case LayerSpec::Kind::batchnorm: return "batchnorm";
        case LayerSpec::Kind::dense: return "dense";
        case LayerSpec::Kind::residual_block: return "residual_block";
    }
    return "?";
}

LayerSpec::Kind parse_layer_kind(const std::string& name) {
    for (auto kind : {LayerSpec::Kind::hybrid_conv, LayerSpec::Kind::relu, LayerSpec::Kind::maxpool,
                      LayerSpec::Kind::global_avg_pool, LayerSpec::Kind::batchnorm,
                      LayerSpec::Kind::dense, LayerSpec::Kind::residual_block})
        if (name == layer_kind_name(kind)) return kind;
    config_fail("unknown layer kind '" + name + "'");
}

// ----------------------------------------------------------------- JSON parse

ModelConfig parse_model_config(const nlohmann::json& j) {
    if (!j.is_object()) config_fail("model config must be a JSON object");
    check_keys(j, {"schema_version", "name", "input", "num_classes", "defaults", "layers"},
               "model config");
    if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer() ||
        j.at("schema_version").get<int>() != kSchemaVersion)
        config_fail("model config: schema_version must be 1");

    ModelConfig config;
    if (!j.contains("name") || !j.at("name").is_string())
        config_fail("model config: missing string 'name'");
    config.name = j.at("name").get<std::string>();

    if (!j.contains("input") || !j.at("input").is_object())
        config_fail("model config: missing object 'input'");
    const auto& input = j.at("input");
    check_keys(input, {"channels", "height", "width"}, "input");
    config.input_channels = get_positive(input, "channels", "input");
    config.input_height = get_positive(input, "height", "input");
    config.input_width = get_positive(input, "width", "input");
    config.num_classes = get_positive(j, "num_classes", "model config");
    if (config.num_classes < 2) config_fail("model config: num_classes must be at least 2");

    if (j.contains("defaults")) {
        const auto& d = j.at("defaults");
        if (!d.is_object()) config_fail("model config: 'defaults' must be an object");
        check_keys(d, {"alpha", "spatial", "feature", "conv_bias"}, "defaults");
        if (d.contains("alpha")) config.defaults.alpha = get_alpha(d, "defaults");
        if (d.contains("spatial"))
            config.defaults.spatial = parse_spatial_kind(d.at("spatial").get<std::string>());
        if (d.contains("feature"))
            config.defaults.feature = parse_feature_kind(d.at("feature").get<std::string>());
        if (d.contains("conv_bias")) {
            if (!d.at("conv_bias").is_boolean()) config_fail("defaults: 'conv_bias' must be a bool");
            config.defaults.conv_bias = d.at("conv_bias").get<bool>();
        }
    }

    if (!j.contains("layers") || !j.at("layers").is_array() || j.at("layers").empty())
        config_fail("model config: 'layers' must be a non-empty array");

    for (const auto& lj : j.at("layers")) {
        if (!lj.is_object() || !lj.contains("kind") || !lj.at("kind").is_string())
            config_fail("layer entries must be objects with a string 'kind'");
        LayerSpec spec;
        spec.kind = parse_layer_kind(lj.at("kind").get<std::string>());
        const std::string ctx = layer_kind_name(spec.kind);
        switch (spec.kind) {
            case LayerSpec::Kind::hybrid_conv:
                check_keys(lj,
                           {"kind", "out_channels", "kernel", "stride", "padding", "alpha",
                            "spatial", "feature", "bias"},
                           ctx);
                spec.out_channels = get_positive(lj, "out_channels", ctx);
                spec.kernel = get_positive(lj, "kernel", ctx);
                spec.stride = get_size_or(lj, "stride", 1, ctx);
                spec.padding = get_size_or(lj, "padding", 0, ctx);
                if (spec.stride == 0) config_fail(ctx + ": stride must be positive");
                break;
            case LayerSpec::Kind::residual_block:
                check_keys(lj,
                           {"kind", "out_channels", "mid_channels", "stride", "alpha", "spatial",
                            "feature", "bias"},
                           ctx);
                spec.out_channels = get_positive(lj, "out_channels", ctx);
                spec.mid_channels = get_positive(lj, "mid_channels", ctx);
                spec.stride = get_size_or(lj, "stride", 1, ctx);
                if (spec.stride == 0) config_fail(ctx + ": stride must be positive");
                break;
            case LayerSpec::Kind::dense:
                check_keys(lj, {"kind", "units"}, ctx);
                spec.units = get_size_or(lj, "units", 0, ctx);
                break;
            default:
                check_keys(lj, {"kind"}, ctx);
                break;
        }
        if (spec.kind == LayerSpec::Kind::hybrid_conv ||
            spec.kind == LayerSpec::Kind::residual_block) {
            if (lj.contains("alpha")) spec.alpha = get_alpha(lj, ctx);
            if (lj.contains("spatial"))
                spec.spatial = parse_spatial_kind(lj.at("spatial").get<std::string>());
            if (lj.contains("feature"))
                spec.feature = parse_feature_kind(lj.at("feature").get<std::string>());
            if (lj.contains("bias")) {
                if (!lj.at("bias").is_boolean()) config_fail(ctx + ": 'bias' must be a bool");
                spec.bias = lj.at("bias").get<bool>();
            }
        }
        config.layers.push_back(std::move(spec));
    }
    resolve_plan(config);  // surfaces structural errors at parse time
    return config;
}

nlohmann::json model_config_json(const ModelConfig& config) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["name"] = config.name;
    j["input"] = {{"channels", config.input_channels},
                  {"height", config.input_height},
                  {"width", config.input_width}};
    j["num_classes"] = config.num_classes;
    j["defaults"] = {{"alpha", config.defaults.alpha},
                     {"spatial", spatial_kind_name(config.defaults.spatial)},
                     {"feature", feature_kind_name(config.defaults.feature)},
                     {"conv_bias", config.defaults.conv_bias}};
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerSpec& spec : config.layers) {
        nlohmann::json lj;
        lj["kind"] = layer_kind_name(spec.kind);
        if (spec.kind == LayerSpec::Kind::hybrid_conv) {
            lj["out_channels"] = spec.out_channels;
            lj["kernel"] = spec.kernel;
            lj["stride"] = spec.stride;
            lj["padding"] = spec.padding;
        } else if (spec.kind == LayerSpec::Kind::residual_block) {
            lj["out_channels"] = spec.out_channels;
            lj["mid_channels"] = spec.mid_channels;
            lj["stride"] = spec.stride;
        } else if (spec.kind == LayerSpec::Kind::dense && spec.units != 0) {
            lj["units"] = spec.units;
        }
        if (spec.alpha) lj["alpha"] = *spec.alpha;
        if (spec.spatial) lj["spatial"] = spatial_kind_name(*spec.spatial);
        if (spec.feature) lj["feature"] = feature_kind_name(*spec.feature);
        if (spec.bias) lj["bias"] = *spec.bias;
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    return j;
}

ModelConfig load_model_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("model config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_model_config(j);
}

std::string model_config_hash(const ModelConfig& config) {
    const std::string dump = model_config_json(config).dump();
    const std::uint64_t h = fnv1a64(dump);
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

void apply_variant(ModelConfig& config, double alpha, SpatialKind spatial, FeatureKind feature) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) config_fail("alpha must lie in [0, 1]");
    config.defaults.alpha = alpha;
    config.defaults.spatial = spatial;
    config.defaults.feature = feature;
    for (LayerSpec& spec : config.layers) {
        spec.alpha.reset();
        spec.spatial.reset();
        spec.feature.reset();
    }
}

// ------------------------------------------------------------------ planning

ModelPlan resolve_plan(const ModelConfig& config) {
    ModelPlan plan;
    std::size_t c = config.input_channels;
    std::size_t h = config.input_height;
    std::size_t w = config.input_width;
    bool saw_dense = false;

    for (std::size_t li = 0; li < config.layers.size(); ++li) {
        const LayerSpec& spec = config.layers[li];
        const std::string where = "layer " + std::to_string(li) + " (" +
                                  layer_kind_name(spec.kind) + ")";
        if (saw_dense) config_fail(where + ": nothing may follow the dense head");
        PlanEntry entry;
        entry.kind = spec.kind;
        switch (spec.kind) {
            case LayerSpec::Kind::hybrid_conv: {
                const LayerVariant v = effective_variant(spec, config.defaults);
                ConvPlan cp = make_conv_plan("conv", c, spec.out_channels, spec.kernel, spec.stride,
                                             spec.padding, v.alpha, v.spatial, v.feature, v.bias);
                if (h + 2 * spec.padding < spec.kernel || w + 2 * spec.padding < spec.kernel)
                    config_fail(where + ": kernel exceeds padded input");
                h = cp.geom.out_extent(h, cp.geom.kernel_h);
                w = cp.geom.out_extent(w, cp.geom.kernel_w);
                c = spec.out_channels;
                entry.convs.push_back(std::move(cp));
                break;
            }
            case LayerSpec::Kind::residual_block: {
                const LayerVariant v = effective_variant(spec, config.defaults);
                const std::size_t in_c = c;
                entry.convs.push_back(make_conv_plan("res.reduce", in_c, spec.mid_channels, 1, 1, 0,
                                                     v.alpha, v.spatial, v.feature, v.bias));
                entry.convs.push_back(make_conv_plan("res.middle", spec.mid_channels,
                                                     spec.mid_channels, 3, spec.stride, 1, v.alpha,
                                                     v.spatial, v.feature, v.bias));
                entry.convs.push_back(make_conv_plan("res.expand", spec.mid_channels,
                                                     spec.out_channels, 1, 1, 0, v.alpha, v.spatial,
                                                     v.feature, v.bias));
                entry.bn_channels = {spec.mid_channels, spec.mid_channels, spec.out_channels};
                if (h + 2 < 3 || w + 2 < 3) config_fail(where + ": input too small");
                const std::size_t oh = entry.convs[1].geom.out_extent(h, 3);
                const std::size_t ow = entry.convs[1].geom.out_extent(w, 3);
                if (in_c != spec.out_channels || spec.stride != 1) {
                    entry.convs.push_back(make_conv_plan("res.project", in_c, spec.out_channels, 1,
                                                         spec.stride, 0, v.alpha, v.spatial,
                                                         v.feature, v.bias));
                    entry.bn_channels.push_back(spec.out_channels);
                    if (entry.convs.back().geom.out_extent(h, 1) != oh ||
                        entry.convs.back().geom.out_extent(w, 1) != ow)
                        config_fail(where + ": shortcut shape mismatch");
                }
                h = oh;
                w = ow;
                c = spec.out_channels;
                break;
            }
            case LayerSpec::Kind::relu:
                break;
            case LayerSpec::Kind::maxpool:
                if (h % 2 != 0 || w % 2 != 0 || h < 2 || w < 2)
                    config_fail(where + ": 2x2 pooling needs even spatial extent, got " +
                                std::to_string(h) + "x" + std::to_string(w));
                h /= 2;
                w /= 2;
                break;
            case LayerSpec::Kind::global_avg_pool:
                h = 1;
                w = 1;
                break;
            case LayerSpec::Kind::batchnorm:
                entry.bn_channels = {c};
                break;
            case LayerSpec::Kind::dense:
                entry.dense_in = c * h * w;
                entry.dense_units = spec.units == 0 ? config.num_classes : spec.units;
                c = entry.dense_units;
                h = 1;
                w = 1;
                saw_dense = true;
                break;
        }
        plan.entries.push_back(std::move(entry));
    }
    if (!saw_dense) config_fail("model config: the last layer must be a dense head");
    if (c != config.num_classes)
        config_fail("model config: dense head emits " + std::to_string(c) + " units, expected " +
                    std::to_string(config.num_classes) + " classes");
    plan.out_channels = c;
    plan.out_height = h;
    plan.out_width = w;
    return plan;
}

// ---------------------------------------------------------------- accounting

long conv_plan_params(const ConvPlan& plan) {
    const std::size_t m = plan.geom.out_channels;
    const std::size_t m_cbc = cbc_filter_split(plan.alpha, m);
    const std::size_t per_filter =
        param_count(plan.variant.spatial, plan.variant.feature, plan.geom.in_channels);
    long total = static_cast<long>(m_cbc * per_filter);
    total += static_cast<long>((m - m_cbc) * plan.geom.in_channels * plan.geom.kernel_h *
                               plan.geom.kernel_w);
    if (plan.bias) total += static_cast<long>(m);
    return total;
}

ParamCountReport count_params(const ModelConfig& config) {
    ParamCountReport report;
    const ModelPlan plan = resolve_plan(config);
    for (const PlanEntry& entry : plan.entries) {
        for (const ConvPlan& cp : entry.convs)
            report.rows.push_back({cp.label, conv_plan_params(cp), true});
        for (std::size_t channels : entry.bn_channels)
            report.rows.push_back({"batchnorm " + std::to_string(channels),
                                   static_cast<long>(2 * channels), true});
        if (entry.kind == LayerSpec::Kind::dense) {
            const long params = static_cast<long>(entry.dense_in * entry.dense_units +
                                                  entry.dense_units);
            report.rows.push_back({"dense " + std::to_string(entry.dense_in) + "->" +
                                       std::to_string(entry.dense_units),
                                   params, false});
        }
    }
    for (const ParamCountRow& row : report.rows)
        (row.counts_as_conv ? report.conv_params : report.dense_params) += row.params;
    report.total = report.conv_params + report.dense_params;
    return report;
}

long count_conv_params(const ModelConfig& config) { return count_params(config).conv_params; }

double compression_factor(const ModelConfig& baseline, const ModelConfig& cbc) {
    const long base = count_conv_params(baseline);
    const long ours = count_conv_params(cbc);
    if (ours <= 0) throw NumericError("compression factor: degenerate parameter count");
    return static_cast<double>(base) / static_cast<double>(ours);
}

long compression_hundredths(const ModelConfig& baseline, const ModelConfig& cbc) {
    const long base = count_conv_params(baseline);
    const long ours = count_conv_params(cbc);
    if (ours <= 0) throw NumericError("compression factor: degenerate parameter count");
    return (base * 100) / ours;
}

std::string format_hundredths(long hundredths) {
    std::ostringstream os;
    os << hundredths / 100 << '.' << std::setw(2) << std::setfill('0') << hundredths % 100;
    return os.str();
}

// ------------------------------------------------------------------- runtime

Model::Model(ModelConfig config, std::vector<std::unique_ptr<Layer>> layers)
    : config_(std::move(config)), layers_(std::move(layers)) {}

Tensor4 Model::forward(const Tensor4& input, bool training) {
    Tensor4 x = input;
    for (auto& layer : layers_) x = layer->forward(x, training);
    return x;
}

Tensor4 Model::backward(const Tensor4& grad_out) {
    Tensor4 g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
}

std::vector<ParamSlice> Model::parameters() {
    std::vector<ParamSlice> slices;
    for (auto& layer : layers_) layer->collect_params(slices);
    return slices;
}

std::size_t Model::learnable_count() {
    std::size_t total = 0;
    for (const ParamSlice& s : parameters()) total += s.value.size();
    return total;
}

nlohmann::json Model::state_json() const {
    nlohmann::json states = nlohmann::json::array();
    for (const auto& layer : layers_) states.push_back(layer->state_json());
    return nlohmann::json{{"schema_version", kSchemaVersion},
                          {"config", model_config_json(config_)},
                          {"layers", std::move(states)}};
}

void Model::load_state(const nlohmann::json& state) {
    const auto& layers = state.at("layers");
    if (!layers.is_array() || layers.size() != layers_.size())
        config_fail("checkpoint: layer count mismatch");
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->load_state(layers[i]);
}

void Model::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << state_json().dump(2) << '\n';
    if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Model Model::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint '" + path + "' is not valid JSON: " + e.what());
    }
    Model model = build_model(parse_model_config(j.at("config")), 0);
    model.load_state(j);
    return model;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
    const ModelPlan plan = resolve_plan(config);
    std::vector<std::unique_ptr<Layer>> nodes;
    std::uint64_t ordinal = 0;  // one entry per seeded node, stable across builds

    auto make_conv = [&](const ConvPlan& cp) {
        return std::make_unique<HybridConvNode>(HybridCbcLayer::init(
            cp.geom, cp.alpha, cp.variant, mix64(seed, 0x636f6e76, ordinal++), cp.bias));
    };

    for (const PlanEntry& entry : plan.entries) {
        switch (entry.kind) {
            case LayerSpec::Kind::hybrid_conv:
                nodes.push_back(make_conv(entry.convs[0]));
                break;
            case LayerSpec::Kind::relu:
                nodes.push_back(std::make_unique<ReluNode>());
                break;
            case LayerSpec::Kind::maxpool:
                nodes.push_back(std::make_unique<MaxPoolNode>());
                break;
            case LayerSpec::Kind::global_avg_pool:
                nodes.push_back(std::make_unique<GlobalAvgPoolNode>());
                break;
            case LayerSpec::Kind::batchnorm:
                nodes.push_back(std::make_unique<BatchNormNode>(entry.bn_channels[0]));
                break;
            case LayerSpec::Kind::dense:
                nodes.push_back(std::make_unique<DenseNode>(entry.dense_in, entry.dense_units,
                                                            mix64(seed, 0x64656e73, ordinal++)));
                break;
            case LayerSpec::Kind::residual_block: {
                std::vector<std::unique_ptr<Layer>> main_path;
                std::vector<std::unique_ptr<Layer>> shortcut;
                const bool has_projection = entry.convs.size() == 4;
                for (std::size_t i = 0; i < 3; ++i) {
                    main_path.push_back(make_conv(entry.convs[i]));
                    main_path.push_back(std::make_unique<BatchNormNode>(entry.bn_channels[i]));
                    if (i != 2) main_path.push_back(std::make_unique<ReluNode>());
                }
                if (has_projection) {
                    shortcut.push_back(make_conv(entry.convs[3]));
                    shortcut.push_back(std::make_unique<BatchNormNode>(entry.bn_channels[3]));
                }
                nodes.push_back(std::make_unique<ResidualBlockNode>(std::move(main_path),
                                                                    std::move(shortcut)));
                break;
            }
        }
    }
    return Model(config, std::move(nodes));
}

}  // namespace cbc
