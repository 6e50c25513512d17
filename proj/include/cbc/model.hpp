#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbc/layers.hpp"

namespace cbc {

/// Declarative description of one model layer. Optional fields fall back to
/// the config-level defaults when unset.
struct LayerSpec {
    enum class Kind { hybrid_conv, relu, maxpool, global_avg_pool, batchnorm, dense, residual_block };

    Kind kind = Kind::relu;

    // hybrid_conv (and residual_block, which reuses out_channels/stride)
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::optional<double> alpha;
    std::optional<SpatialKind> spatial;
    std::optional<FeatureKind> feature;
    std::optional<bool> bias;

    // dense; 0 means "num_classes"
    std::size_t units = 0;

    // residual_block bottleneck width
    std::size_t mid_channels = 0;
};

const char* layer_kind_name(LayerSpec::Kind kind);
LayerSpec::Kind parse_layer_kind(const std::string& name);

struct ModelDefaults {
    double alpha = 0.0;
    SpatialKind spatial = SpatialKind::product;
    FeatureKind feature = FeatureKind::direct;
    bool conv_bias = true;
};

struct ModelConfig {
    std::string name;
    std::size_t input_channels = 0;
    std::size_t input_height = 0;
    std::size_t input_width = 0;
    std::size_t num_classes = 0;
    ModelDefaults defaults;
    std::vector<LayerSpec> layers;
};

ModelConfig parse_model_config(const nlohmann::json& j);
nlohmann::json model_config_json(const ModelConfig& config);
ModelConfig load_model_config(const std::string& path);

/// FNV-1a hash of the canonical JSON serialization, as fixed-width hex.
std::string model_config_hash(const ModelConfig& config);

/// Force every convolution in the config to the given mix; clears per-layer
/// overrides so the whole architecture uses one variant, which is what the
/// accounting sweeps compare.
void apply_variant(ModelConfig& config, double alpha, SpatialKind spatial, FeatureKind feature);

// ------------------------------------------------------------------ planning

/// One fully resolved convolution: geometry plus the effective hybrid mix.
/// 1x1 kernels are already coerced to the unit spatial basis here, so static
/// accounting and the executable layer always agree.
struct ConvPlan {
    ConvGeometry geom;
    double alpha = 0.0;
    VariantPair variant;
    bool bias = true;
    std::string label;
};

struct PlanEntry {
    LayerSpec::Kind kind;
    std::vector<ConvPlan> convs;            // hybrid_conv: 1; residual_block: 3-4
    std::vector<std::size_t> bn_channels;   // batchnorm: 1; residual_block: one per conv
    std::size_t dense_in = 0;
    std::size_t dense_units = 0;
};

struct ModelPlan {
    std::vector<PlanEntry> entries;
    std::size_t out_channels = 0;
    std::size_t out_height = 0;
    std::size_t out_width = 0;
};

ModelPlan resolve_plan(const ModelConfig& config);

// ----------------------------------------------------------------- accounting

/// Parameters stored by one resolved convolution (CBC packs + standard
/// weights + bias when enabled). Matches HybridCbcLayer::param_count.
long conv_plan_params(const ConvPlan& plan);

struct ParamCountRow {
    std::string label;
    long params = 0;
    bool counts_as_conv = true;
};

struct ParamCountReport {
    std::vector<ParamCountRow> rows;
    long conv_params = 0;   // convolutions plus their batch norms
    long dense_params = 0;
    long total = 0;
};

ParamCountReport count_params(const ModelConfig& config);

/// Convolutional parameter total: every conv's stored parameters plus two per
/// batch-normalized channel. Dense heads are excluded.
long count_conv_params(const ModelConfig& config);

double compression_factor(const ModelConfig& baseline, const ModelConfig& cbc);

/// Factors are quoted truncated (not rounded) to two decimals; the integer
/// hundredths value is computed without going through floating point.
long compression_hundredths(const ModelConfig& baseline, const ModelConfig& cbc);
std::string format_hundredths(long hundredths);  // 199 -> "1.99"

// -------------------------------------------------------------------- runtime

class Model {
public:
    Model(ModelConfig config, std::vector<std::unique_ptr<Layer>> layers);

    Tensor4 forward(const Tensor4& input, bool training);
    Tensor4 backward(const Tensor4& grad_out);

    std::vector<ParamSlice> parameters();
    std::size_t learnable_count();

    const ModelConfig& config() const { return config_; }
    std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }

    nlohmann::json state_json() const;
    void load_state(const nlohmann::json& state);

    void save(const std::string& path) const;
    static Model load(const std::string& path);

private:
    ModelConfig config_;
    std::vector<std::unique_ptr<Layer>> layers_;
};

Model build_model(const ModelConfig& config, std::uint64_t seed);

}  // namespace cbc
