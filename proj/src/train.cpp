#include "cbc/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "cbc/errors.hpp"
#include "cbc/util.hpp"

namespace cbc {
namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566;  // distinct rng lanes
constexpr std::uint64_t kAugmentStream = 0x61756774;

void check_model_input(const Dataset& ds, const ModelConfig& config, const char* what) {
    if (ds.samples.empty()) throw StateError(std::string(what) + " set is empty");
    if (ds.num_classes != config.num_classes)
        throw ConfigError(std::string(what) + " set has " + std::to_string(ds.num_classes) +
                          " classes, model expects " + std::to_string(config.num_classes));
    if (ds.channels != config.input_channels)
        throw ConfigError(std::string(what) + " set channel count does not match the model input");
}

Tensor4 augmented_batch(const Dataset& ds, std::span<const std::size_t> indices,
                        const AugmentSpec& spec, std::uint64_t seed, std::size_t epoch) {
    const std::size_t out_h = spec.crop ? spec.crop->first : ds.height;
    const std::size_t out_w = spec.crop ? spec.crop->first : ds.width;
    Tensor4 batch(indices.size(), ds.channels, out_h, out_w);
    auto values = batch.values();
    const std::size_t pixels = ds.channels * out_h * out_w;
    for (std::size_t n = 0; n < indices.size(); ++n) {
        std::mt19937_64 rng(mix64(mix64(seed, kAugmentStream, epoch), indices[n]));
        const Sample out =
            augment(ds.samples[indices[n]], ds.channels, ds.height, ds.width, spec, rng);
        for (std::size_t i = 0; i < pixels; ++i) values[n * pixels + i] = out.pixels[i] / 255.0;
    }
    return batch;
}

}  // namespace

nlohmann::json report_json(const TrainReport& report) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config_name"] = report.config_name;
    j["config_hash"] = report.config_hash;
    j["seed"] = report.seed;
    j["epochs"] = report.epochs;
    j["batch_size"] = report.batch_size;
    j["thresholds"] = report.thresholds;
    nlohmann::json history = nlohmann::json::array();
    for (std::size_t e = 0; e < report.history.size(); ++e) {
        const EpochStats& s = report.history[e];
        history.push_back({{"epoch", e + 1},
                           {"train_loss", s.train_loss},
                           {"val_loss", s.val_loss},
                           {"val_accuracy", s.val_accuracy}});
    }
    j["history"] = std::move(history);
    if (report.best_acc) j["best_acc"] = *report.best_acc;
    nlohmann::json exceeds = nlohmann::json::object();
    for (const auto& [threshold, epoch] : report.epoch_exceeds)
        exceeds[nlohmann::json(threshold).dump()] = epoch;
    j["epoch_exceeds"] = std::move(exceeds);
    j["conv_param_count"] = report.conv_param_count;
    j["baseline"] = report.baseline_name;
    j["baseline_conv_param_count"] = report.baseline_conv_param_count;
    j["compression_factor"] = report.compression_factor;
    j["train_samples"] = report.train_samples;
    j["val_samples"] = report.val_samples;
    if (report.timing) j["wall_time_seconds"] = report.wall_time_seconds;
    return j;
}

std::string report_filename(const TrainReport& report) {
    return "report_" + report.config_hash + "_s" + std::to_string(report.seed) + ".json";
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double val_fraction) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw ConfigError("split: val_fraction must lie in (0, 1)");
    const std::size_t stride =
        std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(1.0 / val_fraction)));
    Dataset train = ds;
    Dataset val = ds;
    train.samples.clear();
    val.samples.clear();
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        (i % stride == 0 ? val : train).samples.push_back(ds.samples[i]);
    return {std::move(train), std::move(val)};
}

EvalResult evaluate(Model& model, const Dataset& ds, std::size_t batch_size) {
    check_model_input(ds, model.config(), "evaluation");
    if (batch_size == 0) throw ConfigError("evaluate: batch_size must be positive");

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> indices;
    for (std::size_t start = 0; start < ds.samples.size(); start += batch_size) {
        const std::size_t end = std::min(ds.samples.size(), start + batch_size);
        indices.resize(end - start);
        for (std::size_t i = start; i < end; ++i) indices[i - start] = i;
        const Tensor4 logits = model.forward(batch_images(ds, indices), false);
        const std::vector<int> labels = batch_labels(ds, indices);
        loss_sum += softmax_cross_entropy(logits, labels).loss * static_cast<double>(indices.size());

        const std::size_t classes = logits.dims().c * logits.dims().h * logits.dims().w;
        const auto lv = logits.values();
        for (std::size_t n = 0; n < indices.size(); ++n) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < classes; ++k)
                if (lv[n * classes + k] > lv[n * classes + best]) best = k;
            if (static_cast<int>(best) == labels[n]) ++correct;
        }
    }
    const double n = static_cast<double>(ds.samples.size());
    return {loss_sum / n, static_cast<double>(correct) / n};
}

TrainReport train(Model& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainOptions& options) {
    check_model_input(train_set, model.config(), "training");
    check_model_input(val_set, model.config(), "validation");
    if (options.batch_size < 2)
        throw ConfigError("train: batch_size must be at least 2 (batch statistics)");
    validate_augment_spec(options.augment);
    for (double t : options.thresholds)
        if (!(t >= 0.0 && t < 1.0)) throw ConfigError("train: thresholds must lie in [0, 1)");

    const auto start_time = std::chrono::steady_clock::now();

    TrainReport report;
    report.config_name = model.config().name;
    report.config_hash = model_config_hash(model.config());
    report.seed = options.seed;
    report.epochs = options.epochs;
    report.batch_size = options.batch_size;
    report.thresholds = options.thresholds;
    report.train_samples = train_set.samples.size();
    report.val_samples = val_set.samples.size();
    report.timing = options.timing;

    ModelConfig baseline = model.config();
    apply_variant(baseline, 0.0, baseline.defaults.spatial, baseline.defaults.feature);
    baseline.name = model.config().name + "-alpha0";
    report.baseline_name = baseline.name;
    report.conv_param_count = count_conv_params(model.config());
    report.baseline_conv_param_count = count_conv_params(baseline);
    report.compression_factor =
        static_cast<double>(compression_hundredths(baseline, model.config())) / 100.0;

    AdamState adam(options.adam);
    const std::vector<ParamSlice> params = model.parameters();

    std::vector<std::size_t> order(train_set.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(mix64(options.seed, kShuffleStream, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            if (end - start < 2) continue;  // batch statistics need >= 2 samples
            const std::span<const std::size_t> indices(order.data() + start, end - start);

            Tensor4 batch = options.augment.enabled()
                                ? augmented_batch(train_set, indices, options.augment,
                                                  options.seed, epoch)
                                : batch_images(train_set, indices);
            const std::vector<int> labels = batch_labels(train_set, indices);

            Tensor4 logits = model.forward(batch, true);
            SoftmaxXentResult xent = softmax_cross_entropy(logits, labels);
            if (!std::isfinite(xent.loss))
                throw NumericError("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch));
            loss_sum += xent.loss * static_cast<double>(indices.size());
            seen += indices.size();

            model.backward(xent.grad_logits);
            adam.step(params);
        }
        if (seen == 0)
            throw StateError("train: no batch with at least 2 samples; shrink batch_size");

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(seen);
        const EvalResult val = evaluate(model, val_set, options.batch_size);
        stats.val_loss = val.loss;
        stats.val_accuracy = val.accuracy;
        if (!std::isfinite(stats.val_loss))
            throw NumericError("training diverged: non-finite validation loss at epoch " +
                               std::to_string(epoch));
        report.history.push_back(stats);

        if (!report.best_acc || stats.val_accuracy > *report.best_acc)
            report.best_acc = stats.val_accuracy;
        for (double t : options.thresholds)
            if (stats.val_accuracy > t && !report.epoch_exceeds.count(t))
                report.epoch_exceeds[t] = epoch;
    }

    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    return report;
}

}  // namespace cbc
