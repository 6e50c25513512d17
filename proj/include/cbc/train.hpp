#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbc/dataset.hpp"
#include "cbc/model.hpp"
#include "cbc/optim.hpp"

namespace cbc {

struct TrainOptions {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::vector<double> thresholds;  // accuracy thresholds for epoch_exceeds
    AugmentSpec augment;             // disabled by default
    AdamConfig adam;
    bool timing = false;             // when set, wall time lands in the report
};

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainReport {
    std::string config_name;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    std::size_t batch_size = 0;
    std::vector<double> thresholds;
    std::vector<EpochStats> history;
    std::optional<double> best_acc;                // absent when epochs == 0
    std::map<double, std::size_t> epoch_exceeds;   // threshold -> first 1-indexed
                                                   // epoch with val_accuracy > t
    long conv_param_count = 0;
    std::string baseline_name;
    long baseline_conv_param_count = 0;
    double compression_factor = 1.0;  // truncated to 2 decimals
    std::size_t train_samples = 0;
    std::size_t val_samples = 0;
    bool timing = false;
    double wall_time_seconds = 0.0;  // serialized only when timing is set
};

nlohmann::json report_json(const TrainReport& report);

/// "report_<config-hash>_s<seed>.json"
std::string report_filename(const TrainReport& report);

/// Deterministic split: every round(1/val_fraction)-th sample goes to the
/// validation set, the rest to training. val_fraction must lie in (0, 1).
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double val_fraction);

/// Inference-mode loss and accuracy (batch norm uses running statistics).
struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};
EvalResult evaluate(Model& model, const Dataset& ds, std::size_t batch_size);

/// Full training loop: per-epoch seeded shuffle, optional augmentation with
/// per-(epoch, sample) rng streams, Adam updates, validation after each epoch.
/// Non-finite losses abort with NumericError. Batches that would hold a single
/// sample are dropped (batch statistics need at least two).
TrainReport train(Model& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainOptions& options);

}  // namespace cbc
