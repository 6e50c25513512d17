#pragma once

#include <span>
#include <vector>

#include "cbc/util.hpp"

namespace cbc {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment storage mirrors the concatenated slice
/// layout exactly; it is sized on the first step and the layout must not
/// change afterwards.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

    void step(std::span<const ParamSlice> slices);

    const AdamConfig& config() const { return cfg_; }
    long step_count() const { return t_; }

private:
    AdamConfig cfg_{};
    long t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace cbc
