#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "malfuse/nn/layers.hpp"

namespace mf::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment estimates over the flattened parameter list, in the order the
/// parameters are passed to adam_step.
struct AdamState {
    explicit AdamState(std::size_t parameter_count, AdamConfig config = {})
        : config(config), m(parameter_count, 0.0), v(parameter_count, 0.0) {}

    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
};

std::size_t parameter_count(std::span<const ParamRef> params);

/// Bias-corrected Adam update of every parameter from its accumulated
/// gradient. Throws NumericError, leaving parameters and state untouched,
/// if any gradient is not finite. Updated values are rounded to float32.
void adam_step(AdamState& state, std::span<const ParamRef> params);

}  // namespace mf::nn
