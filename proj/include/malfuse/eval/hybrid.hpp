#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "malfuse/eval/experiment.hpp"

namespace mf::eval {

/// End-to-end training of the hybrid model from one seed.
struct HybridConfig {
    std::uint64_t seed = 0;
    models::ModalitySet modules = models::ModalitySet::all();
    TrainPlan module_plan = default_module_plan();
    TrainPlan meta_plan = default_meta_plan();
    models::MetaModelConfig meta = models::MetaModelConfig::ffnn_preset();

    /// Small batches with validation-loss selection. On balanced data the
    /// F1 at 0.5 favours an early all-positive epoch.
    static TrainPlan default_module_plan();
    static TrainPlan default_meta_plan();

    nlohmann::json to_json() const;
};

struct HybridResult {
    models::FusionPipeline pipeline;
    std::map<std::string, TrainHistory> module_history;  // keyed by module tag
    std::map<std::string, TrainHistory> meta_history;    // keyed by subset signature
};

/// Seeds derived from config.seed for weight init and for each plan.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt);

/// Pre-trains every requested module on its own rows, freezes them and fits
/// one meta-model per subset.
HybridResult train_hybrid(const SplitData& train, const SplitData& valid, const HybridConfig& config);

}  // namespace mf::eval
