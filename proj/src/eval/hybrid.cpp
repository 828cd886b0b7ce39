#include "malfuse/eval/hybrid.hpp"

#include "malfuse/errors.hpp"

namespace mf::eval {

using models::Modality;

TrainPlan HybridConfig::default_module_plan() {
    TrainPlan p;
    p.epochs = 12;
    p.batch_size = 64;
    p.patience = 4;
    p.selection = Selection::valid_loss;
    return p;
}

TrainPlan HybridConfig::default_meta_plan() {
    TrainPlan p;
    p.epochs = 40;
    p.batch_size = 64;
    p.patience = 10;
    p.selection = Selection::valid_loss;
    return p;
}

nlohmann::json HybridConfig::to_json() const {
    return {{"seed", seed},
            {"modules", modules.signature()},
            {"module_plan", module_plan.to_json()},
            {"meta_plan", meta_plan.to_json()},
            {"meta", meta.to_json()}};
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    // splitmix64 finalizer over the pair
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

HybridResult train_hybrid(const SplitData& train, const SplitData& valid, const HybridConfig& config) {
    if (config.modules.empty()) throw ConfigurationError("train: module subset is empty");
    HybridResult out;
    for (Modality m : config.modules.members()) {
        const auto k = static_cast<std::uint64_t>(m);
        auto module = models::make_module(m, derive_seed(config.seed, 10 + k));
        TrainPlan plan = config.module_plan;
        plan.seed = derive_seed(config.seed, 20 + k);
        plan.module_id = std::string(to_string(m));
        out.module_history[plan.module_id] = pretrain_module(*module, train, valid, plan);
        out.pipeline.set_module(std::move(module));
    }
    const RepresentationSet rtr = represent(out.pipeline, train);
    const RepresentationSet rva = represent(out.pipeline, valid);
    TrainPlan meta_plan = config.meta_plan;
    meta_plan.seed = derive_seed(config.seed, 30);
    out.meta_history = fit_meta_models(out.pipeline, rtr, rva, config.meta, meta_plan);
    return out;
}

}  // namespace mf::eval
