#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "malfuse/models/early_modules.hpp"
#include "malfuse/models/meta_model.hpp"
#include "malfuse/models/modality.hpp"

namespace mf::models {

/// Concatenated representations for one module subset, in canonical order.
struct FusionVector {
    nn::Tensor2D values;  // B x 128*|subset|
    ModalitySet subset;
};

/// Concatenates per-module representations (each B x 128) for `subset`.
/// reps is indexed by Modality; entries outside the subset are ignored.
FusionVector early_fusion(const std::array<const nn::Tensor2D*, 3>& reps, ModalitySet subset);

/// psi(phi(x)); the fusion subset must match the subset psi was trained on.
std::vector<double> meta_predict(MetaModel& psi, const FusionVector& fusion);

/// Encoded inputs of one modality for a batch. Rows align with the batch;
/// rows whose `present` flag is 0 are ignored.
struct ModalityInput {
    nn::Tensor2D x;
    std::vector<std::uint8_t> present;
};

struct FusionBatch {
    std::size_t rows = 0;
    std::array<std::optional<ModalityInput>, 3> inputs;  // indexed by Modality

    ModalitySet available(std::size_t row) const;
    void validate() const;
};

struct PipelinePrediction {
    std::vector<double> score;                        // fused probability (0 when nothing routable)
    std::vector<ModalitySet> routed;                  // meta-model used per row
    std::array<std::vector<double>, 3> module_score;  // standalone head scores, NaN when absent
};

/// Frozen early-fusion modules plus one meta-model per module subset.
/// Rows missing a modality are routed to the meta-model of the subset that
/// is still available.
class FusionPipeline {
public:
    static constexpr double kDefaultThreshold = 0.98;

    void set_module(std::unique_ptr<EarlyModule> module);
    EarlyModule* module(Modality m) const { return modules_[static_cast<std::size_t>(m)].get(); }
    ModalitySet loaded_modules() const;

    /// Throws ConfigurationError if psi was built for another subset.
    void set_meta(ModalitySet subset, std::unique_ptr<MetaModel> psi);
    MetaModel* meta(ModalitySet subset) const;
    std::vector<ModalitySet> meta_subsets() const;

    /// Eval-mode representations of every loaded module; rows without the
    /// modality are left zero.
    std::array<nn::Tensor2D, 3> representations(const FusionBatch& batch) const;

    /// Fusion vectors of the given subset for every row. Each row must have
    /// every modality of the subset.
    FusionVector early_fusion(const FusionBatch& batch, ModalitySet subset) const;

    /// Scores every row with the meta-model of (requested ∩ available).
    PipelinePrediction predict(const FusionBatch& batch, ModalitySet requested = ModalitySet::all()) const;

    /// Routing step of predict() over precomputed representations.
    std::vector<double> route(const std::array<nn::Tensor2D, 3>& reps, const std::vector<ModalitySet>& available,
                              ModalitySet requested, std::vector<ModalitySet>* routed = nullptr) const;

    double threshold = kDefaultThreshold;
    /// Featurizer config hash per module tag ("fp", "api", "emb").
    std::map<std::string, std::string> featurizer_hashes;

    /// Directory layout: pipeline.json + one checkpoint per module and per meta-model.
    void save(const std::filesystem::path& dir) const;
    /// expected_hashes (when non-empty) must match the stored featurizer hashes.
    static FusionPipeline load(const std::filesystem::path& dir,
                               const std::map<std::string, std::string>& expected_hashes = {});

private:
    std::array<std::unique_ptr<EarlyModule>, 3> modules_;
    std::map<std::uint8_t, std::unique_ptr<MetaModel>> metas_;
};

/// The fixed concatenation order as stored in manifests.
nlohmann::json order_manifest();
void check_order(const nlohmann::json& order);

}  // namespace mf::models
