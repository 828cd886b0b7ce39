#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "malfuse/eval/metrics.hpp"
#include "malfuse/eval/training.hpp"
#include "malfuse/models/pipeline.hpp"

namespace mf::eval {

/// One labeled split with its encoded inputs.
struct SplitData {
    std::vector<std::string> ids;
    models::FusionBatch batch;
    std::vector<double> labels;
    std::vector<std::string> families;  // empty or one per row

    std::size_t size() const { return batch.rows; }
    void validate() const;
};

/// Rows of the split that carry modality m.
LabeledData modality_rows(const SplitData& split, models::Modality m);

/// Trains one early-fusion module on the rows that have its modality.
TrainHistory pretrain_module(models::EarlyModule& module, const SplitData& train, const SplitData& valid,
                             const TrainPlan& plan);

/// Frozen-module outputs for one split: representations of every loaded
/// module plus the modalities each row provides.
struct RepresentationSet {
    std::array<nn::Tensor2D, 3> reps;
    std::vector<models::ModalitySet> available;
    std::vector<double> labels;
    std::vector<std::string> families;

    std::size_t size() const { return labels.size(); }
};

RepresentationSet represent(const models::FusionPipeline& pipeline, const SplitData& split);

/// Fusion vectors of the rows that have every modality in subset.
LabeledData fusion_rows(const RepresentationSet& set, models::ModalitySet subset);

/// Fits psi for one subset on fusion vectors. Only representations are
/// consumed, so the early modules stay frozen.
std::unique_ptr<models::MetaModel> train_meta(const RepresentationSet& train, const RepresentationSet& valid,
                                              models::ModalitySet subset, const models::MetaModelConfig& config,
                                              const TrainPlan& plan, TrainHistory* history = nullptr);

/// Trains and installs a meta-model for every subset of the loaded modules
/// that has training rows. Returns histories keyed by subset signature.
std::map<std::string, TrainHistory> fit_meta_models(models::FusionPipeline& pipeline, const RepresentationSet& train,
                                                    const RepresentationSet& valid,
                                                    const models::MetaModelConfig& config, const TrainPlan& plan);

/// Fused scores with routing restricted to `requested`.
std::vector<double> score_set(const models::FusionPipeline& pipeline, const RepresentationSet& set,
                              models::ModalitySet requested);

struct ExperimentConfig {
    std::vector<double> fpr_grid{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
    TrainPlan meta_plan;  // used for the meta-model comparison
    std::vector<models::MetaModelConfig> comparison{
        models::MetaModelConfig::logistic(),     models::MetaModelConfig::ffnn_depth(2),
        models::MetaModelConfig::ffnn_depth(3), models::MetaModelConfig::ffnn_depth(4),
        models::MetaModelConfig::ffnn_depth(5)};
};

struct GridRow {
    models::ModalitySet subset;
    bool present = false;
    std::vector<double> threshold;  // calibrated on validation, one per FPR level
    std::vector<double> rate;       // test detection rate (%), one per FPR level
    std::vector<double> test_fpr;   // realized test FPR at that threshold
};

struct MetaComparisonRow {
    std::string label;
    std::size_t parameters = 0;
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;
    double auc = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double accuracy = 0.0;
    double seconds = 0.0;  // wall time to convergence, excluded from deterministic outputs
};

struct ExperimentResult {
    std::vector<double> fpr_grid;
    std::vector<GridRow> grid;  // the seven subsets in canonical order
    std::vector<MetaComparisonRow> comparison;

    const GridRow& row(models::ModalitySet subset) const;
    /// Rows = combinations, columns = FPR levels; blank cells for absent subsets.
    std::string grid_csv() const;
    std::string comparison_csv() const;
    std::string timing_csv() const;
};

/// Detection-rate grid over the seven subsets: thresholds come from the
/// validation negatives and are applied unchanged to the test split. Then,
/// when config.comparison is non-empty, every listed meta-model is fit on
/// the full-subset fusion vectors and scored on validation at 0.5.
ExperimentResult fusion_experiment(const models::FusionPipeline& pipeline, const RepresentationSet& train,
                                   const RepresentationSet& valid, const RepresentationSet& test,
                                   const ExperimentConfig& config);

}  // namespace mf::eval
