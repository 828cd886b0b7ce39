#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "malfuse/models/classifier.hpp"

namespace mf::eval {

/// Validation quantity that picks the retained epoch and drives patience.
enum class Selection { valid_f1, valid_loss };

struct TrainPlan {
    std::string module_id;
    std::size_t epochs = 10;
    std::size_t batch_size = 1024;
    double learning_rate = 1e-3;
    std::optional<std::uint64_t> seed;  // required
    std::size_t patience = 10;          // epochs without an improvement of the selection metric
    double f1_threshold = 0.5;
    Selection selection = Selection::valid_f1;

    /// Throws ConfigurationError when the seed is missing or a field is out of range.
    void validate() const;
    nlohmann::json to_json() const;
};

struct EpochRecord {
    std::size_t epoch = 0;     // 1-based
    double train_loss = 0.0;   // mean BCE over the epoch's mini-batches
    double valid_loss = 0.0;   // eval-mode BCE, NaN without a validation set
    double valid_f1 = 0.0;     // at plan.f1_threshold, NaN without a validation set
};

struct TrainHistory {
    std::vector<EpochRecord> records;
    std::size_t best_epoch = 0;  // 0 when no epoch ran
    double best_valid_f1 = 0.0;  // validation F1 of the retained epoch
    double best_valid_loss = 0.0;
    bool stopped_early = false;

    std::string to_csv() const;
};

struct LabeledData {
    nn::Tensor2D x;
    std::vector<double> y;

    std::size_t rows() const { return y.size(); }
};

/// Mini-batch Adam on mean BCE. Calls model.prepare(train.x), reseeds
/// dropout from plan.seed and shuffles with a generator derived from it.
/// With a validation set the parameters and buffers of the epoch with the
/// best validation F1 (or lowest validation loss) are restored at the end; without one the last epoch
/// is kept. Trailing batches of a single row are skipped since batch
/// statistics need two. Throws NumericError naming epoch and batch when the
/// loss or a gradient stops being finite.
TrainHistory train_classifier(models::Classifier& model, const LabeledData& train, const LabeledData* valid,
                              const TrainPlan& plan);

/// Eval-mode probabilities in bounded chunks.
std::vector<double> predict_chunked(models::Classifier& model, const nn::Tensor2D& x, Eigen::Index chunk = 256);

/// F1 at threshold (0 when undefined).
double f1_at(const std::vector<double>& scores, const std::vector<double>& labels, double threshold);

}  // namespace mf::eval
