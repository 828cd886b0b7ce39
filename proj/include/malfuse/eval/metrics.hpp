#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mf::eval {

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Throws UndefinedMetricError unless both classes occur.
double roc_auc(std::span<const double> scores, std::span<const double> labels);

/// Smallest threshold t with fraction(negatives >= t) strictly below
/// target_fpr. With negatives sorted descending s_1 >= ... >= s_n and k the
/// largest count with k/n < target, t is the next double above s_{k+1}
/// (or s_n itself when every negative may be admitted). Tied scores are
/// admitted or excluded together. Throws InputError when target is outside
/// (0,1), the list is empty or a score is not finite.
double threshold_for_fpr(std::span<const double> negative_scores, double target_fpr);

/// Percentage of positives scoring >= threshold_for_fpr(negatives, target).
double detection_rate_at_fpr(std::span<const double> scores, std::span<const double> labels, double target_fpr);

/// Percentage of positives with score >= threshold.
double detection_rate_at_threshold(std::span<const double> scores, std::span<const double> labels, double threshold);

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    /// Fraction of negatives flagged; 0 when there are no negatives.
    double fpr() const;
};

/// score >= threshold counts as a positive prediction.
Confusion confusion_at(std::span<const double> scores, std::span<const double> labels, double threshold);

struct FamilyBreakdown {
    std::string family;
    int label = 1;             // 1 malicious, 0 benign
    std::size_t count = 0;
    std::size_t flagged = 0;   // predicted positive
    double rate = 0.0;         // recall for malicious families, false-positive rate for benign
};

struct EvalReport {
    double threshold = 0.5;
    std::size_t samples = 0;
    Confusion confusion;
    double auc = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double accuracy = 0.0;
    bool auc_undefined = false;
    bool precision_undefined = false;  // no positive predictions
    bool recall_undefined = false;     // no positive labels
    bool f1_undefined = false;         // precision + recall == 0
    std::vector<double> scores;
    std::vector<FamilyBreakdown> families;  // sorted by family name

    /// Row-normalized confusion: {{tn, fp} / negatives, {fn, tp} / positives}.
    std::array<std::array<double, 2>, 2> normalized() const;

    std::string to_text() const;
    /// `metric,value` lines followed by a family table.
    std::string to_csv() const;
};

/// Metrics at the given threshold. Families, when non-empty, align with
/// scores. A single-class input leaves AUC undefined but still reports
/// everything else.
EvalReport evaluate(std::span<const double> scores, std::span<const double> labels, double threshold,
                    std::span<const std::string> families = {});

}  // namespace mf::eval
