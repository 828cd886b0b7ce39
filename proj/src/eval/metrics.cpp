#include "malfuse/eval/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "malfuse/errors.hpp"

namespace mf::eval {

namespace {

void check_aligned(std::span<const double> scores, std::span<const double> labels, const char* what) {
    if (scores.size() != labels.size()) {
        throw InputError(std::string(what) + ": " + std::to_string(scores.size()) + " scores but " +
                         std::to_string(labels.size()) + " labels");
    }
    for (double s : scores)
        if (!std::isfinite(s)) throw InputError(std::string(what) + ": non-finite score");
    for (double y : labels)
        if (y != 0.0 && y != 1.0) throw InputError(std::string(what) + ": labels must be 0 or 1");
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const double> labels) {
    check_aligned(scores, labels, "roc_auc");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average 1-based ranks over tie groups; sums of half-integers stay exact.
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1.0) {
                pos_rank_sum += avg_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("roc_auc: both classes must be present");
    const double np = static_cast<double>(n_pos);
    const double wins = pos_rank_sum - np * (np + 1.0) / 2.0;
    return wins / (np * static_cast<double>(n_neg));
}

double threshold_for_fpr(std::span<const double> negative_scores, double target_fpr) {
    if (!(target_fpr > 0.0 && target_fpr < 1.0)) throw InputError("threshold_for_fpr: target FPR must be in (0,1)");
    if (negative_scores.empty()) throw InputError("threshold_for_fpr: no negative scores");
    for (double s : negative_scores)
        if (!std::isfinite(s)) throw InputError("threshold_for_fpr: non-finite score");

    std::vector<double> neg(negative_scores.begin(), negative_scores.end());
    std::sort(neg.begin(), neg.end(), std::greater<>());
    const std::size_t n = neg.size();
    const double dn = static_cast<double>(n);
    // Largest k with k/n < target.
    std::size_t k = static_cast<std::size_t>(std::floor(target_fpr * dn));
    while (k > 0 && static_cast<double>(k) / dn >= target_fpr) --k;
    while (k < n && static_cast<double>(k + 1) / dn < target_fpr) ++k;
    if (k >= n) return neg.back();
    return std::nextafter(neg[k], std::numeric_limits<double>::infinity());
}

double detection_rate_at_threshold(std::span<const double> scores, std::span<const double> labels, double threshold) {
    check_aligned(scores, labels, "detection_rate");
    std::size_t pos = 0, hit = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1.0) continue;
        ++pos;
        if (scores[i] >= threshold) ++hit;
    }
    if (pos == 0) throw UndefinedMetricError("detection_rate: no positive samples");
    return 100.0 * static_cast<double>(hit) / static_cast<double>(pos);
}

double detection_rate_at_fpr(std::span<const double> scores, std::span<const double> labels, double target_fpr) {
    check_aligned(scores, labels, "detection_rate_at_fpr");
    std::vector<double> neg;
    bool any_pos = false;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0.0) {
            neg.push_back(scores[i]);
        } else {
            any_pos = true;
        }
    }
    if (!any_pos || neg.empty()) throw UndefinedMetricError("detection_rate_at_fpr: both classes must be present");
    return detection_rate_at_threshold(scores, labels, threshold_for_fpr(neg, target_fpr));
}

double Confusion::fpr() const { return (fp + tn) ? static_cast<double>(fp) / static_cast<double>(fp + tn) : 0.0; }

Confusion confusion_at(std::span<const double> scores, std::span<const double> labels, double threshold) {
    check_aligned(scores, labels, "confusion");
    Confusion c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (labels[i] == 1.0) {
            pred ? ++c.tp : ++c.fn;
        } else {
            pred ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

std::array<std::array<double, 2>, 2> EvalReport::normalized() const {
    const auto& c = confusion;
    auto div = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
    return {{{div(c.tn, c.tn + c.fp), div(c.fp, c.tn + c.fp)}, {div(c.fn, c.fn + c.tp), div(c.tp, c.fn + c.tp)}}};
}

EvalReport evaluate(std::span<const double> scores, std::span<const double> labels, double threshold,
                    std::span<const std::string> families) {
    check_aligned(scores, labels, "evaluate");
    if (!families.empty() && families.size() != scores.size())
        throw InputError("evaluate: family list does not align with scores");
    EvalReport r;
    r.threshold = threshold;
    r.samples = scores.size();
    r.scores.assign(scores.begin(), scores.end());
    r.confusion = confusion_at(scores, labels, threshold);
    const auto& c = r.confusion;

    try {
        r.auc = roc_auc(scores, labels);
    } catch (const UndefinedMetricError&) {
        r.auc = 0.0;
        r.auc_undefined = true;
    }
    r.precision_undefined = (c.tp + c.fp) == 0;
    r.precision = r.precision_undefined ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    r.recall_undefined = (c.tp + c.fn) == 0;
    r.recall = r.recall_undefined ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    r.f1_undefined = (r.precision + r.recall) == 0.0;
    r.f1 = r.f1_undefined ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    r.accuracy = c.total() ? static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()) : 0.0;

    if (!families.empty()) {
        std::map<std::string, FamilyBreakdown> by;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            auto& f = by[families[i]];
            f.family = families[i];
            f.label = labels[i] == 1.0 ? 1 : 0;
            ++f.count;
            if (scores[i] >= threshold) ++f.flagged;
        }
        for (auto& [name, f] : by) {
            f.rate = static_cast<double>(f.flagged) / static_cast<double>(f.count);
            r.families.push_back(f);
        }
    }
    return r;
}

std::string EvalReport::to_text() const {
    const auto& c = confusion;
    const auto n = normalized();
    std::string out;
    out += "samples    " + std::to_string(samples) + "\n";
    out += "threshold  " + fmt(threshold) + "\n";
    out += "auc        " + (auc_undefined ? std::string("undefined (single class)") : fmt(auc)) + "\n";
    out += "f1         " + fmt(f1) + (f1_undefined ? "  (undefined, reported as 0)" : "") + "\n";
    out += "precision  " + fmt(precision) + (precision_undefined ? "  (undefined, reported as 0)" : "") + "\n";
    out += "recall     " + fmt(recall) + (recall_undefined ? "  (undefined, reported as 0)" : "") + "\n";
    out += "accuracy   " + fmt(accuracy) + "\n";
    out += "confusion (rows: true benign, true malicious; cols: predicted benign, predicted malicious)\n";
    out += "  " + std::to_string(c.tn) + " " + std::to_string(c.fp) + "   |   " + fmt(n[0][0]) + " " + fmt(n[0][1]) + "\n";
    out += "  " + std::to_string(c.fn) + " " + std::to_string(c.tp) + "   |   " + fmt(n[1][0]) + " " + fmt(n[1][1]) + "\n";
    if (!families.empty()) {
        out += "per family (malicious: recall, benign: false-positive rate)\n";
        for (const auto& f : families) {
            out += "  " + f.family + "  " + std::to_string(f.flagged) + "/" + std::to_string(f.count) + "  " +
                   fmt(f.rate) + "\n";
        }
    }
    return out;
}

std::string EvalReport::to_csv() const {
    const auto& c = confusion;
    std::string out = "metric,value\n";
    auto row = [&](const std::string& k, const std::string& v) { out += k + "," + v + "\n"; };
    row("samples", std::to_string(samples));
    row("threshold", fmt(threshold));
    row("auc", auc_undefined ? "undefined" : fmt(auc));
    row("f1", fmt(f1));
    row("precision", fmt(precision));
    row("recall", fmt(recall));
    row("accuracy", fmt(accuracy));
    row("tp", std::to_string(c.tp));
    row("fp", std::to_string(c.fp));
    row("tn", std::to_string(c.tn));
    row("fn", std::to_string(c.fn));
    row("fpr", fmt(c.fpr()));
    row("precision_undefined", precision_undefined ? "1" : "0");
    row("recall_undefined", recall_undefined ? "1" : "0");
    row("f1_undefined", f1_undefined ? "1" : "0");
    if (!families.empty()) {
        out += "\nfamily,label,count,flagged,rate\n";
        for (const auto& f : families) {
            out += f.family + "," + std::to_string(f.label) + "," + std::to_string(f.count) + "," +
                   std::to_string(f.flagged) + "," + fmt(f.rate) + "\n";
        }
    }
    return out;
}

}  // namespace mf::eval
