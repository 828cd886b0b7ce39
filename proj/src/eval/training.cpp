#include "malfuse/eval/training.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "malfuse/errors.hpp"
#include "malfuse/eval/metrics.hpp"
#include "malfuse/nn/adam.hpp"
#include "malfuse/nn/loss.hpp"

namespace mf::eval {

using nn::Tensor2D;

void TrainPlan::validate() const {
    if (!seed) throw ConfigurationError("train plan" + (module_id.empty() ? "" : " '" + module_id + "'") + ": seed is required");
    if (batch_size == 0) throw ConfigurationError("train plan: batch size must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ConfigurationError("train plan: learning rate must be positive");
    if (!(f1_threshold > 0.0 && f1_threshold < 1.0)) throw ConfigurationError("train plan: F1 threshold must be in (0,1)");
}

nlohmann::json TrainPlan::to_json() const {
    return {{"module", module_id}, {"epochs", epochs},  {"batch_size", batch_size}, {"learning_rate", learning_rate},
            {"seed", seed ? nlohmann::json(*seed) : nlohmann::json(nullptr)}, {"patience", patience},
            {"f1_threshold", f1_threshold},
            {"selection", selection == Selection::valid_f1 ? "valid_f1" : "valid_loss"}};
}

std::string TrainHistory::to_csv() const {
    std::string out = "epoch,train_loss,valid_loss,valid_f1\n";
    char buf[128];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%zu,%.8f,%.8f,%.6f\n", r.epoch, r.train_loss, r.valid_loss, r.valid_f1);
        out += buf;
    }
    return out;
}

std::vector<double> predict_chunked(models::Classifier& model, const Tensor2D& x, Eigen::Index chunk) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index start = 0; start < x.rows(); start += chunk) {
        const Eigen::Index n = std::min(chunk, x.rows() - start);
        const auto p = model.predict(x.middleRows(start, n));
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

double f1_at(const std::vector<double>& scores, const std::vector<double>& labels, double threshold) {
    const Confusion c = confusion_at(scores, labels, threshold);
    const double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp + c.fn);
    return denom > 0.0 ? 2.0 * static_cast<double>(c.tp) / denom : 0.0;
}

namespace {

void check_data(const LabeledData& d, const models::Classifier& model, const char* which) {
    if (static_cast<std::size_t>(d.x.rows()) != d.y.size())
        throw DimensionError(std::string(which) + " set: " + std::to_string(d.x.rows()) + " rows but " +
                             std::to_string(d.y.size()) + " labels");
    if (static_cast<std::size_t>(d.x.cols()) != model.input_dim())
        throw DimensionError(std::string(which) + " set: width " + std::to_string(d.x.cols()) + ", model expects " +
                             std::to_string(model.input_dim()));
    for (double y : d.y)
        if (y != 0.0 && y != 1.0) throw InputError(std::string(which) + " set: labels must be 0 or 1");
}

struct Snapshot {
    std::vector<Tensor2D> params;
    std::vector<Tensor2D> buffers;

    static Snapshot take(models::Classifier& model) {
        Snapshot s;
        for (const auto& p : model.params()) s.params.push_back(*p.value);
        for (const auto& b : model.buffers()) s.buffers.push_back(*b.value);
        return s;
    }
    void restore(models::Classifier& model) const {
        auto ps = model.params();
        for (std::size_t i = 0; i < ps.size(); ++i) *ps[i].value = params[i];
        auto bs = model.buffers();
        for (std::size_t i = 0; i < bs.size(); ++i) *bs[i].value = buffers[i];
    }
};

}  // namespace

TrainHistory train_classifier(models::Classifier& model, const LabeledData& train, const LabeledData* valid,
                              const TrainPlan& plan) {
    plan.validate();
    check_data(train, model, "training");
    if (valid) check_data(*valid, model, "validation");
    TrainHistory history;
    if (plan.epochs == 0 || train.rows() == 0) return history;

    const std::string who = plan.module_id.empty() ? std::string("model") : plan.module_id;
    model.prepare(train.x);
    model.reseed(*plan.seed);
    nn::Rng shuffle(*plan.seed ^ 0x9e3779b97f4a7c15ULL);
    const auto params = model.params();
    nn::AdamState opt(nn::parameter_count(params), nn::AdamConfig{.learning_rate = plan.learning_rate});

    const std::size_t n = train.rows();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Snapshot best;
    double best_score = -std::numeric_limits<double>::infinity();
    std::size_t waited = 0;
    const auto cols = train.x.cols();

    for (std::size_t epoch = 1; epoch <= plan.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        double loss_sum = 0.0;
        std::size_t seen = 0, batch_no = 0;
        for (std::size_t start = 0; start < n; start += plan.batch_size, ++batch_no) {
            const std::size_t b = std::min(plan.batch_size, n - start);
            if (b < 2 && n >= 2) continue;
            Tensor2D xb(static_cast<Eigen::Index>(b), cols);
            std::vector<double> yb(b);
            for (std::size_t i = 0; i < b; ++i) {
                xb.row(static_cast<Eigen::Index>(i)) = train.x.row(static_cast<Eigen::Index>(order[start + i]));
                yb[i] = train.y[order[start + i]];
            }
            model.zero_grad();
            const Tensor2D z = model.logits(xb, nn::Mode::train);
            const double loss = nn::bce_from_logits(z, yb);
            if (!std::isfinite(loss)) {
                throw NumericError(who + ": training diverged (loss not finite) at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_no));
            }
            model.backward(nn::bce_logit_grad(z, yb));
            try {
                nn::adam_step(opt, params);
            } catch (const NumericError& e) {
                throw NumericError(who + ": epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no) +
                                   ": " + e.what());
            }
            loss_sum += loss * static_cast<double>(b);
            seen += b;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
        rec.valid_loss = std::numeric_limits<double>::quiet_NaN();
        rec.valid_f1 = std::numeric_limits<double>::quiet_NaN();
        bool improved = true;
        if (valid && valid->rows() > 0) {
            const auto probs = predict_chunked(model, valid->x);
            rec.valid_loss = nn::bce_loss(probs, valid->y);
            rec.valid_f1 = f1_at(probs, valid->y, plan.f1_threshold);
            const double score = plan.selection == Selection::valid_f1 ? rec.valid_f1 : -rec.valid_loss;
            improved = score > best_score;
            if (improved) best_score = score;
        }
        history.records.push_back(rec);
        if (improved) {
            best = Snapshot::take(model);
            history.best_epoch = epoch;
            history.best_valid_f1 = rec.valid_f1;
            history.best_valid_loss = rec.valid_loss;
            waited = 0;
        } else if (++waited >= plan.patience) {
            history.stopped_early = epoch < plan.epochs;
            break;
        }
    }
    best.restore(model);
    return history;
}

}  // namespace mf::eval
