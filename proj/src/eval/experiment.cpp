#include "malfuse/eval/experiment.hpp"

#include <chrono>
#include <cstdio>

#include "malfuse/errors.hpp"
#include "malfuse/nn/adam.hpp"

namespace mf::eval {

using models::Modality;
using models::ModalitySet;
using nn::Tensor2D;

namespace {

std::size_t idx(Modality m) { return static_cast<std::size_t>(m); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace

void SplitData::validate() const {
    batch.validate();
    if (labels.size() != batch.rows) throw DimensionError("split: label count differs from row count");
    if (!ids.empty() && ids.size() != batch.rows) throw DimensionError("split: id count differs from row count");
    if (!families.empty() && families.size() != batch.rows)
        throw DimensionError("split: family count differs from row count");
}

LabeledData modality_rows(const SplitData& split, Modality m) {
    split.validate();
    const auto& in = split.batch.inputs[idx(m)];
    LabeledData d;
    if (!in) return d;
    std::vector<Eigen::Index> rows;
    for (std::size_t r = 0; r < split.size(); ++r)
        if (in->present[r]) rows.push_back(static_cast<Eigen::Index>(r));
    d.x.resize(static_cast<Eigen::Index>(rows.size()), in->x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        d.x.row(static_cast<Eigen::Index>(i)) = in->x.row(rows[i]);
        d.y.push_back(split.labels[static_cast<std::size_t>(rows[i])]);
    }
    return d;
}

TrainHistory pretrain_module(models::EarlyModule& module, const SplitData& train, const SplitData& valid,
                             const TrainPlan& plan) {
    const LabeledData tr = modality_rows(train, module.modality());
    const LabeledData va = modality_rows(valid, module.modality());
    if (tr.rows() == 0)
        throw InputError("pretrain: no training rows carry modality '" + std::string(to_string(module.modality())) + "'");
    return train_classifier(module, tr, va.rows() ? &va : nullptr, plan);
}

RepresentationSet represent(const models::FusionPipeline& pipeline, const SplitData& split) {
    split.validate();
    RepresentationSet s;
    s.reps = pipeline.representations(split.batch);
    s.available.resize(split.size());
    for (std::size_t r = 0; r < split.size(); ++r) s.available[r] = split.batch.available(r);
    s.labels = split.labels;
    s.families = split.families;
    return s;
}

LabeledData fusion_rows(const RepresentationSet& set, ModalitySet subset) {
    std::vector<Eigen::Index> rows;
    for (std::size_t r = 0; r < set.size(); ++r)
        if ((set.available[r] & subset) == subset) rows.push_back(static_cast<Eigen::Index>(r));
    std::array<Tensor2D, 3> picked;
    for (auto m : subset.members()) {
        picked[idx(m)].resize(static_cast<Eigen::Index>(rows.size()), models::kRepresentationDim);
        for (std::size_t i = 0; i < rows.size(); ++i)
            picked[idx(m)].row(static_cast<Eigen::Index>(i)) = set.reps[idx(m)].row(rows[i]);
    }
    LabeledData d;
    d.x = models::early_fusion({&picked[0], &picked[1], &picked[2]}, subset).values;
    for (auto r : rows) d.y.push_back(set.labels[static_cast<std::size_t>(r)]);
    return d;
}

std::unique_ptr<models::MetaModel> train_meta(const RepresentationSet& train, const RepresentationSet& valid,
                                              ModalitySet subset, const models::MetaModelConfig& config,
                                              const TrainPlan& plan, TrainHistory* history) {
    plan.validate();
    const LabeledData tr = fusion_rows(train, subset);
    const LabeledData va = fusion_rows(valid, subset);
    auto psi = std::make_unique<models::MetaModel>(subset, config, *plan.seed + subset.bits());
    TrainPlan p = plan;
    if (p.module_id.empty()) p.module_id = "meta " + subset.signature();
    TrainHistory h = train_classifier(*psi, tr, va.rows() ? &va : nullptr, p);
    if (history) *history = std::move(h);
    return psi;
}

std::map<std::string, TrainHistory> fit_meta_models(models::FusionPipeline& pipeline, const RepresentationSet& train,
                                                    const RepresentationSet& valid,
                                                    const models::MetaModelConfig& config, const TrainPlan& plan) {
    std::map<std::string, TrainHistory> out;
    const ModalitySet loaded = pipeline.loaded_modules();
    for (const auto& s : models::all_subsets()) {
        if (!((s & loaded) == s)) continue;
        bool any = false;
        for (const auto& a : train.available) any = any || ((a & s) == s);
        if (!any) continue;
        TrainHistory h;
        pipeline.set_meta(s, train_meta(train, valid, s, config, plan, &h));
        out[s.signature()] = std::move(h);
    }
    return out;
}

std::vector<double> score_set(const models::FusionPipeline& pipeline, const RepresentationSet& set,
                              ModalitySet requested) {
    return pipeline.route(set.reps, set.available, requested);
}

const GridRow& ExperimentResult::row(ModalitySet subset) const {
    for (const auto& r : grid)
        if (r.subset == subset) return r;
    throw InputError("experiment: no grid row for " + subset.signature());
}

std::string ExperimentResult::grid_csv() const {
    std::string out = "combination";
    for (double f : fpr_grid) out += "," + fmt("%g", f);
    out += "\n";
    for (const auto& r : grid) {
        out += r.subset.signature();
        for (std::size_t i = 0; i < fpr_grid.size(); ++i) out += "," + (r.present ? fmt("%.2f", r.rate[i]) : "");
        out += "\n";
    }
    return out;
}

std::string ExperimentResult::comparison_csv() const {
    std::string out = "meta_model,parameters,epochs,best_epoch,auc,f1,precision,recall,accuracy\n";
    for (const auto& c : comparison) {
        out += c.label + "," + std::to_string(c.parameters) + "," + std::to_string(c.epochs) + "," +
               std::to_string(c.best_epoch) + "," + fmt("%.6f", c.auc) + "," + fmt("%.6f", c.f1) + "," +
               fmt("%.6f", c.precision) + "," + fmt("%.6f", c.recall) + "," + fmt("%.6f", c.accuracy) + "\n";
    }
    return out;
}

std::string ExperimentResult::timing_csv() const {
    std::string out = "meta_model,seconds\n";
    for (const auto& c : comparison) out += c.label + "," + fmt("%.3f", c.seconds) + "\n";
    return out;
}

ExperimentResult fusion_experiment(const models::FusionPipeline& pipeline, const RepresentationSet& train,
                                   const RepresentationSet& valid, const RepresentationSet& test,
                                   const ExperimentConfig& config) {
    ExperimentResult result;
    result.fpr_grid = config.fpr_grid;
    for (const auto& s : models::all_subsets()) {
        GridRow row;
        row.subset = s;
        try {
            if (!((s & pipeline.loaded_modules()) == s)) throw ConfigurationError("module not loaded");
            const auto vs = score_set(pipeline, valid, s);
            const auto ts = score_set(pipeline, test, s);
            std::vector<double> neg;
            for (std::size_t i = 0; i < vs.size(); ++i)
                if (valid.labels[i] == 0.0) neg.push_back(vs[i]);
            for (double f : config.fpr_grid) {
                const double t = threshold_for_fpr(neg, f);
                row.threshold.push_back(t);
                row.rate.push_back(detection_rate_at_threshold(ts, test.labels, t));
                row.test_fpr.push_back(confusion_at(ts, test.labels, t).fpr());
            }
            row.present = true;
        } catch (const ConfigurationError&) {
            row = GridRow{};
            row.subset = s;
        }
        result.grid.push_back(std::move(row));
    }

    const ModalitySet full = ModalitySet::all();
    if (!config.comparison.empty() && (pipeline.loaded_modules() == full)) {
        const LabeledData va = fusion_rows(valid, full);
        for (const auto& mc : config.comparison) {
            MetaComparisonRow c;
            c.label = mc.label();
            TrainHistory h;
            const auto start = std::chrono::steady_clock::now();
            auto psi = train_meta(train, valid, full, mc, config.meta_plan, &h);
            c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            c.parameters = nn::parameter_count(psi->params());
            c.epochs = h.records.size();
            c.best_epoch = h.best_epoch;
            const auto probs = predict_chunked(*psi, va.x);
            const EvalReport r = evaluate(probs, va.y, 0.5);
            c.auc = r.auc;
            c.f1 = r.f1;
            c.precision = r.precision;
            c.recall = r.recall;
            c.accuracy = r.accuracy;
            result.comparison.push_back(c);
        }
    }
    return result;
}

}  // namespace mf::eval
