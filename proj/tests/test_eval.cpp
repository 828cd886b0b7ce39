#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "metric_oracles.hpp"
#include "malfuse/errors.hpp"
#include "malfuse/eval/experiment.hpp"
#include "malfuse/eval/metrics.hpp"
#include "malfuse/eval/training.hpp"

using namespace mf;
using namespace mf::eval;
using namespace mf::models;
using nn::Tensor2D;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Two Gaussian blobs pushed apart along a random direction.
LabeledData separable(std::size_t n, Eigen::Index dim, std::uint64_t seed, double margin = 1.0) {
    nn::Rng rng(seed);
    std::vector<double> w(static_cast<std::size_t>(dim));
    for (auto& v : w) v = rng.uniform(-1, 1);
    LabeledData d;
    d.x.resize(static_cast<Eigen::Index>(n), dim);
    for (std::size_t i = 0; i < n; ++i) {
        const double y = i % 2 ? 1.0 : 0.0;
        double dot = 0.0, norm = 0.0;
        for (Eigen::Index c = 0; c < dim; ++c) {
            d.x(static_cast<Eigen::Index>(i), c) = rng.uniform(0.0, 1.0);
            dot += (d.x(static_cast<Eigen::Index>(i), c) - 0.5) * w[static_cast<std::size_t>(c)];
            norm += w[static_cast<std::size_t>(c)] * w[static_cast<std::size_t>(c)];
        }
        // Shift along w so the signed distance has the label's sign and at least `margin`/sqrt(dim).
        const double want = (y == 1.0 ? 1.0 : -1.0) * (margin + std::abs(dot));
        const double shift = (want - dot) / norm;
        for (Eigen::Index c = 0; c < dim; ++c) d.x(static_cast<Eigen::Index>(i), c) += shift * w[static_cast<std::size_t>(c)];
        d.y.push_back(y);
    }
    return d;
}

TrainPlan plan(std::size_t epochs, std::size_t batch, std::uint64_t seed, double lr = 1e-2) {
    TrainPlan p;
    p.epochs = epochs;
    p.batch_size = batch;
    p.seed = seed;
    p.learning_rate = lr;
    return p;
}

double accuracy(Classifier& m, const LabeledData& d) {
    const auto p = predict_chunked(m, d.x);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < p.size(); ++i) ok += (p[i] >= 0.5) == (d.y[i] == 1.0);
    return static_cast<double>(ok) / static_cast<double>(p.size());
}

}  // namespace

TEST_CASE("roc_auc examples") {
    CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<double>{0, 0, 1, 1}) == 1.0);
    CHECK(roc_auc(std::vector<double>{0.4, 0.6}, std::vector<double>{1, 0}) == 0.0);
    CHECK(roc_auc(std::vector<double>{0.5, 0.5}, std::vector<double>{0, 1}) == 0.5);
    CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 1}), UndefinedMetricError);
    CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1}, std::vector<double>{1, 0}), InputError);
}

TEST_CASE("threshold_for_fpr examples") {
    const double t = threshold_for_fpr(std::vector<double>{0.1, 0.2, 0.9}, 0.34);
    CHECK(t > 0.2);
    CHECK(t == std::nextafter(0.2, kInf));
    CHECK(confusion_at(std::vector<double>{0.1, 0.2, 0.9}, std::vector<double>{0, 0, 0}, t).fp == 1);

    // Every positive fraction below one: at most n-1 of n distinct negatives are admitted.
    const std::vector<double> distinct{0.3, 0.1, 0.7, 0.5};
    const double near_one = threshold_for_fpr(distinct, 1.0 - 1e-12);
    CHECK(near_one == std::nextafter(0.1, kInf));
    CHECK(confusion_at(distinct, std::vector<double>(4, 0.0), near_one).fp == 3);

    const std::vector<double> zeros(50, 0.0);
    const double tz = threshold_for_fpr(zeros, 0.01);
    CHECK(tz > 0.0);
    CHECK(confusion_at(zeros, std::vector<double>(50, 0.0), tz).fp == 0);

    for (double bad : {0.0, 1.0, -0.1, 1.5, std::nan("")})
        CHECK_THROWS_AS(threshold_for_fpr(distinct, bad), InputError);
    CHECK_THROWS_AS(threshold_for_fpr(std::vector<double>{}, 0.1), InputError);
}

TEST_CASE("detection_rate_at_fpr examples") {
    const std::vector<double> s{0.9, 0.4, 0.5, 0.1};
    const std::vector<double> y{1, 1, 0, 0};
    CHECK(detection_rate_at_fpr(s, y, 0.5) == 50.0);

    const std::vector<double> sep{0.9, 0.8, 0.2, 0.1};
    for (double f : {1e-5, 1e-2, 0.3, 0.9}) CHECK(detection_rate_at_fpr(sep, y, f) == 100.0);
    CHECK_THROWS_AS(detection_rate_at_fpr(sep, std::vector<double>(4, 1.0), 0.1), UndefinedMetricError);
}

TEST_CASE("metrics match brute-force oracles on random instances") {
    nn::Rng rng(2024);
    for (int it = 0; it < 200; ++it) {
        const auto m = testing::random_instance(rng, 1000);
        CHECK(roc_auc(m.scores, m.labels) == testing::pairwise_auc(m.scores, m.labels));
        std::vector<double> neg;
        for (std::size_t i = 0; i < m.scores.size(); ++i)
            if (m.labels[i] == 0.0) neg.push_back(m.scores[i]);
        const double t = threshold_for_fpr(neg, m.target);
        CHECK(t == testing::sweep_threshold(neg, m.target));
        CHECK(detection_rate_at_fpr(m.scores, m.labels, m.target) ==
              testing::sweep_detection_rate(m.scores, m.labels, m.target));
        // Calibration never exceeds the target on the calibration set itself.
        CHECK(confusion_at(neg, std::vector<double>(neg.size(), 0.0), t).fpr() < m.target);
    }
}

TEST_CASE("detection rate is monotone in the FPR target") {
    nn::Rng rng(7);
    for (int it = 0; it < 50; ++it) {
        const auto m = testing::random_instance(rng, 400);
        double prev = -1.0;
        for (double f : {1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.3, 0.6, 0.9}) {
            const double r = detection_rate_at_fpr(m.scores, m.labels, f);
            CHECK(r >= prev);
            prev = r;
        }
    }
}

TEST_CASE("evaluate reports metrics and degenerate flags") {
    const std::vector<double> y{1, 0, 1, 0, 1};
    const std::vector<std::string> fam{"rat", "clean", "trojan", "clean", "rat"};
    const EvalReport perfect = evaluate(y, y, 0.5, fam);
    CHECK(perfect.f1 == 1.0);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.confusion.fp == 0);
    CHECK(perfect.confusion.fn == 0);
    CHECK(perfect.confusion.total() == 5);
    CHECK(perfect.normalized()[0][1] == 0.0);
    CHECK(perfect.normalized()[1][1] == 1.0);
    REQUIRE(perfect.families.size() == 3);
    CHECK(perfect.families[0].family == "clean");
    CHECK(perfect.families[0].label == 0);
    CHECK(perfect.families[0].rate == 0.0);
    CHECK(perfect.families[1].family == "rat");
    CHECK(perfect.families[1].rate == 1.0);

    const EvalReport none = evaluate(std::vector<double>(5, 0.1), y, 0.5);
    CHECK(none.recall == 0.0);
    CHECK(none.precision == 0.0);
    CHECK(none.precision_undefined);
    CHECK_FALSE(none.recall_undefined);
    CHECK(none.f1_undefined);
    CHECK(none.to_csv().find("precision_undefined,1") != std::string::npos);
    CHECK(none.to_text().find("undefined") != std::string::npos);

    const EvalReport single = evaluate(std::vector<double>{0.2, 0.7}, std::vector<double>{0, 0}, 0.5);
    CHECK(single.auc_undefined);
    CHECK(single.accuracy == 0.5);
    CHECK(single.to_csv().find("auc,undefined") != std::string::npos);

    nn::Rng rng(0);
    std::vector<double> s, lab;
    for (int i = 0; i < 1000; ++i) {
        s.push_back(rng.uniform());
        lab.push_back(i % 2);
    }
    const EvalReport rnd = evaluate(s, lab, 0.5);
    CHECK(std::abs(rnd.auc - 0.5) <= 0.05);
    for (double v : {rnd.auc, rnd.f1, rnd.precision, rnd.recall, rnd.accuracy}) CHECK((v >= 0.0 && v <= 1.0));
    CHECK(rnd.confusion.total() == 1000);
}

TEST_CASE("training reaches a separable set and keeps the best epoch") {
    const LabeledData all = separable(600, 128, 1);
    const LabeledData train{all.x.topRows(400), {all.y.begin(), all.y.begin() + 400}};
    const LabeledData valid{all.x.bottomRows(200), {all.y.begin() + 400, all.y.end()}};
    MetaModel lr({Modality::filepath}, MetaModelConfig::logistic(), 3);
    const TrainHistory h = train_classifier(lr, train, &valid, plan(50, 32, 4));
    CHECK(accuracy(lr, train) >= 0.99);
    REQUIRE_FALSE(h.records.empty());
    CHECK(h.best_epoch >= 1);
    CHECK(f1_at(predict_chunked(lr, valid.x), valid.y, 0.5) == h.best_valid_f1);
}

TEST_CASE("full-batch training loss does not increase") {
    const LabeledData train = separable(256, 128, 5, 0.2);
    MetaModel lr({Modality::filepath}, MetaModelConfig::logistic(), 6);
    const TrainHistory h = train_classifier(lr, train, nullptr, plan(40, 256, 7, 1e-3));
    REQUIRE(h.records.size() == 40);
    for (std::size_t i = 1; i < h.records.size(); ++i)
        CHECK(h.records[i].train_loss <= h.records[i - 1].train_loss * (1.0 + 1e-6));
    CHECK(h.records.back().train_loss < h.records.front().train_loss);
}

TEST_CASE("training edge cases") {
    const LabeledData train = separable(64, 128, 8);
    MetaModel a({Modality::filepath}, MetaModelConfig::ffnn_depth(2), 9);
    const auto before = parameter_hash(a);
    const TrainHistory none = train_classifier(a, train, nullptr, plan(0, 16, 1));
    CHECK(none.records.empty());
    CHECK(parameter_hash(a) == before);

    TrainPlan unseeded = plan(1, 16, 1);
    unseeded.seed.reset();
    CHECK_THROWS_AS(train_classifier(a, train, nullptr, unseeded), ConfigurationError);

    LabeledData poisoned = train;
    poisoned.x(3, 5) = std::nan("");
    CHECK_THROWS_AS(train_classifier(a, poisoned, nullptr, plan(1, 16, 1)), NumericError);

    LabeledData bad_label = train;
    bad_label.y[0] = 0.5;
    CHECK_THROWS_AS(train_classifier(a, bad_label, nullptr, plan(1, 16, 1)), InputError);

    LabeledData narrow{Tensor2D::Zero(4, 10), {0, 1, 0, 1}};
    CHECK_THROWS_AS(train_classifier(a, narrow, nullptr, plan(1, 16, 1)), DimensionError);
}

TEST_CASE("training is deterministic for a fixed plan") {
    const LabeledData all = separable(190, 128, 10);
    const LabeledData train{all.x.topRows(130), {all.y.begin(), all.y.begin() + 130}};
    const LabeledData valid{all.x.bottomRows(60), {all.y.begin() + 130, all.y.end()}};
    auto run = [&](TrainHistory& h) {
        MetaModel m({Modality::filepath}, MetaModelConfig::ffnn_depth(3), 12);
        h = train_classifier(m, train, &valid, plan(6, 32, 13));
        return parameter_hash(m);
    };
    TrainHistory h1, h2;
    CHECK(run(h1) == run(h2));
    REQUIRE(h1.records.size() == h2.records.size());
    CHECK(h1.to_csv() == h2.to_csv());
    for (std::size_t i = 0; i < h1.records.size(); ++i) CHECK(h1.records[i].train_loss == h2.records[i].train_loss);
}

TEST_CASE("early stopping honors patience") {
    // Labels independent of inputs: validation F1 plateaus quickly.
    nn::Rng rng(14);
    LabeledData noise{Tensor2D(64, 128), {}};
    for (Eigen::Index i = 0; i < noise.x.size(); ++i) noise.x.data()[i] = rng.uniform();
    for (int i = 0; i < 64; ++i) noise.y.push_back(rng.bernoulli(0.5));
    MetaModel m({Modality::filepath}, MetaModelConfig::logistic(), 15);
    TrainPlan p = plan(200, 16, 16);
    p.patience = 3;
    const TrainHistory h = train_classifier(m, noise, &noise, p);
    CHECK(h.records.size() <= 200);
    if (h.stopped_early) CHECK(h.records.size() == h.best_epoch + 3);
}

namespace {

SequenceCnnConfig tiny_seq(Modality m) {
    SequenceCnnConfig c;
    c.modality = m;
    c.vocab = 6;
    c.seq_len = 8;
    c.embed_dim = 4;
    c.channels = 4;
    c.widths = {16, 128};
    return c;
}

// Label-dependent token and feature shifts so every module sees some signal.
SplitData tiny_split(std::size_t n, std::uint64_t seed) {
    nn::Rng rng(seed);
    SplitData s;
    s.batch.rows = n;
    ModalityInput fp{Tensor2D(static_cast<Eigen::Index>(n), 8), {}};
    ModalityInput api{Tensor2D(static_cast<Eigen::Index>(n), 8), {}};
    ModalityInput emb{Tensor2D(static_cast<Eigen::Index>(n), 16), {}};
    for (std::size_t i = 0; i < n; ++i) {
        const double y = rng.bernoulli(0.5) ? 1.0 : 0.0;
        const auto r = static_cast<Eigen::Index>(i);
        for (Eigen::Index c = 0; c < 8; ++c) {
            fp.x(r, c) = static_cast<double>(2 + rng.below(6));
            api.x(r, c) = static_cast<double>(2 + rng.below(6));
        }
        if (y == 1.0 && rng.bernoulli(0.7)) fp.x(r, 0) = 7;
        if (y == 1.0 && rng.bernoulli(0.7)) api.x(r, 3) = 6;
        for (Eigen::Index c = 0; c < 16; ++c) emb.x(r, c) = rng.uniform(-1, 1) + (y == 1.0 && c < 4 ? 0.8 : 0.0);
        fp.present.push_back(1);
        api.present.push_back(rng.bernoulli(0.85));
        emb.present.push_back(1);
        s.labels.push_back(y);
        s.families.push_back(y == 1.0 ? "trojan" : "clean");
        s.ids.push_back("s" + std::to_string(i));
    }
    s.batch.inputs[0] = std::move(fp);
    s.batch.inputs[1] = std::move(api);
    s.batch.inputs[2] = std::move(emb);
    return s;
}

}  // namespace

TEST_CASE("meta training leaves early modules frozen and the experiment grid is well formed") {
    const SplitData train = tiny_split(240, 20), valid = tiny_split(120, 21), test = tiny_split(120, 22);
    FusionPipeline p;
    p.set_module(std::make_unique<SequenceCnn>(tiny_seq(Modality::filepath), 1));
    p.set_module(std::make_unique<SequenceCnn>(tiny_seq(Modality::apiseq), 2));
    p.set_module(std::make_unique<EmberFfnn>(EmberFfnnConfig{16, {32, 128}, 0.05}, 3));
    for (auto m : kModalityOrder) {
        const TrainHistory h = pretrain_module(*p.module(m), train, valid, plan(3, 32, 30 + static_cast<std::uint64_t>(m)));
        CHECK(h.records.size() == 3);
    }

    std::vector<std::uint64_t> frozen;
    for (auto m : kModalityOrder) frozen.push_back(parameter_hash(*p.module(m)));
    const RepresentationSet rtr = represent(p, train), rva = represent(p, valid), rte = represent(p, test);
    const auto histories = fit_meta_models(p, rtr, rva, MetaModelConfig::ffnn_preset(), plan(4, 32, 40));
    CHECK(histories.size() == 7);
    CHECK(p.meta_subsets().size() == 7);
    for (std::size_t i = 0; i < 3; ++i) CHECK(parameter_hash(*p.module(kModalityOrder[i])) == frozen[i]);

    ExperimentConfig cfg;
    cfg.fpr_grid = {1e-2, 0.1, 0.3};
    cfg.meta_plan = plan(3, 32, 50);
    const ExperimentResult res = fusion_experiment(p, rtr, rva, rte, cfg);
    REQUIRE(res.grid.size() == 7);
    for (const auto& row : res.grid) {
        CHECK(row.present);
        REQUIRE(row.rate.size() == 3);
        for (std::size_t i = 1; i < row.rate.size(); ++i) CHECK(row.rate[i] >= row.rate[i - 1]);
    }
    const std::string csv = res.grid_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
    CHECK(csv.rfind("combination,0.01,0.1,0.3\n", 0) == 0);
    REQUIRE(res.comparison.size() == 5);
    CHECK(res.comparison[0].label == "lr");
    CHECK(res.comparison[4].label == "ffnn-5");
    CHECK(res.comparison_csv().find("seconds") == std::string::npos);
    CHECK(res.timing_csv().find("ffnn-3,") != std::string::npos);
    for (std::size_t i = 0; i < 3; ++i) CHECK(parameter_hash(*p.module(kModalityOrder[i])) == frozen[i]);

    // Fused scores equal the pipeline's own routing.
    const auto direct = p.predict(test.batch).score;
    CHECK(score_set(p, rte, ModalitySet::all()) == direct);

    // Missing modules leave their subsets absent with blank cells.
    FusionPipeline partial;
    partial.set_module(std::make_unique<SequenceCnn>(tiny_seq(Modality::filepath), 1));
    pretrain_module(*partial.module(Modality::filepath), train, valid, plan(1, 32, 60));
    const RepresentationSet ptr = represent(partial, train), pva = represent(partial, valid), pte = represent(partial, test);
    fit_meta_models(partial, ptr, pva, MetaModelConfig::logistic(), plan(2, 32, 41));
    const ExperimentResult pres = fusion_experiment(partial, ptr, pva, pte, cfg);
    CHECK(pres.row({Modality::filepath}).present);
    CHECK_FALSE(pres.row({Modality::apiseq}).present);
    CHECK(pres.grid_csv().find("api,,,\n") != std::string::npos);
    CHECK(pres.comparison.empty());
}
