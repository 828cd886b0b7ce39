// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Artifacts (grid, comparison, coverage, stats) go to the directory
// given as the first argument, default ./acceptance_out.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradient_oracle.hpp"
#include "metric_oracles.hpp"
#include "pe_fixture.hpp"
#include "malfuse/binary_io.hpp"
#include "malfuse/corpus/dataset.hpp"
#include "malfuse/corpus/synth.hpp"
#include "malfuse/errors.hpp"
#include "malfuse/eval/experiment.hpp"
#include "malfuse/eval/hybrid.hpp"
#include "malfuse/eval/metrics.hpp"
#include "malfuse/features/apiseq.hpp"
#include "malfuse/features/static_features.hpp"
#include "malfuse/nn/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace mf;
using models::Modality;
using models::ModalitySet;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

void note(const std::string& s) { std::cerr << "  " << s << "\n"; }

// ------------------------------------------------------------ criterion 2

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    std::size_t checked = 0, failures = 0;
    std::string worst;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        for (auto c : testing::all_grad_cases()) {
            const auto r = testing::run_grad_case(c, seed);
            checked += r.checked;
            failures += r.failures;
            if (r.failures) worst = std::string(testing::to_string(c)) + " seed " + std::to_string(seed) + " " + r.worst_param;
        }
    }
    const double secs = since(t0);
    Outcome o;
    o.pass = failures == 0 && checked > 0 && secs < 60.0;
    o.detail = std::to_string(testing::all_grad_cases().size()) + " layer cases x 5 seeds, " + std::to_string(checked) +
               " coordinates, " + std::to_string(failures) + " mismatches, " + fmt("%.1f s", secs) +
               (worst.empty() ? "" : ", worst " + worst);
    return o;
}

// ------------------------------------------------------------ criterion 3

Outcome metric_oracles() {
    const auto t0 = Clock::now();
    nn::Rng rng(3);
    std::size_t mismatches = 0;
    for (int it = 0; it < 200; ++it) {
        const auto m = testing::random_instance(rng, 1000);
        std::vector<double> neg;
        for (std::size_t i = 0; i < m.scores.size(); ++i)
            if (m.labels[i] == 0.0) neg.push_back(m.scores[i]);
        mismatches += eval::roc_auc(m.scores, m.labels) != testing::pairwise_auc(m.scores, m.labels);
        mismatches += eval::threshold_for_fpr(neg, m.target) != testing::sweep_threshold(neg, m.target);
        mismatches += eval::detection_rate_at_fpr(m.scores, m.labels, m.target) !=
                      testing::sweep_detection_rate(m.scores, m.labels, m.target);
    }
    const double secs = since(t0);
    return {mismatches == 0 && secs < 60.0,
            "200 instances (n <= 1000), " + std::to_string(mismatches) + " mismatches, " + fmt("%.1f s", secs)};
}

// ------------------------------------------------------------ criterion 9

Outcome fuzz() {
    nn::Rng rng(9);
    const auto fixture = testing::build_pe_fixture();
    corpus::SynthSpec spec;
    spec.train = 20;
    spec.valid = 2;
    spec.test = 2;
    spec.seed = 9;
    const auto synth = corpus::generate_synthetic_corpus(spec);

    auto random_bytes = [&](std::size_t n) {
        std::vector<std::uint8_t> b(n);
        for (auto& v : b) v = static_cast<std::uint8_t>(rng.below(256));
        return b;
    };
    auto mutate = [&](std::vector<std::uint8_t> b) {
        if (b.empty()) return b;
        const std::size_t flips = 1 + rng.below(32);
        for (std::size_t f = 0; f < flips; ++f) b[rng.below(b.size())] = static_cast<std::uint8_t>(rng.below(256));
        return b;
    };

    std::size_t static_inputs = 0, bad_static = 0;
    std::string first_bad;
    auto flag = [&](const std::string& what) {
        if (first_bad.empty()) first_bad = what;
    };
    for (int i = 0; i < 5000; ++i) {
        std::vector<std::uint8_t> x;
        const auto& base = i % 2 ? fixture : synth.pe_bytes[rng.below(synth.pe_bytes.size())];
        switch (i % 4) {
            case 0: x = random_bytes(rng.below(9000)); break;
            case 1: x.assign(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(rng.below(base.size() + 1))); break;
            case 2: x = mutate(base); break;
            default: {
                x = mutate(base);
                x.resize(rng.below(x.size() + 1));
            }
        }
        ++static_inputs;
        try {
            const auto v = pe::featurize_static(x);
            bool ok = v.values.size() == 768;
            for (double d : v.values) ok = ok && std::isfinite(d);
            if (!ok) {
                ++bad_static;
                flag("static input " + std::to_string(i) + ": bad output");
            }
        } catch (const std::exception& e) {
            ++bad_static;  // the static featurizer is total
            flag("static input " + std::to_string(i) + ": " + e.what());
        }
    }

    const std::vector<std::string> shapes{
        R"({"entry_points":[{"apis":[{"api_name":7}]}]})",
        R"({"entry_points":{"apis":[]}})",
        R"({"entry_points":[{"apis":"createfilew"}]})",
        R"({"entry_points":[{"apis":[null,{"api_name":"a.b"}]}]})",
        R"({"entry_points":[{"apis":[],"error":{"type":5}}]})",
        R"([1,2,3])",
        R"({"sample_id":[],"entry_points":[]})",
        R"("just a string")",
        R"({"entry_points":[{"apis":[{"api_name":"KERNEL32.CreateFileW","args":[1,2]}]}],"extra":{"x":[1e999]}})",
    };
    std::size_t report_inputs = 0, bad_reports = 0, rejected = 0;
    const auto vocab = api::build_api_vocab(std::vector<api::EmulationReport>{api::parse_report(synth.reports[0])});
    for (int i = 0; i < 5000; ++i) {
        std::string doc;
        const std::string& base = synth.reports[rng.below(synth.reports.size())];
        switch (i % 5) {
            case 0: {
                const auto b = random_bytes(rng.below(512));
                doc.assign(b.begin(), b.end());
                break;
            }
            case 1: doc = base.substr(0, rng.below(base.size() + 1)); break;
            case 2: {
                const auto b = mutate(std::vector<std::uint8_t>(base.begin(), base.end()));
                doc.assign(b.begin(), b.end());
                break;
            }
            case 3: doc = shapes[rng.below(shapes.size())]; break;
            default: doc = base;
        }
        ++report_inputs;
        try {
            const auto r = api::parse_report(doc);
            if (r.status == api::EmulationStatus::success) {
                const auto seq = api::encode_apiseq(r, vocab);
                for (auto id : seq.ids)
                    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
                        ++bad_reports;
                        flag("report input " + std::to_string(i) + ": token id out of range");
                    }
            }
        } catch (const mf::Error&) {
            ++rejected;  // a typed rejection, not a crash
        } catch (const std::exception& e) {
            ++bad_reports;
            flag("report input " + std::to_string(i) + ": untyped exception: " + e.what());
        }
    }
    return {bad_static == 0 && bad_reports == 0,
            std::to_string(static_inputs) + " static + " + std::to_string(report_inputs) + " report inputs, " +
                std::to_string(bad_static + bad_reports) + " crashes or non-finite outputs, " + std::to_string(rejected) +
                " reports rejected with a parse error" +
                (first_bad.empty() ? "" : "; first: " + first_bad)};
}

// ------------------------------------------------------- criteria 4-7 run

struct FullRun {
    corpus::FeaturizeResult features;
    eval::HybridResult trained;
    eval::RepresentationSet train, valid, test;
    eval::ExperimentResult experiment;
    double seconds = 0.0;
};

FullRun full_run(const fs::path& out) {
    FullRun run;
    const auto t0 = Clock::now();
    corpus::SynthSpec spec;  // seed 0, 4000 / 1000 / 1000, rho 0.5
    const fs::path dir = out / "corpus";
    fs::remove_all(dir);
    corpus::write_corpus(corpus::generate_synthetic_corpus(spec), dir);
    const auto records = corpus::load_manifest(dir / "manifest.tsv");
    run.features = corpus::featurize_corpus(records, dir, {}, 1);
    note(fmt("corpus and features ready after %.1f s", since(t0)));

    const auto tr = run.features.dataset.split(corpus::Split::train);
    const auto va = run.features.dataset.split(corpus::Split::valid);
    const auto te = run.features.dataset.split(corpus::Split::test);
    eval::HybridConfig cfg;
    cfg.seed = 0;
    run.trained = eval::train_hybrid(tr, va, cfg);
    run.trained.pipeline.featurizer_hashes = run.features.dataset.featurizer_hashes;
    for (const auto& [tag, h] : run.trained.module_history)
        note(tag + ": best epoch " + std::to_string(h.best_epoch) + " of " + std::to_string(h.records.size()));
    note(fmt("modules and meta-models trained after %.1f s", since(t0)));

    run.train = eval::represent(run.trained.pipeline, tr);
    run.valid = eval::represent(run.trained.pipeline, va);
    run.test = eval::represent(run.trained.pipeline, te);
    eval::ExperimentConfig ecfg;
    ecfg.meta_plan = eval::HybridConfig::default_meta_plan();
    ecfg.meta_plan.seed = eval::derive_seed(0, 40);
    run.experiment = eval::fusion_experiment(run.trained.pipeline, run.train, run.valid, run.test, ecfg);
    run.seconds = since(t0);

    run.trained.pipeline.save(out / "pipeline");
    write_file_text(out / "grid.csv", run.experiment.grid_csv());
    write_file_text(out / "meta_comparison.csv", run.experiment.comparison_csv());
    write_file_text(out / "meta_timing.csv", run.experiment.timing_csv());
    write_file_text(out / "emulation_stats.csv", api::emulation_stats(run.features.reports).to_csv());
    std::cerr << run.experiment.grid_csv() << run.experiment.comparison_csv();
    return run;
}

double rate_at(const eval::ExperimentResult& r, ModalitySet s, double fpr) {
    for (std::size_t k = 0; k < r.fpr_grid.size(); ++k)
        if (r.fpr_grid[k] == fpr) return r.row(s).rate[k];
    throw ConfigurationError("fpr level missing from the grid");
}

Outcome fusion_superiority(const FullRun& run) {
    const auto& r = run.experiment;
    const double fp = rate_at(r, {Modality::filepath}, 1e-2), api = rate_at(r, {Modality::apiseq}, 1e-2),
                 emb = rate_at(r, {Modality::ember}, 1e-2);
    const double pair = rate_at(r, {Modality::filepath, Modality::apiseq}, 1e-2);
    const double full = rate_at(r, ModalitySet::all(), 1e-2);
    const double best = std::max({fp, api, emb});
    const double gap_full = full - best, gap_pair = pair - std::max(fp, api);
    Outcome o;
    o.pass = gap_full >= 15.0 && gap_pair >= 10.0 && run.seconds < 900.0;
    o.detail = "at FPR 1e-2: full " + fmt("%.2f", full) + " vs best single " + fmt("%.2f", best) + " (+" +
               fmt("%.2f", gap_full) + ", need 15); fp+api " + fmt("%.2f", pair) + " vs " +
               fmt("%.2f", std::max(fp, api)) + " (+" + fmt("%.2f", gap_pair) + ", need 10); " +
               fmt("%.0f s", run.seconds);
    return o;
}

// Shapes read back from the saved checkpoint files.
Outcome architecture(const FullRun& run, const fs::path& dir) {
    std::vector<std::string> problems;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) problems.push_back(what);
    };
    auto shapes = [](const nn::CheckpointData& ck) {
        std::map<std::string, std::pair<Eigen::Index, Eigen::Index>> s;
        for (const auto& b : ck.blocks) s[b.name] = {b.value.rows(), b.value.cols()};
        return s;
    };
    auto check_cnn = [&](const std::string& file, std::size_t v, std::size_t n, std::size_t h) {
        const auto ck = nn::load_checkpoint_file(dir / file);
        auto s = shapes(ck);
        const auto& cfg = ck.manifest["config"];
        expect(cfg["vocab"] == v && cfg["seq_len"] == n && cfg["embed_dim"] == h, file + ": V/N/H config");
        expect(s["param:embedding.weight"] == std::pair<Eigen::Index, Eigen::Index>(v + 2, h), file + ": embedding");
        for (std::size_t k : {2, 3, 4, 5}) {
            const std::string c = "param:conv_k" + std::to_string(k);
            expect(s[c + ".weight"] == std::pair<Eigen::Index, Eigen::Index>(k * h, 128), file + ": " + c);
        }
        const std::vector<std::size_t> widths{512, 1024, 512, 256, 128};
        for (std::size_t l = 1; l < widths.size(); ++l) {
            const std::string fc = "param:fc" + std::to_string(l) + ".weight";
            expect(s[fc] == std::pair<Eigen::Index, Eigen::Index>(widths[l - 1], widths[l]), file + ": " + fc);
            expect(s.count("param:bn" + std::to_string(l) + ".gamma") == 1, file + ": batchnorm " + std::to_string(l));
        }
    };
    check_cnn("fp.mfck", 150, 100, 64);
    check_cnn("api.mfck", 600, 150, 96);

    {
        const auto ck = nn::load_checkpoint_file(dir / "emb.mfck");
        auto s = shapes(ck);
        const std::vector<std::size_t> widths{768, 512, 512, 128};
        for (std::size_t l = 1; l < widths.size(); ++l) {
            const std::string fc = "param:fc" + std::to_string(l) + ".weight";
            expect(s[fc] == std::pair<Eigen::Index, Eigen::Index>(widths[l - 1], widths[l]), "emb: " + fc);
            expect(s.count("param:ln" + std::to_string(l) + ".gamma") == 1, "emb: layernorm " + std::to_string(l));
        }
        std::size_t elu = 0, dropout = 0;
        for (const auto& layer : ck.manifest["layers"]) {
            if (layer["kind"] == "activation" && layer["hyper"]["function"] == "elu") ++elu;
            if (layer["kind"] == "dropout" && layer["hyper"]["rate"] == 0.05) ++dropout;
        }
        expect(elu == 3 && dropout == 3, "emb: ELU and dropout 0.05 blocks");
    }
    {
        const auto ck = nn::load_checkpoint_file(dir / "meta_fp+api+emb.mfck");
        auto s = shapes(ck);
        const std::vector<std::size_t> widths{384, 384, 128, 64, 16};
        for (std::size_t l = 1; l < widths.size(); ++l) {
            const std::string fc = "param:fc" + std::to_string(l) + ".weight";
            expect(s[fc] == std::pair<Eigen::Index, Eigen::Index>(widths[l - 1], widths[l]), "meta: " + fc);
        }
        expect(s["param:out.weight"] == std::pair<Eigen::Index, Eigen::Index>(16, 1), "meta: output layer");
    }

    // Fusion vectors of the test rows that carry every modality.
    const auto fused = eval::fusion_rows(run.test, ModalitySet::all());
    bool in_unit = fused.x.cols() == 384 && fused.rows() > 0;
    in_unit = in_unit && fused.x.minCoeff() >= 0.0 && fused.x.maxCoeff() <= 1.0;
    expect(in_unit, "fusion vector width 384 within [0,1]");

    Outcome o;
    o.pass = problems.empty();
    o.detail = o.pass ? "fp (150,100,64), api (600,150,96), kernels 2-5 x 128, FFNN 1024-512-256-128, "
                        "Ember 512-512-128 ELU+layernorm+dropout 0.05, meta 384-128-64-16, fusion 384 in [0,1] over " +
                            std::to_string(fused.rows()) + " rows"
                      : problems.front() + (problems.size() > 1 ? " (+" + std::to_string(problems.size() - 1) + ")" : "");
    return o;
}

Outcome coverage(const FullRun& run, const fs::path& out) {
    const auto& reports = run.features.reports;
    const std::size_t distinct = api::emulation_stats(reports).distinct_apis;
    std::vector<std::size_t> sizes{25, 50, 100, 200, 400};
    sizes.push_back(distinct);
    const std::string csv = corpus::coverage_csv(reports, sizes);
    write_file_text(out / "coverage.csv", csv);
    std::cerr << csv;

    std::vector<double> cov;
    for (std::size_t v : sizes) cov.push_back(api::vocab_coverage(api::build_api_vocab(reports, v), reports));
    bool monotone = true, diminishing = true;
    for (std::size_t i = 1; i < cov.size(); ++i) monotone = monotone && cov[i] >= cov[i - 1];
    // Gain per doubling of V shrinks over the doubling part of the ladder.
    for (std::size_t i = 2; i + 1 < cov.size(); ++i) diminishing = diminishing && cov[i] - cov[i - 1] <= cov[i - 1] - cov[i - 2];
    const bool full = cov.back() == 100.0;
    std::string ladder;
    for (std::size_t i = 0; i < sizes.size(); ++i) ladder += (i ? ", " : "") + std::to_string(sizes[i]) + ":" + fmt("%.2f", cov[i]);
    return {monotone && full && diminishing, ladder + " (distinct " + std::to_string(distinct) + ")" +
                                                 (monotone ? "" : ", not monotone") + (diminishing ? "" : ", gains grow")};
}

Outcome calibration(const FullRun& run) {
    const auto& p = run.trained.pipeline;
    const auto valid = eval::score_set(p, run.valid, ModalitySet::all());
    const auto test = eval::score_set(p, run.test, ModalitySet::all());
    std::vector<double> neg;
    for (std::size_t i = 0; i < valid.size(); ++i)
        if (run.valid.labels[i] == 0.0) neg.push_back(valid[i]);
    const double target = 0.0025;
    const double t = eval::threshold_for_fpr(neg, target);
    const double vfpr = eval::confusion_at(valid, run.valid.labels, t).fpr();
    const auto tc = eval::confusion_at(test, run.test.labels, t);
    const double tfpr = tc.fpr();
    return {vfpr <= target && tfpr <= 3.0 * target,
            "threshold " + fmt("%.6f", t) + ", validation FPR " + fmt("%.4f%%", 100 * vfpr) + " (<= 0.25%), test FPR " +
                fmt("%.4f%%", 100 * tfpr) + " (<= 0.75%), test detection " +
                fmt("%.2f%%", 100.0 * static_cast<double>(tc.tp) / static_cast<double>(tc.tp + tc.fn))};
}

// ------------------------------------------------------------ criterion 8

// Corpus, features, checkpoints and reports of one reduced run, all on disk.
void small_run(const fs::path& dir, std::size_t jobs) {
    fs::remove_all(dir);
    corpus::SynthSpec spec;
    spec.train = 400;
    spec.valid = 150;
    spec.test = 150;
    corpus::write_corpus(corpus::generate_synthetic_corpus(spec), dir / "corpus");
    const auto records = corpus::load_manifest(dir / "corpus/manifest.tsv");
    const auto f = corpus::featurize_corpus(records, dir / "corpus", {}, jobs);
    write_file_bytes(dir / "dataset.mfds", f.dataset.encode());
    f.state.save(dir / "featurizer");
    const auto tr = f.dataset.split(corpus::Split::train), va = f.dataset.split(corpus::Split::valid),
               te = f.dataset.split(corpus::Split::test);
    eval::HybridConfig cfg;
    cfg.module_plan.epochs = 2;
    cfg.meta_plan.epochs = 4;
    auto trained = eval::train_hybrid(tr, va, cfg);
    trained.pipeline.featurizer_hashes = f.dataset.featurizer_hashes;
    trained.pipeline.save(dir / "pipeline");
    for (const auto& [tag, h] : trained.module_history) write_file_text(dir / ("history_" + tag + ".csv"), h.to_csv());
    const auto rtr = eval::represent(trained.pipeline, tr), rva = eval::represent(trained.pipeline, va),
               rte = eval::represent(trained.pipeline, te);
    eval::ExperimentConfig ecfg;
    ecfg.meta_plan = cfg.meta_plan;
    ecfg.meta_plan.seed = 5;
    const auto exp = eval::fusion_experiment(trained.pipeline, rtr, rva, rte, ecfg);
    write_file_text(dir / "grid.csv", exp.grid_csv());
    write_file_text(dir / "meta_comparison.csv", exp.comparison_csv());
    const auto pred = trained.pipeline.predict(te.batch);
    write_file_text(dir / "report.csv", eval::evaluate(pred.score, te.labels, 0.98, te.families).to_csv());
}

Outcome determinism(const fs::path& out) {
    const fs::path a = out / "determinism_a", b = out / "determinism_b";
    small_run(a, 1);
    small_run(b, 2);
    std::set<fs::path> files;
    for (const auto& root : {a, b})
        for (const auto& e : fs::recursive_directory_iterator(root))
            if (e.is_regular_file()) files.insert(fs::relative(e.path(), root));
    std::size_t differ = 0, checkpoints = 0;
    std::string first;
    for (const auto& f : files) {
        checkpoints += f.extension() == ".mfck";
        if (!fs::exists(a / f) || !fs::exists(b / f) || read_file_bytes(a / f) != read_file_bytes(b / f)) {
            if (!differ++) first = f.string();
        }
    }
    return {differ == 0 && checkpoints >= 10,
            std::to_string(files.size()) + " files (" + std::to_string(checkpoints) + " checkpoints) compared, " +
                std::to_string(differ) + " differ" + (first.empty() ? "" : ", first " + first)};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
    fs::create_directories(out);
    std::map<int, std::pair<std::string, Outcome>> results;
    auto run = [&](int id, const std::string& name, const std::function<Outcome()>& f) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cerr << "[" << id << "] " << name << " " << (o.pass ? "PASS" : "FAIL") << fmt(" (%.1f s)", since(t0)) << "\n";
        results[id] = {name, o};
    };

    const std::string only = argc > 2 ? argv[2] : "";
    if (only == "fuzz") {
        const auto o = fuzz();
        std::cout << (o.pass ? "PASS " : "FAIL ") << o.detail << "\n";
        return o.pass ? 0 : 1;
    }
    run(2, "gradient suite", gradient_suite);
    run(3, "metric oracles", metric_oracles);
    run(9, "fuzz robustness", fuzz);

    std::optional<FullRun> full;
    run(5, "fusion superiority", [&] {
        full = full_run(out);
        return fusion_superiority(*full);
    });
    auto needs_full = [&](auto f) {
        return [&, f]() -> Outcome {
            if (!full) return {false, "full run unavailable"};
            return f();
        };
    };
    run(4, "architecture conformance", needs_full([&] { return architecture(*full, out / "pipeline"); }));
    run(6, "vocabulary coverage", needs_full([&] { return coverage(*full, out); }));
    run(7, "threshold calibration", needs_full([&] { return calibration(*full); }));
    run(8, "determinism", [&] { return determinism(out); });

    bool all = true;
    for (const auto& [id, r] : results) all = all && r.second.pass;
    results[1] = {"property checks stand in for full-scale results",
                  {all, all ? "criteria 2-9 ran and passed" : "a substitute criterion failed"}};

    for (const auto& [id, r] : results)
        std::cout << (r.second.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << r.first << "): " << r.second.detail
                  << "\n";
    return all ? 0 : 1;
}
