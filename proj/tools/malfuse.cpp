// malfuse: command-line front end for the hybrid classifier.
//
//   malfuse synth     --out corpus/ --seed 0
//   malfuse featurize --manifest corpus/manifest.tsv --out data/ --jobs 4
//   malfuse train     --data data/ --out model/ --seed 0
//   malfuse eval      --data data/ --model model/ --out eval/
//   malfuse predict   --data data/ --model model/ --out pred/
//   malfuse report    --data data/ --model model/ --out report/
//
// Every option can also come from a TOML file given with --config; a
// section per subcommand ([train], [featurize], ...) holds its keys. Flags
// on the command line take precedence. Exit codes: 0 ok, 1 usage,
// 2 data error, 3 numeric failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "malfuse/binary_io.hpp"
#include "malfuse/corpus/dataset.hpp"
#include "malfuse/corpus/manifest.hpp"
#include "malfuse/corpus/synth.hpp"
#include "malfuse/errors.hpp"
#include "malfuse/eval/experiment.hpp"
#include "malfuse/eval/hybrid.hpp"
#include "malfuse/eval/metrics.hpp"
#include "malfuse/hash.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mf;
using models::ModalitySet;

namespace {

constexpr int kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3;

constexpr char kDatasetFile[] = "dataset.mfds";
constexpr char kFeaturizerDir[] = "featurizer";
constexpr char kPipelineDir[] = "pipeline";
constexpr char kRunManifest[] = "run_manifest.json";

void log(const std::string& msg) { std::cerr << msg << "\n"; }

// Content hash of every file under dir except the run manifest itself.
void write_run_manifest(const fs::path& dir, const std::string& command, const json& settings) {
    std::set<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir);
        if (rel != kRunManifest) files.insert(rel);
    }
    json listed = json::array();
    for (const auto& rel : files) {
        const auto bytes = read_file_bytes(dir / rel);
        listed.push_back({{"path", rel.generic_string()}, {"bytes", bytes.size()}, {"fnv1a64", to_hex(fnv1a64(bytes))}});
    }
    const json manifest = {{"command", command}, {"settings", settings}, {"files", listed}};
    write_file_text(dir / kRunManifest, manifest.dump(2) + "\n");
}

ModalitySet parse_modules(const std::vector<std::string>& names) {
    ModalitySet s;
    for (const auto& n : names)
        for (auto m : ModalitySet::parse(n).members()) s.add(m);
    if (s.empty()) throw ConfigurationError("module subset must not be empty");
    return s;
}

std::optional<corpus::Split> parse_split(const std::string& s) {
    if (s == "all") return std::nullopt;
    return corpus::split_from_string(s);
}

corpus::EncodedDataset load_dataset(const fs::path& data_dir) {
    const fs::path file = data_dir / kDatasetFile;
    if (!fs::exists(file)) throw InputError(file.string() + ": no such file (run featurize first)");
    return corpus::EncodedDataset::decode(read_file_bytes(file));
}

// Featurizer hashes must agree between the data and every loaded module.
models::FusionPipeline load_pipeline(const fs::path& model_dir, const corpus::EncodedDataset& data) {
    return models::FusionPipeline::load(model_dir / kPipelineDir, data.featurizer_hashes);
}

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);  // round-trips
    return buf;
}

eval::TrainPlan plan_from(std::size_t epochs, std::size_t batch, double lr, std::size_t patience,
                          const std::string& selection, eval::TrainPlan base) {
    base.epochs = epochs;
    base.batch_size = batch;
    base.learning_rate = lr;
    base.patience = patience;
    base.selection = selection == "valid_f1" ? eval::Selection::valid_f1 : eval::Selection::valid_loss;
    return base;
}

models::MetaModelConfig meta_from(const std::string& name) {
    if (name == "lr") return models::MetaModelConfig::logistic();
    if (name == "ffnn") return models::MetaModelConfig::ffnn_preset();
    if (name.rfind("ffnn-", 0) == 0 && name.size() == 6 && name[5] >= '2' && name[5] <= '5')
        return models::MetaModelConfig::ffnn_depth(static_cast<std::size_t>(name[5] - '0'));
    throw ConfigurationError("unknown meta-model '" + name + "' (lr, ffnn, ffnn-2 .. ffnn-5)");
}

// ------------------------------------------------------------------ synth

struct SynthOptions {
    fs::path out;
    corpus::SynthSpec spec;
    bool no_errors = false;
};

int run_synth(SynthOptions o) {
    o.spec.emulation_errors = !o.no_errors;
    const auto corpus = corpus::generate_synthetic_corpus(o.spec);
    fs::create_directories(o.out);
    corpus::write_corpus(corpus, o.out);
    log("synth: " + std::to_string(corpus.records.size()) + " samples, " + corpus::split_summary(corpus.records));
    write_run_manifest(o.out, "synth", o.spec.to_json());
    return kExitOk;
}

// -------------------------------------------------------------- featurize

struct FeaturizeOptions {
    fs::path manifest, base, out, featurizer, env_map;
    std::size_t jobs = 1;
    std::vector<std::string> modules{"fp", "api", "emb"};
    corpus::FeaturizerConfig config;
    std::vector<std::size_t> coverage_sizes{25, 50, 100, 200, 400, 600, 800};
};

int run_featurize(FeaturizeOptions o) {
    const ModalitySet enabled = parse_modules(o.modules);
    const auto records = corpus::load_manifest(o.manifest);
    log("featurize: " + std::to_string(records.size()) + " records, " + corpus::split_summary(records));
    if (!o.env_map.empty()) o.config.env_overrides = read_file_text(o.env_map);
    std::optional<corpus::FeaturizerState> state;
    if (!o.featurizer.empty()) state = corpus::FeaturizerState::load(o.featurizer);
    const fs::path base = o.base.empty() ? o.manifest.parent_path() : o.base;
    auto result = corpus::featurize_corpus(records, base, o.config, o.jobs, state ? &*state : nullptr);

    for (auto m : models::kModalityOrder) {
        if (enabled.contains(m)) continue;
        result.dataset.batch.inputs[static_cast<std::size_t>(m)].reset();
        result.dataset.featurizer_hashes.erase(std::string(models::to_string(m)));
    }

    fs::create_directories(o.out);
    write_file_bytes(o.out / kDatasetFile, result.dataset.encode());
    result.state.save(o.out / kFeaturizerDir);
    write_file_text(o.out / "emulation_stats.csv", api::emulation_stats(result.reports).to_csv());
    auto sizes = o.coverage_sizes;
    sizes.push_back(api::emulation_stats(result.reports).distinct_apis);
    std::sort(sizes.begin(), sizes.end());
    sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
    write_file_text(o.out / "coverage.csv", corpus::coverage_csv(result.reports, sizes));
    std::string diag = "sample_id\tmodality\tmessage\n";
    for (const auto& d : result.errors) diag += d.sample_id + "\t" + d.modality + "\t" + d.message + "\n";
    write_file_text(o.out / "diagnostics.tsv", diag);
    write_run_manifest(o.out, "featurize", {{"featurizer", result.state.config.to_json()},
                                            {"modules", enabled.signature()},
                                            {"hashes", result.dataset.featurizer_hashes}});

    for (std::size_t i = 0; i < 3; ++i) {
        const auto& in = result.dataset.batch.inputs[i];
        if (!in) continue;
        std::size_t present = 0;
        for (auto p : in->present) present += p;
        log("  " + std::string(models::to_string(static_cast<models::Modality>(i))) + ": " + std::to_string(present) +
            " of " + std::to_string(result.dataset.rows()) + " rows");
    }
    if (!result.errors.empty()) {
        for (const auto& d : result.errors) log("error: " + d.sample_id + " (" + d.modality + "): " + d.message);
        log("featurize: " + std::to_string(result.errors.size()) + " input file(s) could not be used");
        return kExitData;
    }
    return kExitOk;
}

// ------------------------------------------------------------------ train

struct TrainOptions {
    fs::path data, out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> modules{"fp", "api", "emb"};
    eval::TrainPlan module_plan = eval::HybridConfig::default_module_plan();
    eval::TrainPlan meta_plan = eval::HybridConfig::default_meta_plan();
    std::string selection = "valid_loss", meta_selection = "valid_loss";
    std::string meta = "ffnn";
    double threshold = models::FusionPipeline::kDefaultThreshold;
};

int run_train(TrainOptions o) {
    if (!o.seed) throw ConfigurationError("train: --seed is required");
    const auto data = load_dataset(o.data);
    eval::HybridConfig cfg;
    cfg.seed = *o.seed;
    cfg.modules = parse_modules(o.modules);
    cfg.module_plan = plan_from(o.module_plan.epochs, o.module_plan.batch_size, o.module_plan.learning_rate,
                                o.module_plan.patience, o.selection, cfg.module_plan);
    cfg.meta_plan = plan_from(o.meta_plan.epochs, o.meta_plan.batch_size, o.meta_plan.learning_rate,
                              o.meta_plan.patience, o.meta_selection, cfg.meta_plan);
    cfg.meta = meta_from(o.meta);
    for (auto m : cfg.modules.members())
        if (!data.batch.inputs[static_cast<std::size_t>(m)])
            throw InputError("train: dataset has no '" + std::string(models::to_string(m)) + "' inputs");

    const auto train = data.split(corpus::Split::train);
    const auto valid = data.split(corpus::Split::valid);
    if (train.size() == 0) throw InputError("train: dataset has no training rows");
    log("train: " + std::to_string(train.size()) + " train / " + std::to_string(valid.size()) + " valid rows, modules " +
        cfg.modules.signature());
    const auto t0 = std::chrono::steady_clock::now();
    auto result = eval::train_hybrid(train, valid, cfg);
    result.pipeline.threshold = o.threshold;
    for (auto m : cfg.modules.members()) {
        const std::string tag(models::to_string(m));
        if (auto it = data.featurizer_hashes.find(tag); it != data.featurizer_hashes.end())
            result.pipeline.featurizer_hashes[tag] = it->second;
    }

    fs::create_directories(o.out);
    result.pipeline.save(o.out / kPipelineDir);
    for (const auto& [tag, h] : result.module_history) {
        write_file_text(o.out / ("history_" + tag + ".csv"), h.to_csv());
        log("  " + tag + ": best epoch " + std::to_string(h.best_epoch) + " of " + std::to_string(h.records.size()));
    }
    for (const auto& [sig, h] : result.meta_history)
        write_file_text(o.out / ("history_meta_" + sig + ".csv"), h.to_csv());
    write_run_manifest(o.out, "train", cfg.to_json());
    log("train: done in " +
        std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) + " s");
    return kExitOk;
}

// ------------------------------------------------------------- eval/predict

struct ScoreOptions {
    fs::path data, model, out;
    std::string split = "test";
    std::vector<std::string> modules{"fp", "api", "emb"};
    std::optional<double> threshold;
};

int run_eval(const ScoreOptions& o) {
    const auto data = load_dataset(o.data);
    const auto pipeline = load_pipeline(o.model, data);
    const auto split = data.split(parse_split(o.split));
    const double threshold = o.threshold.value_or(pipeline.threshold);
    const auto pred = pipeline.predict(split.batch, parse_modules(o.modules));
    const auto report = eval::evaluate(pred.score, split.labels, threshold, split.families);
    fs::create_directories(o.out);
    write_file_text(o.out / "report.csv", report.to_csv());
    write_file_text(o.out / "report.txt", report.to_text());
    write_run_manifest(o.out, "eval", {{"split", o.split}, {"threshold", threshold}});
    std::cout << report.to_text();
    return kExitOk;
}

int run_predict(const ScoreOptions& o) {
    const auto data = load_dataset(o.data);
    const auto pipeline = load_pipeline(o.model, data);
    const auto split = data.split(parse_split(o.split));
    const double threshold = o.threshold.value_or(pipeline.threshold);
    const auto pred = pipeline.predict(split.batch, parse_modules(o.modules));
    std::string csv = "sample_id,fp,api,emb,fusion,routed,verdict\n";
    for (std::size_t r = 0; r < split.size(); ++r) {
        csv += split.ids[r];
        for (std::size_t m = 0; m < 3; ++m) csv += "," + fmt(pred.module_score[m][r]);
        csv += "," + fmt(pred.score[r]) + "," + pred.routed[r].signature() + "," +
               (pred.score[r] >= threshold ? "1" : "0") + "\n";
    }
    fs::create_directories(o.out);
    write_file_text(o.out / "predictions.csv", csv);
    write_run_manifest(o.out, "predict", {{"split", o.split}, {"threshold", threshold}});
    return kExitOk;
}

// ----------------------------------------------------------------- report

struct ReportOptions {
    fs::path data, model, out;
    std::vector<double> fpr{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
    bool comparison = false;
    std::optional<std::uint64_t> seed;
    eval::TrainPlan meta_plan = eval::HybridConfig::default_meta_plan();
};

int run_report(const ReportOptions& o) {
    if (o.comparison && !o.seed) throw ConfigurationError("report: --comparison needs --seed");
    const auto data = load_dataset(o.data);
    const auto pipeline = load_pipeline(o.model, data);
    const auto train = eval::represent(pipeline, data.split(corpus::Split::train));
    const auto valid = eval::represent(pipeline, data.split(corpus::Split::valid));
    const auto test = eval::represent(pipeline, data.split(corpus::Split::test));
    eval::ExperimentConfig cfg;
    cfg.fpr_grid = o.fpr;
    if (o.comparison) {
        cfg.meta_plan = o.meta_plan;
        cfg.meta_plan.seed = eval::derive_seed(*o.seed, 40);
    } else {
        cfg.comparison.clear();
    }
    const auto result = eval::fusion_experiment(pipeline, train, valid, test, cfg);

    fs::create_directories(o.out);
    write_file_text(o.out / "grid.csv", result.grid_csv());
    if (o.comparison) write_file_text(o.out / "meta_comparison.csv", result.comparison_csv());
    for (const char* f : {"emulation_stats.csv", "coverage.csv"})
        if (fs::exists(o.data / f)) fs::copy_file(o.data / f, o.out / f, fs::copy_options::overwrite_existing);
    write_run_manifest(o.out, "report", {{"fpr", o.fpr}, {"comparison", o.comparison}});
    std::cout << result.grid_csv();
    if (o.comparison) std::cerr << result.timing_csv();
    return kExitOk;
}

void add_plan_options(CLI::App* cmd, eval::TrainPlan& plan, std::string* selection, const std::string& prefix,
                      const std::string& what) {
    cmd->add_option("--" + prefix + "epochs", plan.epochs, "Epochs for " + what)->capture_default_str();
    cmd->add_option("--" + prefix + "batch-size", plan.batch_size, "Mini-batch size for " + what)
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--" + prefix + "learning-rate", plan.learning_rate, "Adam learning rate for " + what)
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--" + prefix + "patience", plan.patience, "Epochs without improvement before stopping " + what)
        ->capture_default_str();
    if (selection)
        cmd->add_option("--" + prefix + "selection", *selection, "Epoch selection metric for " + what)
            ->capture_default_str()
            ->check(CLI::IsMember({"valid_loss", "valid_f1"}));
}

void add_score_options(CLI::App* cmd, ScoreOptions& o) {
    cmd->add_option("--data", o.data, "Featurized data directory")->required();
    cmd->add_option("--model", o.model, "Model directory written by train")->required();
    cmd->add_option("--out", o.out, "Output directory")->required();
    cmd->add_option("--split", o.split, "Rows to score")
        ->capture_default_str()
        ->check(CLI::IsMember({"train", "valid", "test", "all"}));
    cmd->add_option("--modules", o.modules, "Modules to use (fp, api, emb)")->delimiter(',')->capture_default_str();
    cmd->add_option("--threshold", o.threshold, "Decision threshold (default: the model's, 0.98)")
        ->check(CLI::Range(0.0, 1.0));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid malware classifier over file paths, emulated API calls and static PE features"};
    app.set_config("--config", "", "TOML file with one [section] per subcommand; flags override it");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1, 1);

    SynthOptions synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
    c_synth->add_option("--out", synth.out, "Corpus directory")->required();
    c_synth->add_option("--seed", synth.spec.seed, "Generator seed")->capture_default_str();
    c_synth->add_option("--train", synth.spec.train, "Training samples")->capture_default_str();
    c_synth->add_option("--valid", synth.spec.valid, "Validation samples")->capture_default_str();
    c_synth->add_option("--test", synth.spec.test, "Test samples")->capture_default_str();
    c_synth->add_option("--malicious-fraction", synth.spec.malicious_fraction, "Share of malicious samples")
        ->capture_default_str();
    c_synth->add_option("--rho", synth.spec.rho, "Share of malicious samples marked only by the path/API pair")
        ->capture_default_str();
    c_synth->add_option("--path-strength", synth.spec.path_strength, "Share of other malicious samples with a path signal")
        ->capture_default_str();
    c_synth->add_option("--api-strength", synth.spec.api_strength, "Share with an API trigram signal")
        ->capture_default_str();
    c_synth->add_option("--static-strength", synth.spec.static_strength, "Share with a high-entropy block")
        ->capture_default_str();
    c_synth->add_option("--pair-pool", synth.spec.pair_pool, "Number of path/API pattern pairs")->capture_default_str();
    c_synth->add_option("--signal-patterns", synth.spec.signal_patterns, "Patterns per single-modality signal")
        ->capture_default_str();
    c_synth->add_option("--api-names", synth.spec.api_names, "Size of the API name catalogue")->capture_default_str();
    c_synth->add_flag("--no-emulation-errors", synth.no_errors, "Every emulation succeeds");

    FeaturizeOptions feat;
    auto* c_feat = app.add_subcommand("featurize", "Encode a manifest into model inputs");
    c_feat->add_option("--manifest", feat.manifest, "Manifest (TSV)")->required()->check(CLI::ExistingFile);
    c_feat->add_option("--base", feat.base, "Directory that manifest paths are relative to (default: its directory)");
    c_feat->add_option("--out", feat.out, "Output data directory")->required();
    c_feat->add_option("--jobs", feat.jobs, "Worker threads")->capture_default_str()->check(CLI::Range(1, 256));
    c_feat->add_option("--featurizer", feat.featurizer, "Reuse the vocabularies of an earlier featurize run")
        ->check(CLI::ExistingDirectory);
    c_feat->add_option("--env-map", feat.env_map, "Extra variable=replacement lines for path normalization")
        ->check(CLI::ExistingFile);
    c_feat->add_option("--modules", feat.modules, "Modalities to encode (fp, api, emb)")
        ->delimiter(',')
        ->capture_default_str();
    c_feat->add_option("--path-vocab", feat.config.path_vocab, "Byte vocabulary size")->capture_default_str();
    c_feat->add_option("--path-len", feat.config.path_len, "Path sequence length")->capture_default_str();
    c_feat->add_option("--api-vocab", feat.config.api_vocab, "API vocabulary size")->capture_default_str();
    c_feat->add_option("--api-len", feat.config.api_len, "API sequence length")->capture_default_str();
    c_feat->add_option("--coverage-sizes", feat.coverage_sizes, "Vocabulary sizes for coverage.csv")
        ->delimiter(',')
        ->capture_default_str();

    TrainOptions train;
    auto* c_train = app.add_subcommand("train", "Pre-train the modules and fit the meta-models");
    c_train->add_option("--data", train.data, "Featurized data directory")->required();
    c_train->add_option("--out", train.out, "Model directory")->required();
    c_train->add_option("--seed", train.seed, "Seed for initialization, shuffling and dropout")->required();
    c_train->add_option("--modules", train.modules, "Modules to train (fp, api, emb)")
        ->delimiter(',')
        ->capture_default_str();
    add_plan_options(c_train, train.module_plan, &train.selection, "", "module pre-training");
    add_plan_options(c_train, train.meta_plan, &train.meta_selection, "meta-", "meta-models");
    c_train->add_option("--meta", train.meta, "Meta-model: lr, ffnn, ffnn-2 .. ffnn-5")->capture_default_str();
    c_train->add_option("--threshold", train.threshold, "Decision threshold stored with the model")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));

    ScoreOptions ev;
    auto* c_eval = app.add_subcommand("eval", "Score a split and write an evaluation report");
    add_score_options(c_eval, ev);

    ScoreOptions pr;
    auto* c_pred = app.add_subcommand("predict", "Write per-sample module scores, fused score and verdict");
    add_score_options(c_pred, pr);

    ReportOptions rep;
    auto* c_rep = app.add_subcommand("report", "Detection-rate grid over module subsets at fixed FPR");
    c_rep->add_option("--data", rep.data, "Featurized data directory")->required();
    c_rep->add_option("--model", rep.model, "Model directory written by train")->required();
    c_rep->add_option("--out", rep.out, "Output directory")->required();
    c_rep->add_option("--fpr", rep.fpr, "False positive rate levels")->delimiter(',')->capture_default_str();
    c_rep->add_flag("--comparison", rep.comparison, "Also fit and compare LR and FFNN meta-models");
    c_rep->add_option("--seed", rep.seed, "Seed for the comparison");
    add_plan_options(c_rep, rep.meta_plan, nullptr, "meta-", "the comparison meta-models");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*c_synth) return run_synth(synth);
        if (*c_feat) return run_featurize(feat);
        if (*c_train) return run_train(train);
        if (*c_eval) return run_eval(ev);
        if (*c_pred) return run_predict(pr);
        if (*c_rep) return run_report(rep);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ConfigurationError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
