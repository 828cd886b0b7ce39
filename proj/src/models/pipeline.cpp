#include "malfuse/models/pipeline.hpp"

#include <cmath>
#include <limits>

#include "malfuse/binary_io.hpp"
#include "malfuse/errors.hpp"

namespace mf::models {

using nlohmann::json;
using nn::Tensor2D;

namespace {

constexpr Eigen::Index kChunk = 256;

std::size_t idx(Modality m) { return static_cast<std::size_t>(m); }

// Eval-mode representations and head scores over the selected rows, in
// bounded chunks to cap activation memory.
void run_module(EarlyModule& module, const ModalityInput& in, Tensor2D& reps, std::vector<double>& scores) {
    std::vector<Eigen::Index> rows;
    for (std::size_t r = 0; r < in.present.size(); ++r)
        if (in.present[r]) rows.push_back(static_cast<Eigen::Index>(r));
    for (std::size_t start = 0; start < rows.size(); start += kChunk) {
        const std::size_t n = std::min<std::size_t>(kChunk, rows.size() - start);
        Tensor2D x(static_cast<Eigen::Index>(n), in.x.cols());
        for (std::size_t i = 0; i < n; ++i) x.row(static_cast<Eigen::Index>(i)) = in.x.row(rows[start + i]);
        const ModuleOutput out = module.forward(x, nn::Mode::eval);
        for (std::size_t i = 0; i < n; ++i) {
            reps.row(rows[start + i]) = out.representation.row(static_cast<Eigen::Index>(i));
            scores[static_cast<std::size_t>(rows[start + i])] = out.score[i];
        }
    }
}

}  // namespace

FusionVector early_fusion(const std::array<const Tensor2D*, 3>& reps, ModalitySet subset) {
    if (subset.empty()) throw ConfigurationError("early fusion: empty module subset");
    Eigen::Index rows = -1;
    for (auto m : subset.members()) {
        const Tensor2D* r = reps[idx(m)];
        if (!r) {
            throw ConfigurationError("early fusion: module '" + std::string(to_string(m)) +
                                     "' is part of subset " + subset.signature() + " but absent");
        }
        if (r->cols() != static_cast<Eigen::Index>(kRepresentationDim))
            throw DimensionError("early fusion: representation of '" + std::string(to_string(m)) + "' must be 128 wide");
        if (rows >= 0 && r->rows() != rows) throw DimensionError("early fusion: representation row counts differ");
        rows = r->rows();
    }
    FusionVector f;
    f.subset = subset;
    f.values.resize(rows, static_cast<Eigen::Index>(subset.fusion_dim()));
    Eigen::Index col = 0;
    for (auto m : subset.members()) {
        f.values.middleCols(col, kRepresentationDim) = *reps[idx(m)];
        col += kRepresentationDim;
    }
    return f;
}

std::vector<double> meta_predict(MetaModel& psi, const FusionVector& fusion) {
    if (!(psi.subset() == fusion.subset)) {
        throw ConfigurationError("meta-model trained on " + psi.subset().signature() + " cannot score a " +
                                 fusion.subset.signature() + " fusion vector");
    }
    return psi.predict(fusion.values);
}

// ------------------------------------------------------------- FusionBatch

ModalitySet FusionBatch::available(std::size_t row) const {
    ModalitySet s;
    for (auto m : kModalityOrder) {
        const auto& in = inputs[idx(m)];
        if (in && in->present[row]) s.add(m);
    }
    return s;
}

void FusionBatch::validate() const {
    for (auto m : kModalityOrder) {
        const auto& in = inputs[idx(m)];
        if (!in) continue;
        if (in->present.size() != rows || static_cast<std::size_t>(in->x.rows()) != rows) {
            throw DimensionError("fusion batch: '" + std::string(to_string(m)) + "' input has " +
                                 std::to_string(in->x.rows()) + " rows, batch has " + std::to_string(rows));
        }
    }
}

// ---------------------------------------------------------- FusionPipeline

void FusionPipeline::set_module(std::unique_ptr<EarlyModule> module) {
    const Modality m = module->modality();
    modules_[idx(m)] = std::move(module);
}

ModalitySet FusionPipeline::loaded_modules() const {
    ModalitySet s;
    for (auto m : kModalityOrder)
        if (modules_[idx(m)]) s.add(m);
    return s;
}

void FusionPipeline::set_meta(ModalitySet subset, std::unique_ptr<MetaModel> psi) {
    if (!(psi->subset() == subset)) {
        throw ConfigurationError("meta-model for subset " + psi->subset().signature() +
                                 " cannot serve the " + subset.signature() + " slot");
    }
    metas_[subset.bits()] = std::move(psi);
}

MetaModel* FusionPipeline::meta(ModalitySet subset) const {
    const auto it = metas_.find(subset.bits());
    return it == metas_.end() ? nullptr : it->second.get();
}

std::vector<ModalitySet> FusionPipeline::meta_subsets() const {
    std::vector<ModalitySet> out;
    for (const auto& s : all_subsets())
        if (meta(s)) out.push_back(s);
    return out;
}

std::array<Tensor2D, 3> FusionPipeline::representations(const FusionBatch& batch) const {
    batch.validate();
    std::array<Tensor2D, 3> reps;
    const auto rows = static_cast<Eigen::Index>(batch.rows);
    for (auto m : kModalityOrder) {
        reps[idx(m)] = Tensor2D::Zero(rows, kRepresentationDim);
        if (!modules_[idx(m)] || !batch.inputs[idx(m)]) continue;
        std::vector<double> unused(batch.rows);
        run_module(*modules_[idx(m)], *batch.inputs[idx(m)], reps[idx(m)], unused);
    }
    return reps;
}

FusionVector FusionPipeline::early_fusion(const FusionBatch& batch, ModalitySet subset) const {
    for (auto m : subset.members()) {
        if (!modules_[idx(m)])
            throw ConfigurationError("pipeline: module '" + std::string(to_string(m)) + "' is not loaded");
    }
    for (std::size_t r = 0; r < batch.rows; ++r) {
        if (!((batch.available(r) & subset) == subset))
            throw InputError("pipeline: row " + std::to_string(r) + " lacks a modality of subset " + subset.signature());
    }
    const auto reps = representations(batch);
    return models::early_fusion({&reps[0], &reps[1], &reps[2]}, subset);
}

PipelinePrediction FusionPipeline::predict(const FusionBatch& batch, ModalitySet requested) const {
    batch.validate();
    PipelinePrediction out;
    out.score.assign(batch.rows, 0.0);
    out.routed.assign(batch.rows, ModalitySet{});
    const auto rows = static_cast<Eigen::Index>(batch.rows);

    std::array<Tensor2D, 3> reps;
    for (auto m : kModalityOrder) {
        out.module_score[idx(m)].assign(batch.rows, std::numeric_limits<double>::quiet_NaN());
        reps[idx(m)] = Tensor2D::Zero(rows, kRepresentationDim);
        if (!requested.contains(m) || !modules_[idx(m)] || !batch.inputs[idx(m)]) continue;
        run_module(*modules_[idx(m)], *batch.inputs[idx(m)], reps[idx(m)], out.module_score[idx(m)]);
    }

    std::vector<ModalitySet> available(batch.rows);
    for (std::size_t r = 0; r < batch.rows; ++r) available[r] = batch.available(r);
    out.score = route(reps, available, requested, &out.routed);
    return out;
}

std::vector<double> FusionPipeline::route(const std::array<Tensor2D, 3>& reps, const std::vector<ModalitySet>& available,
                                          ModalitySet requested, std::vector<ModalitySet>* routed) const {
    const std::size_t rows = available.size();
    std::vector<double> score(rows, 0.0);
    if (routed) routed->assign(rows, ModalitySet{});
    const ModalitySet usable = requested & loaded_modules();
    std::map<std::uint8_t, std::vector<Eigen::Index>> groups;
    for (std::size_t r = 0; r < rows; ++r) {
        const ModalitySet s = available[r] & usable;
        if (routed) (*routed)[r] = s;
        if (!s.empty()) groups[s.bits()].push_back(static_cast<Eigen::Index>(r));
    }
    for (const auto& [bits, members] : groups) {
        const ModalitySet subset = ModalitySet::from_bits(bits);
        MetaModel* psi = meta(subset);
        if (!psi) throw ConfigurationError("pipeline: no meta-model for module subset " + subset.signature());
        std::array<Tensor2D, 3> picked;
        for (auto m : subset.members()) {
            picked[idx(m)].resize(static_cast<Eigen::Index>(members.size()), kRepresentationDim);
            for (std::size_t i = 0; i < members.size(); ++i)
                picked[idx(m)].row(static_cast<Eigen::Index>(i)) = reps[idx(m)].row(members[i]);
        }
        const auto fused = models::early_fusion({&picked[0], &picked[1], &picked[2]}, subset);
        const auto scores = meta_predict(*psi, fused);
        for (std::size_t i = 0; i < members.size(); ++i) score[static_cast<std::size_t>(members[i])] = scores[i];
    }
    return score;
}

// ---------------------------------------------------------------- storage

json order_manifest() {
    json order = json::array();
    for (auto m : kModalityOrder) order.push_back(std::string(to_string(m)));
    return order;
}

void check_order(const json& order) {
    if (order != order_manifest()) {
        throw ConfigurationError("concatenation order " + order.dump() + " differs from the required " +
                                 order_manifest().dump());
    }
}

void FusionPipeline::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    json manifest = {{"format", "malfuse-pipeline"}, {"version", 1}, {"order", order_manifest()},
                     {"threshold", threshold}, {"featurizer_hashes", featurizer_hashes}};
    json modules = json::object();
    for (auto m : kModalityOrder) {
        if (!modules_[idx(m)]) continue;
        const std::string tag(to_string(m));
        const std::string file = tag + ".mfck";
        CheckpointInfo info;
        const auto it = featurizer_hashes.find(tag);
        if (it != featurizer_hashes.end()) info.featurizer_hash = it->second;
        info.pipeline = {{"module", tag}, {"order", order_manifest()}};
        save_model(dir / file, *modules_[idx(m)], info);
        modules[tag] = file;
    }
    json metas = json::object();
    for (const auto& s : meta_subsets()) {
        const std::string file = "meta_" + s.signature() + ".mfck";
        CheckpointInfo info;
        info.pipeline = {{"subset", s.signature()}, {"order", order_manifest()}};
        save_model(dir / file, *meta(s), info);
        metas[s.signature()] = file;
    }
    manifest["modules"] = modules;
    manifest["meta_models"] = metas;
    write_file_text(dir / "pipeline.json", manifest.dump(2) + "\n");
}

FusionPipeline FusionPipeline::load(const std::filesystem::path& dir,
                                    const std::map<std::string, std::string>& expected_hashes) {
    json manifest;
    try {
        manifest = json::parse(read_file_text(dir / "pipeline.json"));
    } catch (const json::parse_error& e) {
        throw CompatibilityError("pipeline.json: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "malfuse-pipeline" || manifest.value("version", 0) != 1)
        throw CompatibilityError("pipeline.json: unsupported format or version");
    check_order(manifest.at("order"));

    FusionPipeline p;
    p.threshold = manifest.value("threshold", kDefaultThreshold);
    p.featurizer_hashes = manifest.value("featurizer_hashes", std::map<std::string, std::string>{});
    for (const auto& [tag, file] : manifest.at("modules").items()) {
        const Modality m = modality_from_string(tag);
        std::string expected;
        if (auto it = expected_hashes.find(tag); it != expected_hashes.end()) expected = it->second;
        auto loaded = load_model(dir / file.get<std::string>(), expected);
        auto* early = dynamic_cast<EarlyModule*>(loaded.model.get());
        if (!early || early->modality() != m)
            throw ConfigurationError("pipeline: checkpoint " + file.get<std::string>() + " is not a '" + tag + "' module");
        loaded.model.release();
        p.set_module(std::unique_ptr<EarlyModule>(early));
    }
    for (const auto& [sig, file] : manifest.at("meta_models").items()) {
        auto loaded = load_model(dir / file.get<std::string>());
        if (loaded.info.pipeline.is_object() && loaded.info.pipeline.contains("order"))
            check_order(loaded.info.pipeline["order"]);
        auto* psi = dynamic_cast<MetaModel*>(loaded.model.get());
        if (!psi) throw ConfigurationError("pipeline: checkpoint " + file.get<std::string>() + " is not a meta-model");
        loaded.model.release();
        p.set_meta(ModalitySet::parse(sig), std::unique_ptr<MetaModel>(psi));
    }
    return p;
}

}  // namespace mf::models
