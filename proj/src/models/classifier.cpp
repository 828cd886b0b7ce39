#include "malfuse/models/classifier.hpp"

#include <cstring>

#include "malfuse/errors.hpp"
#include "malfuse/hash.hpp"
#include "malfuse/models/early_modules.hpp"
#include "malfuse/models/meta_model.hpp"
#include "malfuse/nn/activations.hpp"

namespace mf::models {

using nlohmann::json;

void Classifier::zero_grad() {
    for (auto& p : params()) p.grad->setZero();
}

void Classifier::prepare(const nn::Tensor2D&) {}

std::vector<double> Classifier::predict(const nn::Tensor2D& x) {
    const nn::Tensor2D z = logits(x, nn::Mode::eval);
    std::vector<double> out(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) out[static_cast<std::size_t>(i)] = nn::sigmoid(z(i, 0));
    return out;
}

void Classifier::check_input(const nn::Tensor2D& x) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim()) {
        throw DimensionError(kind() + ": expected input width " + std::to_string(input_dim()) + ", got " +
                             std::to_string(x.cols()));
    }
}

json describe_layer(const nn::Layer& layer) {
    return {{"name", layer.name()},
            {"kind", std::string(nn::to_string(layer.kind()))},
            {"input_dim", layer.input_dim()},
            {"output_dim", layer.output_dim()},
            {"hyper", layer.hyper()}};
}

std::uint64_t parameter_hash(Classifier& model) {
    std::uint64_t h = kFnvOffset;
    auto mix = [&](const std::string& name, const nn::Tensor2D& t) {
        h = fnv1a64(name, h);
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            const float f = static_cast<float>(t.data()[i]);
            std::uint8_t raw[4];
            std::memcpy(raw, &f, 4);
            h = fnv1a64(std::span<const std::uint8_t>(raw, 4), h);
        }
    };
    for (const auto& p : model.params()) mix(p.name, *p.value);
    for (const auto& b : model.buffers()) mix(b.name, *b.value);
    return h;
}

nn::CheckpointData to_checkpoint(Classifier& model, const CheckpointInfo& info) {
    nn::CheckpointData data;
    data.manifest = {{"format", "malfuse-model"},
                     {"kind", model.kind()},
                     {"config", model.config()},
                     {"layers", model.architecture()},
                     {"featurizer_hash", info.featurizer_hash},
                     {"pipeline", info.pipeline}};
    for (const auto& p : model.params()) data.blocks.push_back({"param:" + p.name, *p.value});
    for (const auto& b : model.buffers()) data.blocks.push_back({"buffer:" + b.name, *b.value});
    return data;
}

namespace {

std::unique_ptr<Classifier> instantiate(const std::string& kind, const json& config) {
    try {
        if (kind == "sequence_cnn") return std::make_unique<SequenceCnn>(SequenceCnnConfig::from_json(config), 0);
        if (kind == "ember_ffnn") return std::make_unique<EmberFfnn>(EmberFfnnConfig::from_json(config), 0);
        if (kind == "meta_model") {
            return std::make_unique<MetaModel>(ModalitySet::parse(config.at("subset").get<std::string>()),
                                               MetaModelConfig::from_json(config), 0);
        }
    } catch (const json::exception& e) {
        throw CompatibilityError("checkpoint: malformed model config: " + std::string(e.what()));
    } catch (const ConfigurationError& e) {
        throw CompatibilityError(std::string("checkpoint: invalid model config: ") + e.what());
    }
    throw CompatibilityError("checkpoint: unknown model kind '" + kind + "'");
}

}  // namespace

std::unique_ptr<Classifier> from_checkpoint(const nn::CheckpointData& data) {
    const json& m = data.manifest;
    if (!m.is_object() || m.value("format", "") != "malfuse-model" || !m.contains("kind") || !m["kind"].is_string() ||
        !m.contains("config"))
        throw CompatibilityError("checkpoint: manifest is not a model manifest");
    auto model = instantiate(m["kind"].get<std::string>(), m["config"]);

    std::vector<std::pair<std::string, nn::Tensor2D*>> slots;
    for (const auto& p : model->params()) slots.emplace_back("param:" + p.name, p.value);
    for (const auto& b : model->buffers()) slots.emplace_back("buffer:" + b.name, b.value);
    if (slots.size() != data.blocks.size()) {
        throw CompatibilityError("checkpoint: expected " + std::to_string(slots.size()) + " tensor blocks, found " +
                                 std::to_string(data.blocks.size()));
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto& block = data.blocks[i];
        nn::Tensor2D& dst = *slots[i].second;
        if (block.name != slots[i].first || block.value.rows() != dst.rows() || block.value.cols() != dst.cols()) {
            throw CompatibilityError("checkpoint: block '" + block.name + "' does not match model tensor '" +
                                     slots[i].first + "'");
        }
        dst = block.value;
    }
    return model;
}

void save_model(const std::filesystem::path& path, Classifier& model, const CheckpointInfo& info) {
    nn::save_checkpoint_file(path, to_checkpoint(model, info));
}

LoadedModel load_model(const std::filesystem::path& path, const std::string& expected_featurizer_hash) {
    const nn::CheckpointData data = nn::load_checkpoint_file(path);
    LoadedModel out;
    out.model = from_checkpoint(data);
    out.info.featurizer_hash = data.manifest.value("featurizer_hash", "");
    out.info.pipeline = data.manifest.value("pipeline", json(nullptr));
    if (!expected_featurizer_hash.empty() && out.info.featurizer_hash != expected_featurizer_hash) {
        throw CompatibilityError("checkpoint '" + path.string() + "' was trained with featurizer hash " +
                                 (out.info.featurizer_hash.empty() ? "<none>" : out.info.featurizer_hash) +
                                 " but the current featurizer hash is " + expected_featurizer_hash);
    }
    return out;
}

}  // namespace mf::models
