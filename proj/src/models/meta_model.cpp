#include "malfuse/models/meta_model.hpp"

#include "malfuse/errors.hpp"

namespace mf::models {

using nlohmann::json;

MetaModelConfig MetaModelConfig::logistic() { return {Kind::logistic_regression, {}}; }

MetaModelConfig MetaModelConfig::ffnn_preset() { return {Kind::ffnn, {384, 128, 64, 16}}; }

MetaModelConfig MetaModelConfig::ffnn_depth(std::size_t depth) {
    static const std::vector<std::size_t> widths{384, 128, 64, 16, 8};
    if (depth < 2 || depth > widths.size()) throw ConfigurationError("meta-model depth must be in [2, 5]");
    return {Kind::ffnn, std::vector<std::size_t>(widths.begin(), widths.begin() + static_cast<std::ptrdiff_t>(depth))};
}

std::string MetaModelConfig::label() const {
    return kind == Kind::logistic_regression ? "lr" : "ffnn-" + std::to_string(hidden.size());
}

json MetaModelConfig::to_json() const {
    return {{"meta_kind", kind == Kind::logistic_regression ? "logistic_regression" : "ffnn"}, {"hidden", hidden}};
}

MetaModelConfig MetaModelConfig::from_json(const json& j) {
    MetaModelConfig c;
    const auto kind = j.at("meta_kind").get<std::string>();
    if (kind == "logistic_regression") {
        c.kind = Kind::logistic_regression;
    } else if (kind == "ffnn") {
        c.kind = Kind::ffnn;
    } else {
        throw ConfigurationError("unknown meta-model kind '" + kind + "'");
    }
    c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    if (c.kind == Kind::logistic_regression && !c.hidden.empty())
        throw ConfigurationError("logistic regression has no hidden layers");
    if (c.kind == Kind::ffnn && c.hidden.empty()) throw ConfigurationError("ffnn meta-model needs hidden layers");
    return c;
}

MetaModel::MetaModel(ModalitySet subset, MetaModelConfig config, std::uint64_t seed)
    : subset_(subset), config_(std::move(config)) {
    if (subset_.empty()) throw ConfigurationError("meta-model: module subset must be non-empty");
    nn::Rng rng(seed);
    std::size_t in = subset_.fusion_dim();
    if (config_.kind == MetaModelConfig::Kind::ffnn) {
        for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
            const std::string id = std::to_string(i + 1);
            net_.emplace<nn::Linear>("fc" + id, in, config_.hidden[i]).init(rng);
            net_.emplace<nn::Activation>("relu" + id, nn::ActivationKind::relu, config_.hidden[i]);
            in = config_.hidden[i];
        }
    }
    auto& out = net_.emplace<nn::Linear>("out", in, 1);
    if (config_.kind == MetaModelConfig::Kind::logistic_regression) {
        out.weight().setZero();
    } else {
        out.init(rng);
    }
}

nn::Tensor2D MetaModel::logits(const nn::Tensor2D& x, nn::Mode mode) {
    check_input(x);
    return net_.forward(x, mode);
}

void MetaModel::backward(const nn::Tensor2D& grad_logits) { net_.backward(grad_logits); }

json MetaModel::config() const {
    json j = config_.to_json();
    j["subset"] = subset_.signature();
    return j;
}

json MetaModel::architecture() const {
    json out = json::array();
    for (std::size_t i = 0; i < net_.size(); ++i) out.push_back(describe_layer(net_.layer(i)));
    return out;
}

}  // namespace mf::models
