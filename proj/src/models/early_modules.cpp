#include "malfuse/models/early_modules.hpp"

#include "malfuse/errors.hpp"
#include "malfuse/features/token_sequence.hpp"

namespace mf::models {

using nlohmann::json;
using nn::ActivationKind;
using nn::Mode;
using nn::Tensor2D;

// ------------------------------------------------------------------ configs

SequenceCnnConfig SequenceCnnConfig::filepath_preset() { return {}; }

SequenceCnnConfig SequenceCnnConfig::apiseq_preset() {
    SequenceCnnConfig c;
    c.modality = Modality::apiseq;
    c.vocab = 600;
    c.seq_len = 150;
    c.embed_dim = 96;
    return c;
}

json SequenceCnnConfig::to_json() const {
    return {{"modality", std::string(to_string(modality))},
            {"vocab", vocab},
            {"seq_len", seq_len},
            {"embed_dim", embed_dim},
            {"kernels", kernels},
            {"channels", channels},
            {"widths", widths},
            {"dropout", dropout}};
}

SequenceCnnConfig SequenceCnnConfig::from_json(const json& j) {
    SequenceCnnConfig c;
    c.modality = modality_from_string(j.at("modality").get<std::string>());
    c.vocab = j.at("vocab").get<std::size_t>();
    c.seq_len = j.at("seq_len").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.kernels = j.at("kernels").get<std::vector<std::size_t>>();
    c.channels = j.at("channels").get<std::size_t>();
    c.widths = j.at("widths").get<std::vector<std::size_t>>();
    c.dropout = j.at("dropout").get<double>();
    c.validate();
    return c;
}

void SequenceCnnConfig::validate() const {
    if (modality == Modality::ember) throw ConfigurationError("sequence cnn: modality must be fp or api");
    if (vocab == 0 || seq_len == 0 || embed_dim == 0 || channels == 0 || kernels.empty())
        throw ConfigurationError("sequence cnn: sizes must be positive");
    if (widths.empty() || widths.back() != kRepresentationDim)
        throw ConfigurationError("sequence cnn: last dense width must be " + std::to_string(kRepresentationDim));
    for (auto k : kernels)
        if (k == 0 || k > seq_len) throw ConfigurationError("sequence cnn: kernel width out of range");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigurationError("sequence cnn: dropout must be in [0,1)");
}

json EmberFfnnConfig::to_json() const {
    return {{"input_dim", input_dim}, {"widths", widths}, {"dropout", dropout}, {"activation", "elu"},
            {"normalization", "layernorm"}};
}

EmberFfnnConfig EmberFfnnConfig::from_json(const json& j) {
    EmberFfnnConfig c;
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.widths = j.at("widths").get<std::vector<std::size_t>>();
    c.dropout = j.at("dropout").get<double>();
    c.validate();
    return c;
}

void EmberFfnnConfig::validate() const {
    if (input_dim == 0) throw ConfigurationError("ember ffnn: input dimension must be positive");
    if (widths.empty() || widths.back() != kRepresentationDim)
        throw ConfigurationError("ember ffnn: last width must be " + std::to_string(kRepresentationDim));
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigurationError("ember ffnn: dropout must be in [0,1)");
}

// ------------------------------------------------------------- EarlyModule

Tensor2D EarlyModule::representation(const Tensor2D& x, Mode mode) {
    Tensor2D z = hidden(x, mode);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = nn::sigmoid(z.data()[i]);
    return z;
}

ModuleOutput EarlyModule::forward(const Tensor2D& x, Mode mode) {
    const Tensor2D z = hidden(x, mode);
    const Tensor2D logit = tail_.forward(z, mode);
    ModuleOutput out;
    out.representation = z.unaryExpr([](double v) { return nn::sigmoid(v); });
    out.score.resize(static_cast<std::size_t>(logit.rows()));
    for (Eigen::Index i = 0; i < logit.rows(); ++i) out.score[static_cast<std::size_t>(i)] = nn::sigmoid(logit(i, 0));
    return out;
}

Tensor2D EarlyModule::logits(const Tensor2D& x, Mode mode) { return tail_.forward(hidden(x, mode), mode); }

void EarlyModule::backward(const Tensor2D& grad_logits) { backward_hidden(tail_.backward(grad_logits)); }

namespace {

void append_prefixed(std::vector<nn::ParamRef>& out, nn::Layer& layer) {
    for (auto p : layer.params()) {
        p.name = layer.name() + "." + p.name;
        out.push_back(p);
    }
}

void append_tail(nn::Sequential& tail, ActivationKind act, double dropout, std::uint64_t seed, nn::Rng& rng) {
    tail.emplace<nn::Activation>("head_act", act, kRepresentationDim);
    tail.emplace<nn::Dropout>("head_drop", dropout, kRepresentationDim, seed);
    tail.emplace<nn::Linear>("head", kRepresentationDim, 1).init(rng);
}

json sequential_layers(const nn::Sequential& s) {
    json out = json::array();
    for (std::size_t i = 0; i < s.size(); ++i) out.push_back(describe_layer(s.layer(i)));
    return out;
}

}  // namespace

// -------------------------------------------------------------- SequenceCnn

SequenceCnn::SequenceCnn(SequenceCnnConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    nn::Rng rng(seed);
    const std::size_t rows = config_.vocab + 2;  // pad and rare ids
    embed_ = std::make_unique<nn::Embedding>("embedding", rows, config_.embed_dim, config_.seq_len);
    embed_->init(rng);
    for (auto k : config_.kernels) {
        convs_.push_back(std::make_unique<nn::Conv1dMaxPool>("conv_k" + std::to_string(k), config_.embed_dim,
                                                              config_.channels, k, config_.seq_len));
        convs_.back()->init(rng);
    }
    std::size_t in = config_.channels * config_.kernels.size();
    for (std::size_t i = 0; i < config_.widths.size(); ++i) {
        const std::size_t w = config_.widths[i];
        const std::string id = std::to_string(i + 1);
        body_.emplace<nn::Linear>("fc" + id, in, w).init(rng);
        body_.emplace<nn::BatchNorm>("bn" + id, w);
        if (i + 1 < config_.widths.size()) {
            body_.emplace<nn::Activation>("relu" + id, ActivationKind::relu, w);
            body_.emplace<nn::Dropout>("drop" + id, config_.dropout, w);
        }
        in = w;
    }
    append_tail(tail_, ActivationKind::relu, config_.dropout, 0, rng);
    reseed(seed);
}

Tensor2D SequenceCnn::hidden(const Tensor2D& x, Mode mode) {
    check_input(x);
    const Tensor2D e = embed_->forward(x, mode);
    Tensor2D pooled(x.rows(), static_cast<Eigen::Index>(config_.channels * convs_.size()));
    const auto c = static_cast<Eigen::Index>(config_.channels);
    for (std::size_t i = 0; i < convs_.size(); ++i)
        pooled.middleCols(static_cast<Eigen::Index>(i) * c, c) = convs_[i]->forward(e, mode);
    return body_.forward(pooled, mode);
}

void SequenceCnn::backward_hidden(const Tensor2D& grad_hidden) {
    const Tensor2D gp = body_.backward(grad_hidden);
    const auto c = static_cast<Eigen::Index>(config_.channels);
    Tensor2D ge = convs_[0]->backward(gp.leftCols(c));
    for (std::size_t i = 1; i < convs_.size(); ++i)
        ge += convs_[i]->backward(gp.middleCols(static_cast<Eigen::Index>(i) * c, c));
    embed_->backward(ge);
}

std::vector<nn::ParamRef> SequenceCnn::params() {
    std::vector<nn::ParamRef> out;
    append_prefixed(out, *embed_);
    for (auto& conv : convs_) append_prefixed(out, *conv);
    for (auto& p : body_.params()) out.push_back(p);
    for (auto& p : tail_.params()) out.push_back(p);
    return out;
}

std::vector<nn::BufferRef> SequenceCnn::buffers() { return body_.buffers(); }

void SequenceCnn::reseed(std::uint64_t seed) {
    body_.reseed(seed);
    tail_.reseed(seed + 1000);
}

json SequenceCnn::architecture() const {
    json out = json::array();
    out.push_back(describe_layer(*embed_));
    for (const auto& conv : convs_) out.push_back(describe_layer(*conv));
    for (auto& l : sequential_layers(body_)) out.push_back(l);
    for (auto& l : sequential_layers(tail_)) out.push_back(l);
    return out;
}

// ---------------------------------------------------------------- EmberFfnn

EmberFfnn::EmberFfnn(EmberFfnnConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    nn::Rng rng(seed);
    body_.emplace<nn::Standardize>("scale", config_.input_dim);
    std::size_t in = config_.input_dim;
    for (std::size_t i = 0; i < config_.widths.size(); ++i) {
        const std::size_t w = config_.widths[i];
        const std::string id = std::to_string(i + 1);
        body_.emplace<nn::Linear>("fc" + id, in, w).init(rng);
        body_.emplace<nn::LayerNorm>("ln" + id, w);
        if (i + 1 < config_.widths.size()) {
            body_.emplace<nn::Activation>("elu" + id, ActivationKind::elu, w);
            body_.emplace<nn::Dropout>("drop" + id, config_.dropout, w);
        }
        in = w;
    }
    append_tail(tail_, ActivationKind::elu, config_.dropout, 0, rng);
    reseed(seed);
}

Tensor2D EmberFfnn::hidden(const Tensor2D& x, Mode mode) {
    check_input(x);
    return body_.forward(x, mode);
}

void EmberFfnn::backward_hidden(const Tensor2D& grad_hidden) { body_.backward(grad_hidden); }

std::vector<nn::ParamRef> EmberFfnn::params() {
    auto out = body_.params();
    for (auto& p : tail_.params()) out.push_back(p);
    return out;
}

std::vector<nn::BufferRef> EmberFfnn::buffers() { return body_.buffers(); }

void EmberFfnn::reseed(std::uint64_t seed) {
    body_.reseed(seed);
    tail_.reseed(seed + 1000);
}

void EmberFfnn::prepare(const Tensor2D& train_x) {
    check_input(train_x);
    static_cast<nn::Standardize&>(body_.layer(0)).fit(train_x);
}

json EmberFfnn::architecture() const {
    json out = sequential_layers(body_);
    for (auto& l : sequential_layers(tail_)) out.push_back(l);
    return out;
}

std::unique_ptr<EarlyModule> make_module(Modality m, std::uint64_t seed) {
    switch (m) {
        case Modality::filepath: return std::make_unique<SequenceCnn>(SequenceCnnConfig::filepath_preset(), seed);
        case Modality::apiseq: return std::make_unique<SequenceCnn>(SequenceCnnConfig::apiseq_preset(), seed);
        case Modality::ember: return std::make_unique<EmberFfnn>(EmberFfnnConfig{}, seed);
    }
    throw ConfigurationError("unknown modality");
}

}  // namespace mf::models
