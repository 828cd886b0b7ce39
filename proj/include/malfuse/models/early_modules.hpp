#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "malfuse/models/classifier.hpp"
#include "malfuse/models/modality.hpp"
#include "malfuse/nn/network.hpp"

namespace mf::models {

struct SequenceCnnConfig {
    Modality modality = Modality::filepath;
    std::size_t vocab = 150;  // V; the embedding table has V + 2 rows
    std::size_t seq_len = 100;
    std::size_t embed_dim = 64;
    std::vector<std::size_t> kernels{2, 3, 4, 5};
    std::size_t channels = 128;
    std::vector<std::size_t> widths{1024, 512, 256, 128};  // last entry is the representation width
    double dropout = 0.5;

    static SequenceCnnConfig filepath_preset();
    static SequenceCnnConfig apiseq_preset();

    nlohmann::json to_json() const;
    static SequenceCnnConfig from_json(const nlohmann::json& j);
    void validate() const;
};

struct EmberFfnnConfig {
    std::size_t input_dim = 768;
    std::vector<std::size_t> widths{512, 512, 128};
    double dropout = 0.05;

    nlohmann::json to_json() const;
    static EmberFfnnConfig from_json(const nlohmann::json& j);
    void validate() const;
};

struct ModuleOutput {
    nn::Tensor2D representation;  // B x 128, every value in [0,1]
    std::vector<double> score;    // classification head probability per row
};

/// One early-fusion network phi: representation layer plus a sigmoid head
/// used for pre-training and standalone scoring.
class EarlyModule : public Classifier {
public:
    virtual Modality modality() const = 0;
    std::size_t representation_dim() const { return kRepresentationDim; }

    /// Pre-sigmoid activations of the representation layer.
    virtual nn::Tensor2D hidden(const nn::Tensor2D& x, nn::Mode mode) = 0;

    nn::Tensor2D representation(const nn::Tensor2D& x, nn::Mode mode = nn::Mode::eval);
    ModuleOutput forward(const nn::Tensor2D& x, nn::Mode mode = nn::Mode::eval);

    nn::Tensor2D logits(const nn::Tensor2D& x, nn::Mode mode) override;
    void backward(const nn::Tensor2D& grad_logits) override;

protected:
    virtual void backward_hidden(const nn::Tensor2D& grad_hidden) = 0;
    /// Activation, dropout and the 128 -> 1 output layer.
    nn::Sequential tail_;
};

/// Embedding, four parallel conv + global-max-pool branches, and a dense
/// stack of Linear -> BatchNorm -> ReLU -> Dropout blocks.
class SequenceCnn final : public EarlyModule {
public:
    SequenceCnn(SequenceCnnConfig config, std::uint64_t seed);

    std::string kind() const override { return "sequence_cnn"; }
    Modality modality() const override { return config_.modality; }
    std::size_t input_dim() const override { return config_.seq_len; }
    nn::Tensor2D hidden(const nn::Tensor2D& x, nn::Mode mode) override;
    std::vector<nn::ParamRef> params() override;
    std::vector<nn::BufferRef> buffers() override;
    void reseed(std::uint64_t seed) override;
    nlohmann::json config() const override { return config_.to_json(); }
    nlohmann::json architecture() const override;

    const SequenceCnnConfig& settings() const { return config_; }

protected:
    void backward_hidden(const nn::Tensor2D& grad_hidden) override;

private:
    SequenceCnnConfig config_;
    std::unique_ptr<nn::Embedding> embed_;
    std::vector<std::unique_ptr<nn::Conv1dMaxPool>> convs_;
    nn::Sequential body_;
};

/// Standardized static vector through Linear -> LayerNorm -> ELU -> Dropout
/// blocks.
class EmberFfnn final : public EarlyModule {
public:
    EmberFfnn(EmberFfnnConfig config, std::uint64_t seed);

    std::string kind() const override { return "ember_ffnn"; }
    Modality modality() const override { return Modality::ember; }
    std::size_t input_dim() const override { return config_.input_dim; }
    nn::Tensor2D hidden(const nn::Tensor2D& x, nn::Mode mode) override;
    std::vector<nn::ParamRef> params() override;
    std::vector<nn::BufferRef> buffers() override;
    void reseed(std::uint64_t seed) override;
    void prepare(const nn::Tensor2D& train_x) override;
    nlohmann::json config() const override { return config_.to_json(); }
    nlohmann::json architecture() const override;

    const EmberFfnnConfig& settings() const { return config_; }

protected:
    void backward_hidden(const nn::Tensor2D& grad_hidden) override;

private:
    EmberFfnnConfig config_;
    nn::Sequential body_;
};

/// Preset module for a modality (fp/api: sequence CNN presets; emb: FFNN).
std::unique_ptr<EarlyModule> make_module(Modality m, std::uint64_t seed);

}  // namespace mf::models
