#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "malfuse/models/classifier.hpp"
#include "malfuse/models/modality.hpp"
#include "malfuse/nn/network.hpp"

namespace mf::models {

struct MetaModelConfig {
    enum class Kind { logistic_regression, ffnn };

    Kind kind = Kind::ffnn;
    std::vector<std::size_t> hidden{384, 128, 64, 16};

    static MetaModelConfig logistic();
    /// The selected preset: ReLU layers 384, 128, 64, 16.
    static MetaModelConfig ffnn_preset();
    /// depth in [2, 5]: the first `depth` widths of 384, 128, 64, 16, 8.
    static MetaModelConfig ffnn_depth(std::size_t depth);

    std::string label() const;  // "lr", "ffnn-4", ...
    nlohmann::json to_json() const;
    static MetaModelConfig from_json(const nlohmann::json& j);
};

/// psi: maps a fusion vector for one module subset to a probability.
class MetaModel final : public Classifier {
public:
    MetaModel(ModalitySet subset, MetaModelConfig config, std::uint64_t seed);

    std::string kind() const override { return "meta_model"; }
    std::size_t input_dim() const override { return subset_.fusion_dim(); }
    nn::Tensor2D logits(const nn::Tensor2D& x, nn::Mode mode) override;
    void backward(const nn::Tensor2D& grad_logits) override;
    std::vector<nn::ParamRef> params() override { return net_.params(); }
    std::vector<nn::BufferRef> buffers() override { return net_.buffers(); }
    void reseed(std::uint64_t seed) override { net_.reseed(seed); }
    nlohmann::json config() const override;
    nlohmann::json architecture() const override;

    ModalitySet subset() const { return subset_; }
    const MetaModelConfig& settings() const { return config_; }
    nn::Sequential& network() { return net_; }

private:
    ModalitySet subset_;
    MetaModelConfig config_;
    nn::Sequential net_;
};

}  // namespace mf::models
