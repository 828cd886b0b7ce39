#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "malfuse/nn/checkpoint.hpp"
#include "malfuse/nn/layers.hpp"

namespace mf::models {

/// Binary classifier emitting one logit per input row. Implemented by the
/// early-fusion modules and by the meta-model.
class Classifier {
public:
    virtual ~Classifier() = default;

    /// Stable type tag stored in checkpoints.
    virtual std::string kind() const = 0;
    virtual std::size_t input_dim() const = 0;

    virtual nn::Tensor2D logits(const nn::Tensor2D& x, nn::Mode mode) = 0;
    /// Backpropagates dLoss/dlogits through the whole network.
    virtual void backward(const nn::Tensor2D& grad_logits) = 0;

    virtual std::vector<nn::ParamRef> params() = 0;
    virtual std::vector<nn::BufferRef> buffers() = 0;
    void zero_grad();
    virtual void reseed(std::uint64_t seed) = 0;

    /// Data-dependent setup run once on the training inputs before the
    /// first update (e.g. fitting input scaling). Default: nothing.
    virtual void prepare(const nn::Tensor2D& train_x);

    virtual nlohmann::json config() const = 0;
    /// Ordered {name, kind, input_dim, output_dim, hyper} for every layer.
    virtual nlohmann::json architecture() const = 0;

    /// Eval-mode probabilities.
    std::vector<double> predict(const nn::Tensor2D& x);

protected:
    void check_input(const nn::Tensor2D& x) const;
};

/// Describes one layer for architecture manifests.
nlohmann::json describe_layer(const nn::Layer& layer);

/// FNV-1a over names and float32 images of every parameter and buffer.
std::uint64_t parameter_hash(Classifier& model);

/// Checkpoint manifest keys written by to_checkpoint.
struct CheckpointInfo {
    std::string featurizer_hash;       // empty when not bound to a featurizer
    nlohmann::json pipeline = nullptr;  // extra pipeline facts (subset, order, ...)
};

nn::CheckpointData to_checkpoint(Classifier& model, const CheckpointInfo& info = {});
/// Rebuilds the model described by the manifest and loads every block.
/// Throws CompatibilityError on unknown kinds or block/shape mismatches.
std::unique_ptr<Classifier> from_checkpoint(const nn::CheckpointData& data);

void save_model(const std::filesystem::path& path, Classifier& model, const CheckpointInfo& info = {});

struct LoadedModel {
    std::unique_ptr<Classifier> model;
    CheckpointInfo info;
};

/// When expected_featurizer_hash is non-empty it must equal the stored
/// hash; otherwise CompatibilityError naming both.
LoadedModel load_model(const std::filesystem::path& path, const std::string& expected_featurizer_hash = "");

}  // namespace mf::models
