#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "malfuse/nn/activations.hpp"
#include "malfuse/nn/tensor.hpp"

namespace mf::nn {

enum class LayerKind { embedding, conv1d, linear, batchnorm, layernorm, standardize, activation, dropout };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view s);

/// A trainable tensor and its gradient accumulator.
struct ParamRef {
    std::string name;
    Tensor2D* value;
    Tensor2D* grad;
};

/// Persisted, non-trainable state (running statistics, input scaling).
struct BufferRef {
    std::string name;
    Tensor2D* value;
};

/// One differentiable stage. forward() caches what backward() needs;
/// backward() accumulates parameter gradients and returns the gradient with
/// respect to the input.
class Layer {
public:
    explicit Layer(std::string name) : name_(std::move(name)) {}
    virtual ~Layer() = default;
    Layer(const Layer&) = delete;
    Layer& operator=(const Layer&) = delete;

    const std::string& name() const { return name_; }

    virtual LayerKind kind() const = 0;
    virtual std::size_t input_dim() const = 0;
    virtual std::size_t output_dim() const = 0;
    virtual Tensor2D forward(const Tensor2D& x, Mode mode) = 0;
    virtual Tensor2D backward(const Tensor2D& grad_out) = 0;
    virtual nlohmann::json hyper() const = 0;

    virtual std::vector<ParamRef> params() { return {}; }
    virtual std::vector<BufferRef> buffers() { return {}; }

    void zero_grad();

protected:
    void check_input(const Tensor2D& x) const;
    void check_grad(const Tensor2D& g, Eigen::Index rows) const;
    void require_forward() const;

    bool has_cache_ = false;

private:
    std::string name_;
};

/// Token-id lookup. Input: B x N ids stored as doubles. Output: B x (N*H),
/// row b holding the N embedding vectors of sample b back to back.
class Embedding final : public Layer {
public:
    Embedding(std::string name, std::size_t vocab, std::size_t dim, std::size_t seq_len);

    LayerKind kind() const override { return LayerKind::embedding; }
    std::size_t input_dim() const override { return seq_len_; }
    std::size_t output_dim() const override { return seq_len_ * dim_; }
    Tensor2D forward(const Tensor2D& x, Mode mode) override;
    Tensor2D backward(const Tensor2D& grad_out) override;
    nlohmann::json hyper() const override;
    std::vector<ParamRef> params() override { return {{"weight", &weight_, &grad_}}; }

    void init(Rng& rng);
    Tensor2D& weight() { return weight_; }
    const Tensor2D& weight() const { return weight_; }
    std::size_t vocab() const { return vocab_; }
    std::size_t dim() const { return dim_; }

private:
    std::size_t vocab_, dim_, seq_len_;
    Tensor2D weight_, grad_;
    std::vector<std::int32_t> ids_;
    Eigen::Index batch_ = 0;
};

/// Valid 1-D cross-correlation over the sequence axis followed by global
/// max pooling over time. Input: B x (N*H). Output: B x C.
class Conv1dMaxPool final : public Layer {
public:
    Conv1dMaxPool(std::string name, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, std::size_t seq_len);

    LayerKind kind() const override { return LayerKind::conv1d; }
    std::size_t input_dim() const override { return seq_len_ * in_; }
    std::size_t output_dim() const override { return out_; }
    Tensor2D forward(const Tensor2D& x, Mode mode) override;
    Tensor2D backward(const Tensor2D& grad_out) override;
    nlohmann::json hyper() const override;
    std::vector<ParamRef> params() override {
        return {{"weight", &weight_, &grad_w_}, {"bias", &bias_, &grad_b_}};
    }

    void init(Rng& rng);
    /// Weight layout: (kernel * in_channels) x out_channels; row t*H + h is
    /// the tap at offset t for input channel h.
    Tensor2D& weight() { return weight_; }
    Tensor2D& bias() { return bias_; }
    std::size_t kernel() const { return kernel_; }

private:
    std::size_t in_, out_, kernel_, seq_len_;
    Tensor2D weight_, bias_, grad_w_, grad_b_;
    Tensor2D input_;
    std::vector<std::int32_t> argmax_;
};

/// y = x W + b with W stored in x out.
class Linear final : public Layer {
public:
    Linear(std::string name, std::size_t in, std::size_t out);

    LayerKind kind() const override { return LayerKind::linear; }
    std::size_t input_dim() const override { return in_; }
    std::size_t output_dim() const override { return out_; }
    Tensor2D forward(const Tensor2D& x, Mode mode) override;
    Tensor2D backward(const Tensor2D& grad_out) override;
    nlohmann::json hyper() const override;
    std::vector<ParamRef> params() override {
        return {{"weight", &weight_, &grad_w_}, {"bias", &bias_, &grad_b_}};
    }

    void init(Rng& rng);
    Tensor2D& weight() { return weight_; }
    Tensor2D& bias() { return bias_; }

private:
    std::size_t in_, out_;
    Tensor2D weight_, bias_, grad_w_, grad_b_;
    Tensor2D input_;
};

class BatchNorm final : public Layer {
public:
    BatchNorm(std::string name, std::size_t features, double momentum = 0.1, double eps = 1e-5);

    LayerKind kind() const override { return LayerKind::batchnorm; }
    std::size_t input_dim() const override { return features_; }
    std::size_t output_dim() const override { return features_; }
    Tensor2D forward(const Tensor2D& x, Mode mode) override;
    Tensor2D backward(const Tensor2D& grad_out) override;
    nlohmann::json hyper() const override;
    std::vector<ParamRef> params() override {
        return {{"gamma", &gamma_, &grad_gamma_}, {"beta", &beta_, &grad_beta_}};
    }
    std::vector<BufferRef> buffers() override {
        return {{"running_mean", &running_mean_}, {"running_var", &running_var_}, {"batches_tracked", &tracked_}};
    }

    const Tensor2D& running_mean() const { return running_mean_; }
    const Tensor2D& running_var() const { return running_var_; }
    std::uint64_t batches_tracked() const { return static_cast<std::uint64_t>(tracked_(0, 0)); }

private:
    std::size_t features_;
    double momentum_, eps_;
    Tensor2D gamma_, beta_, grad_gamma_, grad_beta_;
    Tensor2D running_mean_, running_var_, tracked_;
    Tensor2D xhat_, inv_std_;
    Mode cached_mode_ = Mode::train;
};

class LayerNorm final : public Layer {
public:
    LayerNorm(std::string name, std::size_t features, double eps = 1e-5);

    LayerKind kind() const override { return LayerKind::layernorm; }
    std::size_t input_dim() const override { return features_; }
    std::size_t output_dim() const override { return features_; }
    Tensor2D forward(const Tensor2D& x, Mode mode) override;
    Tensor2D backward(const Tensor2D& grad_out) override;
    nlohmann::json hyper() const override;
    std::vector<ParamRef> params() override {
        return {{"gamma", &gamma_, &grad_gamma_}, {"beta", &beta_, &grad_beta_}};
    }

private:
    std::size_t features_;
    double eps_;
    Tensor2D gamma_, beta_, grad_gamma_, grad_beta_;
    Tensor2D xhat_, inv_std_;
};

/// Frozen per-feature affine map (x - mean) * inv_std, fitted once on
/// training data.
class Standardize final : public Layer {
public:
    Standardize(std::string name, std::size_t features);

    LayerKind kind() const override { return LayerKind::standardize; }
    std::size_t input_dim() const override { return features_; }
    std::size_t output_dim() const override { return features_; }
    Tensor2D forward(const Tensor2D& x, Mode mode) override;
    Tensor2D backward(const Tensor2D& grad_out) override;
    nlohmann::json hyper() const override;
    std::vector<BufferRef> buffers() override { return {{"mean", &mean_}, {"inv_std", &inv_std_}}; }

    void fit(const Tensor2D& x);

private:
    std::size_t features_;
    Tensor2D mean_, inv_std_;
};

class Activation final : public Layer {
public:
    Activation(std::string name, ActivationKind act, std::size_t features);

    LayerKind kind() const override { return LayerKind::activation; }
    std::size_t input_dim() const override { return features_; }
    std::size_t output_dim() const override { return features_; }
    Tensor2D forward(const Tensor2D& x, Mode mode) override;
    Tensor2D backward(const Tensor2D& grad_out) override;
    nlohmann::json hyper() const override;

    ActivationKind activation() const { return act_; }

private:
    ActivationKind act_;
    std::size_t features_;
    Tensor2D input_, output_;
};

/// Inverted dropout: train-mode survivors are scaled by 1/(1-p), eval mode
/// is the identity.
class Dropout final : public Layer {
public:
    Dropout(std::string name, double rate, std::size_t features, std::uint64_t seed = 0);

    LayerKind kind() const override { return LayerKind::dropout; }
    std::size_t input_dim() const override { return features_; }
    std::size_t output_dim() const override { return features_; }
    Tensor2D forward(const Tensor2D& x, Mode mode) override;
    Tensor2D backward(const Tensor2D& grad_out) override;
    nlohmann::json hyper() const override;

    double rate() const { return rate_; }
    void reseed(std::uint64_t seed) { rng_.reseed(seed); }

private:
    double rate_;
    std::size_t features_;
    Rng rng_;
    Tensor2D mask_;
};

/// Same computation as layer.forward; named entry point for single-layer use.
inline Tensor2D layer_forward(Layer& layer, const Tensor2D& input, Mode mode) {
    return layer.forward(input, mode);
}

}  // namespace mf::nn
