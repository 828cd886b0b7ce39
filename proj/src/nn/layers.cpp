#include "malfuse/nn/layers.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <utility>

#include "malfuse/errors.hpp"

namespace mf::nn {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 8> kKindNames{{
    {LayerKind::embedding, "embedding"},
    {LayerKind::conv1d, "conv1d"},
    {LayerKind::linear, "linear"},
    {LayerKind::batchnorm, "batchnorm"},
    {LayerKind::layernorm, "layernorm"},
    {LayerKind::standardize, "standardize"},
    {LayerKind::activation, "activation"},
    {LayerKind::dropout, "dropout"},
}};

// He-style fan-in scaled uniform: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
void he_uniform(Tensor2D& w, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    quantize(w);
}

Tensor2D zeros(std::size_t r, std::size_t c) {
    return Tensor2D::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

}  // namespace

std::string_view to_string(LayerKind kind) {
    for (const auto& [k, n] : kKindNames)
        if (k == kind) return n;
    return "unknown";
}

LayerKind layer_kind_from_string(std::string_view s) {
    for (const auto& [k, n] : kKindNames)
        if (n == s) return k;
    throw CompatibilityError("unknown layer kind '" + std::string(s) + "'");
}

void Layer::zero_grad() {
    for (auto& p : params()) p.grad->setZero();
}

void Layer::check_input(const Tensor2D& x) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim()) {
        throw DimensionError("layer '" + name_ + "' (" + std::string(to_string(kind())) + ") expects " +
                             std::to_string(input_dim()) + " input columns, got " + std::to_string(x.cols()));
    }
}

void Layer::check_grad(const Tensor2D& g, Eigen::Index rows) const {
    if (static_cast<std::size_t>(g.cols()) != output_dim() || g.rows() != rows) {
        throw DimensionError("layer '" + name_ + "' received a gradient of shape " + std::to_string(g.rows()) +
                             "x" + std::to_string(g.cols()));
    }
}

void Layer::require_forward() const {
    if (!has_cache_) throw StateError("backward called on layer '" + name_ + "' before forward");
}

// ---------------------------------------------------------------- Embedding

Embedding::Embedding(std::string name, std::size_t vocab, std::size_t dim, std::size_t seq_len)
    : Layer(std::move(name)), vocab_(vocab), dim_(dim), seq_len_(seq_len),
      weight_(zeros(vocab, dim)), grad_(zeros(vocab, dim)) {}

void Embedding::init(Rng& rng) {
    for (Eigen::Index i = 0; i < weight_.size(); ++i) weight_.data()[i] = rng.uniform(-0.05, 0.05);
    quantize(weight_);
}

Tensor2D Embedding::forward(const Tensor2D& x, Mode) {
    check_input(x);
    const Eigen::Index batch = x.rows();
    ids_.resize(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(vocab_)) {
            throw RangeError("layer '" + name() + "': token id " + std::to_string(v) + " outside vocabulary of " +
                             std::to_string(vocab_));
        }
        ids_[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(v);
    }
    Tensor2D out(batch, static_cast<Eigen::Index>(seq_len_ * dim_));
    const auto h = static_cast<Eigen::Index>(dim_);
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < seq_len_; ++t) {
            const auto id = ids_[static_cast<std::size_t>(b) * seq_len_ + t];
            out.row(b).segment(static_cast<Eigen::Index>(t) * h, h) = weight_.row(id);
        }
    }
    batch_ = batch;
    has_cache_ = true;
    return out;
}

Tensor2D Embedding::backward(const Tensor2D& grad_out) {
    require_forward();
    check_grad(grad_out, batch_);
    const auto h = static_cast<Eigen::Index>(dim_);
    for (Eigen::Index b = 0; b < batch_; ++b) {
        for (std::size_t t = 0; t < seq_len_; ++t) {
            const auto id = ids_[static_cast<std::size_t>(b) * seq_len_ + t];
            grad_.row(id) += grad_out.row(b).segment(static_cast<Eigen::Index>(t) * h, h);
        }
    }
    return {};
}

nlohmann::json Embedding::hyper() const {
    return {{"vocab", vocab_}, {"dim", dim_}, {"seq_len", seq_len_}};
}

// ------------------------------------------------------------ Conv1dMaxPool

Conv1dMaxPool::Conv1dMaxPool(std::string name, std::size_t in_channels, std::size_t out_channels,
                             std::size_t kernel, std::size_t seq_len)
    : Layer(std::move(name)), in_(in_channels), out_(out_channels), kernel_(kernel), seq_len_(seq_len),
      weight_(zeros(kernel * in_channels, out_channels)), bias_(zeros(1, out_channels)),
      grad_w_(zeros(kernel * in_channels, out_channels)), grad_b_(zeros(1, out_channels)) {
    if (kernel == 0 || kernel > seq_len) {
        throw DimensionError("layer '" + this->name() + "': kernel width " + std::to_string(kernel) +
                             " does not fit sequence length " + std::to_string(seq_len));
    }
}

void Conv1dMaxPool::init(Rng& rng) {
    he_uniform(weight_, kernel_ * in_, rng);
    bias_.setZero();
}

Tensor2D Conv1dMaxPool::forward(const Tensor2D& x, Mode) {
    check_input(x);
    using WindowMap = Eigen::Map<const Tensor2D, 0, Eigen::OuterStride<>>;
    const Eigen::Index batch = x.rows();
    const auto positions = static_cast<Eigen::Index>(seq_len_ - kernel_ + 1);
    const auto width = static_cast<Eigen::Index>(kernel_ * in_);
    const auto channels = static_cast<Eigen::Index>(out_);

    Tensor2D out(batch, channels);
    argmax_.assign(static_cast<std::size_t>(batch * channels), 0);
    Tensor2D response(positions, channels);
    for (Eigen::Index b = 0; b < batch; ++b) {
        // Rows of the window view overlap: row p starts at element p*H.
        WindowMap windows(x.row(b).data(), positions, width, Eigen::OuterStride<>(static_cast<Eigen::Index>(in_)));
        response.noalias() = windows * weight_;
        for (Eigen::Index c = 0; c < channels; ++c) {
            Eigen::Index best = 0;
            double best_v = response(0, c);
            for (Eigen::Index p = 1; p < positions; ++p) {
                if (response(p, c) > best_v) {
                    best_v = response(p, c);
                    best = p;
                }
            }
            out(b, c) = best_v + bias_(0, c);
            argmax_[static_cast<std::size_t>(b * channels + c)] = static_cast<std::int32_t>(best);
        }
    }
    input_ = x;
    has_cache_ = true;
    return out;
}

Tensor2D Conv1dMaxPool::backward(const Tensor2D& grad_out) {
    require_forward();
    check_grad(grad_out, input_.rows());
    const Eigen::Index batch = input_.rows();
    const auto channels = static_cast<Eigen::Index>(out_);
    const auto width = static_cast<Eigen::Index>(kernel_ * in_);
    Tensor2D grad_in = Tensor2D::Zero(batch, input_.cols());
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (Eigen::Index c = 0; c < channels; ++c) {
            const double g = grad_out(b, c);
            if (g == 0.0) continue;
            const Eigen::Index start = argmax_[static_cast<std::size_t>(b * channels + c)] *
                                       static_cast<Eigen::Index>(in_);
            grad_w_.col(c) += g * input_.row(b).segment(start, width).transpose();
            grad_b_(0, c) += g;
            grad_in.row(b).segment(start, width) += g * weight_.col(c).transpose();
        }
    }
    return grad_in;
}

nlohmann::json Conv1dMaxPool::hyper() const {
    return {{"in_channels", in_}, {"out_channels", out_}, {"kernel", kernel_}, {"seq_len", seq_len_},
            {"pooling", "global_max"}};
}

// ------------------------------------------------------------------- Linear

Linear::Linear(std::string name, std::size_t in, std::size_t out)
    : Layer(std::move(name)), in_(in), out_(out), weight_(zeros(in, out)), bias_(zeros(1, out)),
      grad_w_(zeros(in, out)), grad_b_(zeros(1, out)) {}

void Linear::init(Rng& rng) {
    he_uniform(weight_, in_, rng);
    bias_.setZero();
}

Tensor2D Linear::forward(const Tensor2D& x, Mode mode) {
    check_input(x);
    Tensor2D y(x.rows(), static_cast<Eigen::Index>(out_));
    if (mode == Mode::train) {
        y.noalias() = x * weight_;
    } else {
        // Row at a time so eval output never depends on batch composition.
        for (Eigen::Index r = 0; r < x.rows(); ++r) y.row(r).noalias() = x.row(r) * weight_;
    }
    y.rowwise() += bias_.row(0);
    input_ = x;
    has_cache_ = true;
    return y;
}

Tensor2D Linear::backward(const Tensor2D& grad_out) {
    require_forward();
    check_grad(grad_out, input_.rows());
    grad_w_.noalias() += input_.transpose() * grad_out;
    grad_b_ += grad_out.colwise().sum();
    Tensor2D grad_in = grad_out * weight_.transpose();
    return grad_in;
}

nlohmann::json Linear::hyper() const { return {{"in", in_}, {"out", out_}}; }

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::string name, std::size_t features, double momentum, double eps)
    : Layer(std::move(name)), features_(features), momentum_(momentum), eps_(eps),
      gamma_(Tensor2D::Ones(1, static_cast<Eigen::Index>(features))), beta_(zeros(1, features)),
      grad_gamma_(zeros(1, features)), grad_beta_(zeros(1, features)), running_mean_(zeros(1, features)),
      running_var_(Tensor2D::Ones(1, static_cast<Eigen::Index>(features))), tracked_(zeros(1, 1)) {}

Tensor2D BatchNorm::forward(const Tensor2D& x, Mode mode) {
    check_input(x);
    const Eigen::Index n = x.rows();
    const auto f = static_cast<Eigen::Index>(features_);
    if (mode == Mode::eval) {
        if (batches_tracked() == 0) {
            throw StateError("layer '" + name() + "': batchnorm eval requires running statistics from training");
        }
        inv_std_ = (running_var_.array() + eps_).rsqrt().matrix();
        xhat_ = (x.rowwise() - running_mean_.row(0)).array().rowwise() * inv_std_.row(0).array();
    } else {
        if (n == 0) throw DimensionError("layer '" + name() + "': empty batch");
        const Tensor2D mean = x.colwise().mean();
        const Tensor2D centered = x.rowwise() - mean.row(0);
        const Tensor2D var = centered.array().square().colwise().sum().matrix() / static_cast<double>(n);
        inv_std_ = (var.array() + eps_).rsqrt().matrix();
        xhat_ = centered.array().rowwise() * inv_std_.row(0).array();
        const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
        running_mean_ = (1.0 - momentum_) * running_mean_ + momentum_ * mean;
        running_var_ = (1.0 - momentum_) * running_var_ + momentum_ * unbias * var;
        quantize(running_mean_);
        quantize(running_var_);
        for (Eigen::Index j = 0; j < f; ++j) {
            // Keep the strictly-positive invariant through float rounding.
            if (running_var_(0, j) <= 0.0) running_var_(0, j) = static_cast<double>(std::numeric_limits<float>::min());
        }
        tracked_(0, 0) += 1.0;
    }
    cached_mode_ = mode;
    has_cache_ = true;
    Tensor2D y = (xhat_.array().rowwise() * gamma_.row(0).array()).rowwise() + beta_.row(0).array();
    return y;
}

Tensor2D BatchNorm::backward(const Tensor2D& grad_out) {
    require_forward();
    check_grad(grad_out, xhat_.rows());
    const auto n = static_cast<double>(xhat_.rows());
    grad_gamma_ += (grad_out.array() * xhat_.array()).colwise().sum().matrix();
    grad_beta_ += grad_out.colwise().sum();
    const Tensor2D dxhat = grad_out.array().rowwise() * gamma_.row(0).array();
    if (cached_mode_ == Mode::eval) return dxhat.array().rowwise() * inv_std_.row(0).array();
    const Tensor2D sum_d = dxhat.colwise().sum();
    const Tensor2D sum_dx = (dxhat.array() * xhat_.array()).colwise().sum().matrix();
    Tensor2D grad_in = (n * dxhat.array()).matrix();
    grad_in.rowwise() -= sum_d.row(0);
    grad_in -= (xhat_.array().rowwise() * sum_dx.row(0).array()).matrix();
    grad_in = (grad_in.array().rowwise() * (inv_std_.row(0).array() / n)).matrix();
    return grad_in;
}

nlohmann::json BatchNorm::hyper() const {
    return {{"features", features_}, {"momentum", momentum_}, {"eps", eps_}};
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(std::string name, std::size_t features, double eps)
    : Layer(std::move(name)), features_(features), eps_(eps),
      gamma_(Tensor2D::Ones(1, static_cast<Eigen::Index>(features))), beta_(zeros(1, features)),
      grad_gamma_(zeros(1, features)), grad_beta_(zeros(1, features)) {}

Tensor2D LayerNorm::forward(const Tensor2D& x, Mode) {
    check_input(x);
    const auto f = static_cast<double>(features_);
    const Eigen::VectorXd mean = x.rowwise().mean();
    xhat_ = x.colwise() - mean;
    const Eigen::VectorXd var = xhat_.array().square().rowwise().sum().matrix() / f;
    inv_std_ = (var.array() + eps_).rsqrt().matrix();
    xhat_ = xhat_.array().colwise() * inv_std_.col(0).array();
    has_cache_ = true;
    Tensor2D y = (xhat_.array().rowwise() * gamma_.row(0).array()).rowwise() + beta_.row(0).array();
    return y;
}

Tensor2D LayerNorm::backward(const Tensor2D& grad_out) {
    require_forward();
    check_grad(grad_out, xhat_.rows());
    const auto f = static_cast<double>(features_);
    grad_gamma_ += (grad_out.array() * xhat_.array()).colwise().sum().matrix();
    grad_beta_ += grad_out.colwise().sum();
    const Tensor2D dxhat = grad_out.array().rowwise() * gamma_.row(0).array();
    const Eigen::VectorXd sum_d = dxhat.rowwise().sum();
    const Eigen::VectorXd sum_dx = (dxhat.array() * xhat_.array()).rowwise().sum().matrix();
    Tensor2D grad_in = f * dxhat;
    grad_in.colwise() -= sum_d;
    grad_in -= (xhat_.array().colwise() * sum_dx.array()).matrix();
    grad_in = (grad_in.array().colwise() * (inv_std_.col(0).array() / f)).matrix();
    return grad_in;
}

nlohmann::json LayerNorm::hyper() const { return {{"features", features_}, {"eps", eps_}}; }

// -------------------------------------------------------------- Standardize

Standardize::Standardize(std::string name, std::size_t features)
    : Layer(std::move(name)), features_(features), mean_(zeros(1, features)),
      inv_std_(Tensor2D::Ones(1, static_cast<Eigen::Index>(features))) {}

void Standardize::fit(const Tensor2D& x) {
    check_input(x);
    if (x.rows() == 0) throw InputError("layer '" + name() + "': cannot fit scaling on zero rows");
    mean_ = x.colwise().mean();
    const Tensor2D centered = x.rowwise() - mean_.row(0);
    const Tensor2D var = centered.array().square().colwise().sum().matrix() / static_cast<double>(x.rows());
    for (Eigen::Index j = 0; j < var.cols(); ++j) {
        const double sd = std::sqrt(var(0, j));
        inv_std_(0, j) = sd > 1e-8 ? 1.0 / sd : 1.0;
    }
    quantize(mean_);
    quantize(inv_std_);
}

Tensor2D Standardize::forward(const Tensor2D& x, Mode) {
    check_input(x);
    has_cache_ = true;
    Tensor2D y = (x.rowwise() - mean_.row(0)).array().rowwise() * inv_std_.row(0).array();
    return y;
}

Tensor2D Standardize::backward(const Tensor2D& grad_out) {
    require_forward();
    Tensor2D g = grad_out.array().rowwise() * inv_std_.row(0).array();
    return g;
}

nlohmann::json Standardize::hyper() const { return {{"features", features_}}; }

// --------------------------------------------------------------- Activation

Activation::Activation(std::string name, ActivationKind act, std::size_t features)
    : Layer(std::move(name)), act_(act), features_(features) {}

Tensor2D Activation::forward(const Tensor2D& x, Mode) {
    check_input(x);
    Tensor2D y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) y.data()[i] = activate(x.data()[i], act_);
    input_ = x;
    output_ = y;
    has_cache_ = true;
    return y;
}

Tensor2D Activation::backward(const Tensor2D& grad_out) {
    require_forward();
    check_grad(grad_out, input_.rows());
    Tensor2D g(grad_out.rows(), grad_out.cols());
    for (Eigen::Index i = 0; i < g.size(); ++i)
        g.data()[i] = grad_out.data()[i] * activation_grad(input_.data()[i], output_.data()[i], act_);
    return g;
}

nlohmann::json Activation::hyper() const {
    return {{"function", std::string(to_string(act_))}, {"features", features_}};
}

// ------------------------------------------------------------------ Dropout

Dropout::Dropout(std::string name, double rate, std::size_t features, std::uint64_t seed)
    : Layer(std::move(name)), rate_(rate), features_(features), rng_(seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw InputError("dropout rate must lie in [0, 1)");
}

Tensor2D Dropout::forward(const Tensor2D& x, Mode mode) {
    check_input(x);
    has_cache_ = true;
    if (mode == Mode::eval || rate_ == 0.0) {
        mask_ = Tensor2D::Ones(x.rows(), x.cols());
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate_);
    mask_.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask_.size(); ++i) mask_.data()[i] = rng_.uniform() < rate_ ? 0.0 : keep_scale;
    Tensor2D y = x.cwiseProduct(mask_);
    return y;
}

Tensor2D Dropout::backward(const Tensor2D& grad_out) {
    require_forward();
    check_grad(grad_out, mask_.rows());
    Tensor2D g = grad_out.cwiseProduct(mask_);
    return g;
}

nlohmann::json Dropout::hyper() const { return {{"rate", rate_}, {"features", features_}}; }

}  // namespace mf::nn
