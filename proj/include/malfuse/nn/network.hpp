#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "malfuse/nn/layers.hpp"

namespace mf::nn {

/// Ordered chain of layers; backward runs the chain in reverse.
class Sequential {
public:
    template <class L, class... Args>
    L& emplace(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    Tensor2D forward(const Tensor2D& x, Mode mode);
    Tensor2D backward(const Tensor2D& grad_out);

    std::vector<ParamRef> params();
    std::vector<BufferRef> buffers();
    void zero_grad();
    /// Re-seed every dropout layer; layer i gets seed + i.
    void reseed(std::uint64_t seed);

    std::size_t size() const { return layers_.size(); }
    bool empty() const { return layers_.empty(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }
    std::size_t output_dim() const { return layers_.back()->output_dim(); }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace mf::nn
