#include "malfuse/nn/network.hpp"

namespace mf::nn {

Tensor2D Sequential::forward(const Tensor2D& x, Mode mode) {
    Tensor2D h = x;
    for (auto& layer : layers_) h = layer->forward(h, mode);
    return h;
}

Tensor2D Sequential::backward(const Tensor2D& grad_out) {
    Tensor2D g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
}

std::vector<ParamRef> Sequential::params() {
    std::vector<ParamRef> out;
    for (auto& layer : layers_) {
        for (auto& p : layer->params()) {
            p.name = layer->name() + "." + p.name;
            out.push_back(p);
        }
    }
    return out;
}

std::vector<BufferRef> Sequential::buffers() {
    std::vector<BufferRef> out;
    for (auto& layer : layers_) {
        for (auto& b : layer->buffers()) {
            b.name = layer->name() + "." + b.name;
            out.push_back(b);
        }
    }
    return out;
}

void Sequential::zero_grad() {
    for (auto& layer : layers_) layer->zero_grad();
}

void Sequential::reseed(std::uint64_t seed) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (auto* d = dynamic_cast<Dropout*>(layers_[i].get())) d->reseed(seed + i);
    }
}

}  // namespace mf::nn
