#include "malfuse/nn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "malfuse/errors.hpp"
#include "malfuse/nn/activations.hpp"

namespace mf::nn {

double bce_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw DimensionError("bce_loss: " + std::to_string(pred.size()) + " predictions vs " +
                             std::to_string(target.size()) + " targets");
    }
    if (pred.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(pred[i], kProbEpsilon, 1.0 - kProbEpsilon);
        const double y = target[i];
        total -= y * std::log(p) + (1.0 - y) * std::log1p(-p);
    }
    return total / static_cast<double>(pred.size());
}

double bce_from_logits(const Tensor2D& logits, std::span<const double> target) {
    if (logits.cols() != 1) throw DimensionError("bce_from_logits: logits must be a single column");
    std::vector<double> p(static_cast<std::size_t>(logits.rows()));
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(logits(static_cast<Eigen::Index>(i), 0));
    return bce_loss(p, target);
}

Tensor2D bce_logit_grad(const Tensor2D& logits, std::span<const double> target) {
    if (logits.cols() != 1 || static_cast<std::size_t>(logits.rows()) != target.size()) {
        throw DimensionError("bce_logit_grad: logits/target shape mismatch");
    }
    const auto n = static_cast<double>(target.size());
    Tensor2D g(logits.rows(), 1);
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
        g(i, 0) = (sigmoid(logits(i, 0)) - target[static_cast<std::size_t>(i)]) / n;
    return g;
}

}  // namespace mf::nn
