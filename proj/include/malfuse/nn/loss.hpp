#pragma once

#include <span>

#include "malfuse/nn/tensor.hpp"

namespace mf::nn {

/// Mean binary cross-entropy, -[y log p + (1-y) log(1-p)], with p clamped
/// to [1e-7, 1 - 1e-7].
double bce_loss(std::span<const double> pred, std::span<const double> target);

/// Loss of a batch of logits (B x 1) against 0/1 targets, applying the
/// clamped sigmoid first.
double bce_from_logits(const Tensor2D& logits, std::span<const double> target);

/// d(mean BCE)/d(logit) = (sigmoid(z) - y) / B.
Tensor2D bce_logit_grad(const Tensor2D& logits, std::span<const double> target);

}  // namespace mf::nn
