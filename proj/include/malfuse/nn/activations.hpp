#pragma once

#include <cmath>
#include <span>
#include <string_view>
#include <vector>

namespace mf::nn {

enum class ActivationKind { relu, elu, sigmoid };

/// Probability clamp shared by sigmoid outputs and the BCE loss.
inline constexpr double kProbEpsilon = 1e-7;

std::string_view to_string(ActivationKind kind);
ActivationKind activation_from_string(std::string_view s);

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

/// ELU with alpha = 1.
inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

/// Logistic function clamped to [eps, 1 - eps].
inline double sigmoid(double x) {
    const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return std::fmin(std::fmax(s, kProbEpsilon), 1.0 - kProbEpsilon);
}

double activate(double x, ActivationKind kind);

/// Derivative expressed through the pre-activation x and the output y.
double activation_grad(double x, double y, ActivationKind kind);

std::vector<double> activations(std::span<const double> x, ActivationKind kind);

}  // namespace mf::nn
