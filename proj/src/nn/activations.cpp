#include "malfuse/nn/activations.hpp"

#include <string>

#include "malfuse/errors.hpp"

namespace mf::nn {

std::string_view to_string(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::relu: return "relu";
        case ActivationKind::elu: return "elu";
        case ActivationKind::sigmoid: return "sigmoid";
    }
    return "unknown";
}

ActivationKind activation_from_string(std::string_view s) {
    if (s == "relu") return ActivationKind::relu;
    if (s == "elu") return ActivationKind::elu;
    if (s == "sigmoid") return ActivationKind::sigmoid;
    throw CompatibilityError("unknown activation '" + std::string(s) + "'");
}

double activate(double x, ActivationKind kind) {
    switch (kind) {
        case ActivationKind::relu: return relu(x);
        case ActivationKind::elu: return elu(x);
        case ActivationKind::sigmoid: return sigmoid(x);
    }
    return x;
}

double activation_grad(double x, double y, ActivationKind kind) {
    switch (kind) {
        case ActivationKind::relu: return x > 0.0 ? 1.0 : 0.0;
        case ActivationKind::elu: return x > 0.0 ? 1.0 : y + 1.0;
        case ActivationKind::sigmoid: return y * (1.0 - y);
    }
    return 1.0;
}

std::vector<double> activations(std::span<const double> x, ActivationKind kind) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = activate(x[i], kind);
    return out;
}

}  // namespace mf::nn
