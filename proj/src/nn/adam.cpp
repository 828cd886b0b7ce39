#include "malfuse/nn/adam.hpp"

#include <cmath>

#include "malfuse/errors.hpp"

namespace mf::nn {

std::size_t parameter_count(std::span<const ParamRef> params) {
    std::size_t n = 0;
    for (const auto& p : params) n += static_cast<std::size_t>(p.value->size());
    return n;
}

void adam_step(AdamState& state, std::span<const ParamRef> params) {
    const std::size_t n = parameter_count(params);
    if (n != state.m.size() || n != state.v.size()) {
        throw DimensionError("adam_step: optimizer state covers " + std::to_string(state.m.size()) +
                             " values, parameters have " + std::to_string(n));
    }
    for (const auto& p : params) {
        if (p.grad->rows() != p.value->rows() || p.grad->cols() != p.value->cols())
            throw DimensionError("adam_step: gradient shape differs for '" + p.name + "'");
        if (!p.grad->allFinite()) throw NumericError("adam_step: non-finite gradient in '" + p.name + "'");
    }

    const auto& c = state.config;
    const std::uint64_t t = state.step + 1;
    const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    std::size_t offset = 0;
    for (const auto& p : params) {
        double* value = p.value->data();
        const double* grad = p.grad->data();
        for (Eigen::Index i = 0; i < p.value->size(); ++i, ++offset) {
            const double g = grad[i];
            double& m = state.m[offset];
            double& v = state.v[offset];
            m = c.beta1 * m + (1.0 - c.beta1) * g;
            v = c.beta2 * v + (1.0 - c.beta2) * g * g;
            const double m_hat = m / correction1;
            const double v_hat = v / correction2;
            value[i] = static_cast<float>(value[i] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon));
        }
    }
    state.step = t;
}

}  // namespace mf::nn
