#include "dqrank/adam.hpp"

#include <cmath>

#include "dqrank/error.hpp"

namespace dqrank {

void adam_step(AdamState& state, std::span<const ParamRef> params, const AdamConfig& config) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.value.size(), 0.0);
            state.v.emplace_back(p.value.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw InvalidArgument("adam_step: tensor count changed");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto value = params[i].value;
        auto grad = params[i].grad;
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (value.size() != grad.size() || m.size() != value.size()) {
            throw InvalidArgument("adam_step: tensor shape changed");
        }
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double g = grad[j];
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
            value[j] -= config.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.eps);
        }
    }
}

}  // namespace dqrank
