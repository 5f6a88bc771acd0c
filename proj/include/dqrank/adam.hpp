#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dqrank {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One tensor's parameters and gradient viewed as flat arrays.
struct ParamRef {
    std::span<double> value;
    std::span<const double> grad;
};

/// First/second moment buffers, one per tensor, plus the shared step count.
struct AdamState {
    std::int64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    bool operator==(const AdamState&) const = default;
};

/// Applies one bias-corrected Adam update to every tensor in `params`.
/// Moment buffers are created on first use and must keep the same layout.
void adam_step(AdamState& state, std::span<const ParamRef> params, const AdamConfig& config);

}  // namespace dqrank
