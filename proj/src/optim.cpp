#include "sdrl/optim.hpp"

#include <cmath>
#include <string>

#include "sdrl/errors.hpp"
#include "sdrl/tensor.hpp"

namespace sdrl::nn {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    const std::size_t n = params.size();
    if (grads.size() != n || state.m.size() != n || state.v.size() != n)
        throw UsageError("adam_step: length mismatch");
    if (!all_finite(grads))
        throw NumericError("adam_step: non-finite gradient");

    state.t += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

void soft_update(std::span<double> target, std::span<const double> online, double tau) {
    if (target.size() != online.size())
        throw UsageError("soft_update: length mismatch");
    if (!(tau >= 0.0 && tau <= 1.0))
        throw ConfigError("soft_update: tau must be in [0,1], got " + std::to_string(tau));
    for (std::size_t i = 0; i < target.size(); ++i)
        target[i] = (1.0 - tau) * target[i] + tau * online[i];
}

}  // namespace sdrl::nn
