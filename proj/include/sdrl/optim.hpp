#pragma once

#include <span>
#include <vector>

namespace sdrl::nn {

/// Adam optimizer state over one flat parameter vector.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    AdamState(std::size_t n, double lr_in)
        : m(n, 0.0), v(n, 0.0), lr(lr_in) {}
};

/// One Adam update with bias correction. Parameters are untouched (and t is
/// not incremented) if any gradient entry is non-finite.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// target <- (1 - tau) * target + tau * online, elementwise. tau in [0, 1].
void soft_update(std::span<double> target, std::span<const double> online, double tau);

}  // namespace sdrl::nn
