#pragma once

#include <array>

#include "sdrl/rng.hpp"

namespace sdrl::rl {

/// Ornstein-Uhlenbeck exploration noise, one state per action dimension.
/// x <- x + theta (mu - x) dt + sigma sqrt(dt) xi, mu = 0. Reset at each
/// episode start.
struct OUProcess {
    std::array<double, 2> x{0.0, 0.0};
    double theta = 0.15;
    double sigma = 0.2;
    double dt = 1.0;

    void reset() { x = {0.0, 0.0}; }

    std::array<double, 2> sample(RandomStream& rng) {
        const double root_dt = std::sqrt(dt);
        for (double& xi : x)
            xi += theta * (0.0 - xi) * dt + sigma * root_dt * rng.gaussian();
        return x;
    }
};

}  // namespace sdrl::rl
