#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace sdrl::nn {

/// Compares an analytic gradient against central finite differences.
///
/// value(x) evaluates the scalar function; analytic_grad(x) returns its
/// gradient. Returns max over components of
///   |analytic_i - fd_i| / max(1e-12, |fd_i|)
/// where fd_i = (value(x + h e_i) - value(x - h e_i)) / (2 h).
inline double grad_check(const std::function<double(std::span<const double>)>& value,
                         const std::function<std::vector<double>(std::span<const double>)>& analytic_grad,
                         std::span<const double> x, double h = 1e-5) {
    std::vector<double> probe(x.begin(), x.end());
    const std::vector<double> ga = analytic_grad(probe);
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double keep = probe[i];
        probe[i] = keep + h;
        const double fp = value(probe);
        probe[i] = keep - h;
        const double fm = value(probe);
        probe[i] = keep;
        const double fd = (fp - fm) / (2.0 * h);
        const double rel = std::abs(ga[i] - fd) / std::max(1e-12, std::abs(fd));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace sdrl::nn
