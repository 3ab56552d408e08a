#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sdrl/errors.hpp"

namespace sdrl::nn {

/// Dense n-dimensional array of doubles with a gradient buffer of the same
/// length. Row-major storage. The gradient starts zeroed.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;

    Tensor() = default;

    explicit Tensor(std::vector<int> shape_in)
        : shape(std::move(shape_in)), data(numel_of(shape), 0.0), grad(data.size(), 0.0) {}

    Tensor(std::vector<int> shape_in, std::vector<double> values)
        : shape(std::move(shape_in)), data(std::move(values)), grad(data.size(), 0.0) {
        if (data.size() != numel_of(shape))
            throw ConfigError("tensor: data length does not match shape");
    }

    static Tensor vector(std::vector<double> values) {
        const int n = static_cast<int>(values.size());
        return Tensor({n}, std::move(values));
    }

    std::size_t numel() const { return data.size(); }

    static std::size_t numel_of(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw ConfigError("tensor: non-positive dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

inline bool all_finite(std::span<const double> xs) {
    for (double v : xs)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace sdrl::nn
