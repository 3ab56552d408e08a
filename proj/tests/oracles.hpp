// Test-only reference implementations, written independently of the library
// code paths they check.
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "sdrl/net.hpp"

namespace oracle {

// Plain re-implementation of the layer math over a Net's parameter vector.
inline std::vector<double> net_forward(const sdrl::nn::Net& net, std::vector<double> x) {
    using sdrl::nn::Activation;
    using sdrl::nn::LayerSpec;
    const auto& params = net.params();
    std::size_t off = 0;
    for (const LayerSpec& s : net.layers()) {
        std::vector<double> y;
        switch (s.kind) {
            case LayerSpec::Kind::dense: {
                y.resize(s.out_dim);
                for (int o = 0; o < s.out_dim; ++o) {
                    double acc = params[off + s.in_dim * s.out_dim + o];
                    for (int i = 0; i < s.in_dim; ++i)
                        acc += params[off + o * s.in_dim + i] * x[i];
                    y[o] = acc;
                }
                break;
            }
            case LayerSpec::Kind::conv1d: {
                const int C = s.in_channels, L = s.in_len, F = s.filters, K = s.ksize;
                const int Lo = s.conv1d_out_len();
                y.assign(F * Lo, 0.0);
                for (int f = 0; f < F; ++f)
                    for (int j = 0; j < Lo; ++j) {
                        double acc = params[off + F * C * K + f];
                        for (int c = 0; c < C; ++c)
                            for (int k = 0; k < K; ++k)
                                acc += params[off + (f * C + c) * K + k] *
                                       x[c * L + j * s.stride + k];
                        y[f * Lo + j] = acc;
                    }
                break;
            }
            case LayerSpec::Kind::conv2d: {
                const int C = s.in_channels, H = s.in_h, W = s.in_w, F = s.filters, K = s.ksize;
                const int Ho = s.conv2d_out_h(), Wo = s.conv2d_out_w();
                y.assign(F * Ho * Wo, 0.0);
                for (int f = 0; f < F; ++f)
                    for (int oh = 0; oh < Ho; ++oh)
                        for (int ow = 0; ow < Wo; ++ow) {
                            double acc = params[off + F * C * K * K + f];
                            for (int c = 0; c < C; ++c)
                                for (int kh = 0; kh < K; ++kh)
                                    for (int kw = 0; kw < K; ++kw)
                                        acc += params[off + ((f * C + c) * K + kh) * K + kw] *
                                               x[(c * H + oh * s.stride + kh) * W +
                                                 ow * s.stride + kw];
                            y[(f * Ho + oh) * Wo + ow] = acc;
                        }
                break;
            }
            case LayerSpec::Kind::activation: {
                y.resize(x.size());
                for (std::size_t i = 0; i < x.size(); ++i) {
                    switch (s.act) {
                        case Activation::relu: y[i] = x[i] > 0 ? x[i] : 0.0; break;
                        case Activation::tanh: y[i] = std::tanh(x[i]); break;
                        case Activation::sigmoid: y[i] = 1.0 / (1.0 + std::exp(-x[i])); break;
                        case Activation::linear: y[i] = x[i]; break;
                    }
                }
                break;
            }
        }
        off += static_cast<std::size_t>(s.param_count());
        x = std::move(y);
    }
    return x;
}

// Jacobi eigenvalue iteration for small symmetric matrices; returns
// eigenvalues sorted descending.
inline std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> m) {
    const std::size_t n = m.size();
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += m[i][j] * m[i][j];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(m[p][q]) < 1e-30) continue;
                const double theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m[k][p], mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m[p][k], mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = m[i][i];
    std::sort(eig.rbegin(), eig.rend());
    return eig;
}

}  // namespace oracle
