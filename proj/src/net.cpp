#include "sdrl/net.hpp"

#include <algorithm>
#include <cmath>

#include "sdrl/errors.hpp"

namespace sdrl::nn {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::linear: return "linear";
    }
    return "?";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "linear") return Activation::linear;
    throw ConfigError("unknown activation: " + name);
}

LayerSpec LayerSpec::dense(int in, int out) {
    if (in <= 0 || out <= 0) throw ConfigError("dense: non-positive size");
    LayerSpec s;
    s.kind = Kind::dense;
    s.in_dim = in;
    s.out_dim = out;
    return s;
}

LayerSpec LayerSpec::conv1d(int in_channels, int in_len, int filters, int ksize, int stride) {
    LayerSpec s;
    s.kind = Kind::conv1d;
    s.in_channels = in_channels;
    s.in_len = in_len;
    s.filters = filters;
    s.ksize = ksize;
    s.stride = stride;
    if (in_channels <= 0 || in_len <= 0 || filters <= 0 || ksize <= 0 || stride <= 0)
        throw ConfigError("conv1d: non-positive parameter");
    // floor semantics: an input shorter than the kernel has no valid output
    if (in_len < ksize || s.conv1d_out_len() < 1)
        throw ConfigError("conv1d: output length < 1 for input length " + std::to_string(in_len));
    return s;
}

LayerSpec LayerSpec::conv2d(int in_channels, int in_h, int in_w, int filters, int ksize, int stride) {
    LayerSpec s;
    s.kind = Kind::conv2d;
    s.in_channels = in_channels;
    s.in_h = in_h;
    s.in_w = in_w;
    s.filters = filters;
    s.ksize = ksize;
    s.stride = stride;
    if (in_channels <= 0 || in_h <= 0 || in_w <= 0 || filters <= 0 || ksize <= 0 || stride <= 0)
        throw ConfigError("conv2d: non-positive parameter");
    if (in_h < ksize || in_w < ksize || s.conv2d_out_h() < 1 || s.conv2d_out_w() < 1)
        throw ConfigError("conv2d: output spatial size < 1");
    return s;
}

LayerSpec LayerSpec::activation_layer(Activation a, int dim) {
    if (dim <= 0) throw ConfigError("activation: non-positive size");
    LayerSpec s;
    s.kind = Kind::activation;
    s.act = a;
    s.in_dim = dim;
    return s;
}

int LayerSpec::input_size() const {
    switch (kind) {
        case Kind::dense:
        case Kind::activation: return in_dim;
        case Kind::conv1d: return in_channels * in_len;
        case Kind::conv2d: return in_channels * in_h * in_w;
    }
    return 0;
}

int LayerSpec::output_size() const {
    switch (kind) {
        case Kind::dense: return out_dim;
        case Kind::activation: return in_dim;
        case Kind::conv1d: return filters * conv1d_out_len();
        case Kind::conv2d: return filters * conv2d_out_h() * conv2d_out_w();
    }
    return 0;
}

int LayerSpec::param_count() const {
    switch (kind) {
        case Kind::dense: return in_dim * out_dim + out_dim;
        case Kind::conv1d: return filters * in_channels * ksize + filters;
        case Kind::conv2d: return filters * in_channels * ksize * ksize + filters;
        case Kind::activation: return 0;
    }
    return 0;
}

int LayerSpec::fan_in() const {
    switch (kind) {
        case Kind::dense: return in_dim;
        case Kind::conv1d: return in_channels * ksize;
        case Kind::conv2d: return in_channels * ksize * ksize;
        case Kind::activation: return 0;
    }
    return 0;
}

Net::Net(std::vector<LayerSpec> layers, RandomStream& rng) : layers_(std::move(layers)) {
    std::size_t total = 0;
    offsets_.reserve(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (i > 0 && layers_[i].input_size() != layers_[i - 1].output_size())
            throw ConfigError("net: layer " + std::to_string(i) + " input size " +
                              std::to_string(layers_[i].input_size()) + " != previous output " +
                              std::to_string(layers_[i - 1].output_size()));
        offsets_.push_back(total);
        total += static_cast<std::size_t>(layers_[i].param_count());
    }
    params_.resize(total);
    grads_.assign(total, 0.0);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const int n = layers_[i].param_count();
        if (n == 0) continue;
        const double bound = 1.0 / std::sqrt(static_cast<double>(layers_[i].fan_in()));
        for (int k = 0; k < n; ++k) params_[offsets_[i] + k] = rng.uniform(-bound, bound);
    }
}

void Net::reinit_layer_uniform(std::size_t layer, double lo, double hi, RandomStream& rng) {
    if (layer >= layers_.size()) throw UsageError("reinit_layer_uniform: layer index out of range");
    const int n = layers_[layer].param_count();
    for (int k = 0; k < n; ++k) params_[offsets_[layer] + k] = rng.uniform(lo, hi);
}

namespace {

void dense_forward(const LayerSpec& s, const double* w, std::span<const double> x,
                   std::vector<double>& y) {
    const int in = s.in_dim, out = s.out_dim;
    const double* b = w + in * out;
    y.assign(out, 0.0);
    for (int o = 0; o < out; ++o) {
        const double* row = w + o * in;
        double acc = b[o];
        for (int i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// y = Wx + b  =>  dx = W^T g, dW[o][i] = g[o] x[i], db = g
void dense_backward(const LayerSpec& s, const double* w, double* gw, bool accum,
                    std::span<const double> x, std::span<const double> g,
                    std::vector<double>& dx) {
    const int in = s.in_dim, out = s.out_dim;
    dx.assign(in, 0.0);
    for (int o = 0; o < out; ++o) {
        const double go = g[o];
        const double* row = w + o * in;
        for (int i = 0; i < in; ++i) dx[i] += row[i] * go;
    }
    if (accum) {
        double* gb = gw + in * out;
        for (int o = 0; o < out; ++o) {
            const double go = g[o];
            double* grow = gw + o * in;
            for (int i = 0; i < in; ++i) grow[i] += go * x[i];
            gb[o] += go;
        }
    }
}

void conv1d_forward(const LayerSpec& s, const double* w, std::span<const double> x,
                    std::vector<double>& y) {
    const int C = s.in_channels, L = s.in_len, F = s.filters, K = s.ksize, S = s.stride;
    const int Lo = s.conv1d_out_len();
    const double* b = w + F * C * K;
    y.assign(static_cast<std::size_t>(F) * Lo, 0.0);
    for (int f = 0; f < F; ++f) {
        const double* wf = w + f * C * K;
        for (int j = 0; j < Lo; ++j) {
            double acc = b[f];
            const int start = j * S;
            for (int c = 0; c < C; ++c) {
                const double* xc = x.data() + c * L + start;
                const double* wc = wf + c * K;
                for (int k = 0; k < K; ++k) acc += wc[k] * xc[k];
            }
            y[f * Lo + j] = acc;
        }
    }
}

void conv1d_backward(const LayerSpec& s, const double* w, double* gw, bool accum,
                     std::span<const double> x, std::span<const double> g,
                     std::vector<double>& dx) {
    const int C = s.in_channels, L = s.in_len, F = s.filters, K = s.ksize, S = s.stride;
    const int Lo = s.conv1d_out_len();
    dx.assign(static_cast<std::size_t>(C) * L, 0.0);
    double* gb = accum ? gw + F * C * K : nullptr;
    for (int f = 0; f < F; ++f) {
        const double* wf = w + f * C * K;
        double* gwf = accum ? gw + f * C * K : nullptr;
        for (int j = 0; j < Lo; ++j) {
            const double go = g[f * Lo + j];
            if (go == 0.0) continue;
            const int start = j * S;
            for (int c = 0; c < C; ++c) {
                const double* xc = x.data() + c * L + start;
                double* dxc = dx.data() + c * L + start;
                const double* wc = wf + c * K;
                for (int k = 0; k < K; ++k) dxc[k] += wc[k] * go;
                if (accum) {
                    double* gwc = gwf + c * K;
                    for (int k = 0; k < K; ++k) gwc[k] += xc[k] * go;
                }
            }
            if (accum) gb[f] += go;
        }
    }
}

void conv2d_forward(const LayerSpec& s, const double* w, std::span<const double> x,
                    std::vector<double>& y) {
    const int C = s.in_channels, H = s.in_h, W = s.in_w, F = s.filters, K = s.ksize, S = s.stride;
    const int Ho = s.conv2d_out_h(), Wo = s.conv2d_out_w();
    const double* b = w + F * C * K * K;
    y.assign(static_cast<std::size_t>(F) * Ho * Wo, 0.0);
    for (int f = 0; f < F; ++f) {
        const double* wf = w + f * C * K * K;
        for (int oh = 0; oh < Ho; ++oh) {
            for (int ow = 0; ow < Wo; ++ow) {
                double acc = b[f];
                const int h0 = oh * S, w0 = ow * S;
                for (int c = 0; c < C; ++c) {
                    const double* wc = wf + c * K * K;
                    for (int kh = 0; kh < K; ++kh) {
                        const double* xrow = x.data() + (c * H + h0 + kh) * W + w0;
                        const double* wrow = wc + kh * K;
                        for (int kw = 0; kw < K; ++kw) acc += wrow[kw] * xrow[kw];
                    }
                }
                y[(f * Ho + oh) * Wo + ow] = acc;
            }
        }
    }
}

void conv2d_backward(const LayerSpec& s, const double* w, double* gw, bool accum,
                     std::span<const double> x, std::span<const double> g,
                     std::vector<double>& dx) {
    const int C = s.in_channels, H = s.in_h, W = s.in_w, F = s.filters, K = s.ksize, S = s.stride;
    const int Ho = s.conv2d_out_h(), Wo = s.conv2d_out_w();
    dx.assign(static_cast<std::size_t>(C) * H * W, 0.0);
    double* gb = accum ? gw + F * C * K * K : nullptr;
    for (int f = 0; f < F; ++f) {
        const double* wf = w + f * C * K * K;
        double* gwf = accum ? gw + f * C * K * K : nullptr;
        for (int oh = 0; oh < Ho; ++oh) {
            for (int ow = 0; ow < Wo; ++ow) {
                const double go = g[(f * Ho + oh) * Wo + ow];
                if (go == 0.0) continue;
                const int h0 = oh * S, w0 = ow * S;
                for (int c = 0; c < C; ++c) {
                    const double* wc = wf + c * K * K;
                    double* gwc = accum ? gwf + c * K * K : nullptr;
                    for (int kh = 0; kh < K; ++kh) {
                        const double* xrow = x.data() + (c * H + h0 + kh) * W + w0;
                        double* dxrow = dx.data() + (c * H + h0 + kh) * W + w0;
                        const double* wrow = wc + kh * K;
                        for (int kw = 0; kw < K; ++kw) dxrow[kw] += wrow[kw] * go;
                        if (accum) {
                            double* gwrow = gwc + kh * K;
                            for (int kw = 0; kw < K; ++kw) gwrow[kw] += xrow[kw] * go;
                        }
                    }
                }
                if (accum) gb[f] += go;
            }
        }
    }
}

void activation_forward(const LayerSpec& s, std::span<const double> x, std::vector<double>& y) {
    const int n = s.in_dim;
    y.resize(n);
    switch (s.act) {
        case Activation::relu:
            for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
            break;
        case Activation::tanh:
            for (int i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
            break;
        case Activation::sigmoid:
            for (int i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
            break;
        case Activation::linear:
            std::copy(x.begin(), x.end(), y.begin());
            break;
    }
}

// Uses the layer output y where the derivative is cheaper in terms of it.
void activation_backward(const LayerSpec& s, std::span<const double> x,
                         std::span<const double> y, std::span<const double> g,
                         std::vector<double>& dx) {
    const int n = s.in_dim;
    dx.resize(n);
    switch (s.act) {
        case Activation::relu:
            for (int i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? g[i] : 0.0;
            break;
        case Activation::tanh:
            for (int i = 0; i < n; ++i) dx[i] = (1.0 - y[i] * y[i]) * g[i];
            break;
        case Activation::sigmoid:
            for (int i = 0; i < n; ++i) dx[i] = y[i] * (1.0 - y[i]) * g[i];
            break;
        case Activation::linear:
            std::copy(g.begin(), g.end(), dx.begin());
            break;
    }
}

}  // namespace

std::vector<double> Net::forward(std::span<const double> input, Tape* tape) const {
    if (static_cast<int>(input.size()) != input_size())
        throw ConfigError("net forward: input size " + std::to_string(input.size()) +
                          " != expected " + std::to_string(input_size()));
    if (tape) {
        tape->acts.clear();
        tape->acts.reserve(layers_.size() + 1);
        tape->acts.emplace_back(input.begin(), input.end());
    }
    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& s = layers_[i];
        const double* w = params_.data() + offsets_[i];
        switch (s.kind) {
            case LayerSpec::Kind::dense: dense_forward(s, w, cur, next); break;
            case LayerSpec::Kind::conv1d: conv1d_forward(s, w, cur, next); break;
            case LayerSpec::Kind::conv2d: conv2d_forward(s, w, cur, next); break;
            case LayerSpec::Kind::activation: activation_forward(s, cur, next); break;
        }
        if (!all_finite(next))
            throw NumericError("net forward: non-finite output at layer " + std::to_string(i));
        cur.swap(next);
        if (tape) tape->acts.push_back(cur);
    }
    return cur;
}

Tensor Net::forward(const Tensor& input, Tape* tape) const {
    std::vector<double> out = forward(std::span<const double>(input.data), tape);
    const int n = static_cast<int>(out.size());
    return Tensor({n}, std::move(out));
}

void Net::check_tape(const Tape& tape) const {
    if (tape.acts.size() != layers_.size() + 1)
        throw UsageError("net backward: tape does not match this net");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (tape.acts[i].size() != static_cast<std::size_t>(layers_[i].input_size()) ||
            tape.acts[i + 1].size() != static_cast<std::size_t>(layers_[i].output_size()))
            throw UsageError("net backward: stale or mismatched tape at layer " + std::to_string(i));
    }
}

std::vector<double> Net::backward(const Tape& tape, std::span<const double> upstream,
                                  bool accumulate_param_grads) {
    check_tape(tape);
    if (static_cast<int>(upstream.size()) != output_size())
        throw UsageError("net backward: upstream gradient size mismatch");
    std::vector<double> g(upstream.begin(), upstream.end());
    std::vector<double> dx;
    for (std::size_t ri = layers_.size(); ri-- > 0;) {
        const LayerSpec& s = layers_[ri];
        const double* w = params_.data() + offsets_[ri];
        double* gw = grads_.data() + offsets_[ri];
        const auto& x = tape.acts[ri];
        switch (s.kind) {
            case LayerSpec::Kind::dense:
                dense_backward(s, w, gw, accumulate_param_grads, x, g, dx);
                break;
            case LayerSpec::Kind::conv1d:
                conv1d_backward(s, w, gw, accumulate_param_grads, x, g, dx);
                break;
            case LayerSpec::Kind::conv2d:
                conv2d_backward(s, w, gw, accumulate_param_grads, x, g, dx);
                break;
            case LayerSpec::Kind::activation:
                activation_backward(s, x, tape.acts[ri + 1], g, dx);
                break;
        }
        g.swap(dx);
    }
    return g;
}

Tensor Net::backward(const Tape& tape, const Tensor& upstream, bool accumulate_param_grads) {
    std::vector<double> g = backward(tape, std::span<const double>(upstream.data),
                                     accumulate_param_grads);
    const int n = static_cast<int>(g.size());
    return Tensor({n}, std::move(g));
}

}  // namespace sdrl::nn
