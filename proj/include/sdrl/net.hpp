#pragma once

#include <span>
#include <string>
#include <vector>

#include "sdrl/rng.hpp"
#include "sdrl/tensor.hpp"

namespace sdrl::nn {

enum class Activation { relu, tanh, sigmoid, linear };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Shape and hyperparameters of one layer. Output sizes for convolutions use
/// valid padding: out = floor((in - k) / stride) + 1, which must be >= 1.
struct LayerSpec {
    enum class Kind { dense, conv1d, conv2d, activation };

    Kind kind = Kind::dense;
    Activation act = Activation::linear;  // activation layers only
    int in_channels = 0;                  // conv layers
    int in_len = 0;                       // conv1d spatial length
    int in_h = 0, in_w = 0;               // conv2d spatial size
    int in_dim = 0;                       // dense / activation input length
    int out_dim = 0;                      // dense output length
    int filters = 0;
    int ksize = 0;
    int stride = 1;

    static LayerSpec dense(int in, int out);
    static LayerSpec conv1d(int in_channels, int in_len, int filters, int ksize, int stride);
    static LayerSpec conv2d(int in_channels, int in_h, int in_w, int filters, int ksize, int stride);
    static LayerSpec activation_layer(Activation a, int dim);

    int input_size() const;
    int output_size() const;
    int param_count() const;
    int fan_in() const;
    int conv1d_out_len() const { return (in_len - ksize) / stride + 1; }
    int conv2d_out_h() const { return (in_h - ksize) / stride + 1; }
    int conv2d_out_w() const { return (in_w - ksize) / stride + 1; }
};

/// Feed-forward network: a validated sequence of layers over one flat
/// parameter vector, with reverse-mode gradients through a forward tape.
///
/// Single-threaded per instance; instances never share state.
class Net {
public:
    /// Per-call activation record. acts[i] is the input of layer i,
    /// acts[layers] is the network output.
    struct Tape {
        std::vector<std::vector<double>> acts;
    };

    Net() = default;

    /// Builds the net and initializes parameters uniform in
    /// [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    Net(std::vector<LayerSpec> layers, RandomStream& rng);

    int input_size() const { return layers_.empty() ? 0 : layers_.front().input_size(); }
    int output_size() const { return layers_.empty() ? 0 : layers_.back().output_size(); }
    const std::vector<LayerSpec>& layers() const { return layers_; }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::vector<double>& grads() { return grads_; }
    const std::vector<double>& grads() const { return grads_; }
    void zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

    /// Re-initializes one layer's parameters uniform in [lo, hi]. Used for
    /// the near-zero init of final actor layers.
    void reinit_layer_uniform(std::size_t layer, double lo, double hi, RandomStream& rng);

    /// Runs the forward pass. If tape is non-null it is filled so that
    /// backward() can run without recomputation. Throws NumericError with
    /// the offending layer index if any intermediate is non-finite.
    std::vector<double> forward(std::span<const double> input, Tape* tape = nullptr) const;

    /// Tensor-level wrappers matching the module contract.
    Tensor forward(const Tensor& input, Tape* tape = nullptr) const;

    /// Back-propagates upstream through the tape. Parameter gradients are
    /// accumulated into grads() unless accumulate_param_grads is false
    /// (input-gradient-only mode, used when a downstream consumer must not
    /// move this net's parameters). Returns the gradient w.r.t. the input.
    std::vector<double> backward(const Tape& tape, std::span<const double> upstream,
                                 bool accumulate_param_grads = true);

    Tensor backward(const Tape& tape, const Tensor& upstream,
                    bool accumulate_param_grads = true);

private:
    std::vector<LayerSpec> layers_;
    std::vector<double> params_;
    std::vector<double> grads_;
    std::vector<std::size_t> offsets_;  // param offset per layer

    void check_tape(const Tape& tape) const;
};

}  // namespace sdrl::nn
