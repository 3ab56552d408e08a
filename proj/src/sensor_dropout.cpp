#include "sdrl/sensor_dropout.hpp"

#include <cmath>
#include <string>

#include "sdrl/errors.hpp"

namespace sdrl::sd {

std::vector<DropConfig> enumerate_configs(int sensors) {
    if (sensors < 1 || sensors > 16)
        throw ConfigError("enumerate_configs: sensors must be in [1,16], got " +
                          std::to_string(sensors));
    const int n = (1 << sensors) - 1;
    std::vector<DropConfig> out;
    out.reserve(n);
    for (int v = 1; v <= n; ++v) {
        DropConfig c;
        c.index = v;
        c.flags.resize(sensors);
        for (int i = 0; i < sensors; ++i)
            c.flags[i] = static_cast<std::uint8_t>((v >> (sensors - 1 - i)) & 1);
        out.push_back(std::move(c));
    }
    return out;
}

namespace {

void check_config_dims(const DropConfig& config, std::span<const int> dims) {
    if (config.flags.size() != dims.size())
        throw ConfigError("sensor dropout: config has " + std::to_string(config.flags.size()) +
                          " flags but " + std::to_string(dims.size()) + " dims given");
    for (int d : dims)
        if (d <= 0) throw ConfigError("sensor dropout: dims must be positive");
}

}  // namespace

double rescale_factor(const DropConfig& config, std::span<const int> dims) {
    check_config_dims(config, dims);
    double total = 0.0, kept = 0.0;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        total += dims[i];
        if (config.flags[i]) kept += dims[i];
    }
    if (kept == 0.0)
        throw ConfigError("rescale_factor: all-off configuration is excluded by construction");
    return total / kept;
}

std::vector<double> mask_multipliers(const DropConfig& config, std::span<const int> dims) {
    const double alpha = rescale_factor(config, dims);
    std::vector<double> mask;
    std::size_t total = 0;
    for (int d : dims) total += static_cast<std::size_t>(d);
    mask.reserve(total);
    for (std::size_t i = 0; i < dims.size(); ++i) {
        const double m = config.flags[i] ? alpha : 0.0;
        mask.insert(mask.end(), static_cast<std::size_t>(dims[i]), m);
    }
    return mask;
}

void apply_mask_inplace(std::span<double> state, const DropConfig& config,
                        std::span<const int> dims) {
    const double alpha = rescale_factor(config, dims);
    std::size_t total = 0;
    for (int d : dims) total += static_cast<std::size_t>(d);
    if (state.size() != total)
        throw ConfigError("apply_mask: state length " + std::to_string(state.size()) +
                          " != sum of dims " + std::to_string(total));
    std::size_t off = 0;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        const double m = config.flags[i] ? alpha : 0.0;
        for (int k = 0; k < dims[i]; ++k) state[off + k] *= m;
        off += static_cast<std::size_t>(dims[i]);
    }
}

std::vector<double> apply_mask(std::span<const double> state, const DropConfig& config,
                               std::span<const int> dims) {
    std::vector<double> out(state.begin(), state.end());
    apply_mask_inplace(out, config, dims);
    return out;
}

DropDistribution::DropDistribution(int sensors, std::vector<double> probabilities)
    : sensors_(sensors), configs_(enumerate_configs(sensors)) {
    set_probabilities(std::move(probabilities));
}

DropDistribution DropDistribution::uniform(int sensors) {
    const int n = (1 << sensors) - 1;
    return DropDistribution(sensors, std::vector<double>(n, 1.0 / n));
}

DropDistribution DropDistribution::one_hot(int sensors, int index) {
    const int n = (1 << sensors) - 1;
    if (index < 1 || index > n)
        throw ConfigError("one_hot: config index out of range");
    std::vector<double> p(n, 0.0);
    p[index - 1] = 1.0;
    return DropDistribution(sensors, std::move(p));
}

DropDistribution DropDistribution::all_on(int sensors) {
    return one_hot(sensors, (1 << sensors) - 1);
}

const DropConfig& DropDistribution::config(int index) const {
    if (index < 1 || index > num_configs())
        throw ConfigError("DropDistribution: config index out of range");
    return configs_[index - 1];
}

void DropDistribution::set_probabilities(std::vector<double> probabilities) {
    if (probabilities.size() != configs_.size())
        throw ConfigError("set_probabilities: expected " + std::to_string(configs_.size()) +
                          " probabilities, got " + std::to_string(probabilities.size()));
    double sum = 0.0;
    for (double p : probabilities) {
        if (!(p >= 0.0))
            throw ConfigError("set_probabilities: probabilities must be non-negative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("set_probabilities: probabilities must sum to 1, got " +
                          std::to_string(sum));
    probs_ = std::move(probabilities);
}

const DropConfig& sample_config(const DropDistribution& dist, RandomStream& rng) {
    const double u = rng.uniform01();
    double acc = 0.0;
    const auto& probs = dist.probabilities();
    for (std::size_t j = 0; j + 1 < probs.size(); ++j) {
        acc += probs[j];
        if (u < acc) return dist.configs()[j];
    }
    return dist.configs().back();
}

std::vector<double> marginal_on_prob(const DropDistribution& dist) {
    std::vector<double> marg(dist.sensors(), 0.0);
    const auto& probs = dist.probabilities();
    for (int j = 0; j < dist.num_configs(); ++j) {
        const auto& c = dist.configs()[j];
        for (int i = 0; i < dist.sensors(); ++i)
            if (c.flags[i]) marg[i] += probs[j];
    }
    return marg;
}

}  // namespace sdrl::sd
