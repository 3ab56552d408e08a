#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sdrl/rng.hpp"

namespace sdrl::sd {

/// One dropping configuration: on/off flag per sensor block, at least one
/// flag set. index is the 1-based position in enumeration order, which reads
/// the flag tuple as a binary numeral with sensor 1 as the most significant
/// bit, so index == that numeral's value.
struct DropConfig {
    std::vector<std::uint8_t> flags;
    int index = 0;

    bool all_on() const {
        for (auto f : flags)
            if (!f) return false;
        return true;
    }
};

/// All 2^M - 1 non-empty configurations in ascending binary order,
/// indexed 1..N. Requires 1 <= sensors <= 16.
std::vector<DropConfig> enumerate_configs(int sensors);

/// alpha = sum(K_i) / sum(delta_i K_i). Equals 1 for the all-on config and
/// grows as blocks are dropped.
double rescale_factor(const DropConfig& config, std::span<const int> dims);

/// Per-element multiplier over the flattened state: alpha * delta_i repeated
/// over block i's dims.
std::vector<double> mask_multipliers(const DropConfig& config, std::span<const int> dims);

/// Masks a flattened multimodal state: block i scaled by alpha when on,
/// zeroed when off. The same operation serves training (sampled config) and
/// evaluation (availability-implied config).
std::vector<double> apply_mask(std::span<const double> state, const DropConfig& config,
                               std::span<const int> dims);
void apply_mask_inplace(std::span<double> state, const DropConfig& config,
                        std::span<const int> dims);

/// N-state categorical law over non-empty dropping configurations.
/// Immutable once handed to a training loop; replace rather than mutate.
class DropDistribution {
public:
    DropDistribution() = default;
    DropDistribution(int sensors, std::vector<double> probabilities);

    static DropDistribution uniform(int sensors);
    /// All mass on one configuration (1-based index).
    static DropDistribution one_hot(int sensors, int index);
    static DropDistribution all_on(int sensors);

    int sensors() const { return sensors_; }
    int num_configs() const { return static_cast<int>(configs_.size()); }
    const std::vector<double>& probabilities() const { return probs_; }
    const std::vector<DropConfig>& configs() const { return configs_; }
    const DropConfig& config(int index) const;  // 1-based

    /// Runtime hook for replacing the probabilities (e.g. to down-weight a
    /// degrading sensor). Validates the simplex constraint.
    void set_probabilities(std::vector<double> probabilities);

private:
    int sensors_ = 0;
    std::vector<double> probs_;
    std::vector<DropConfig> configs_;
};

/// Draws a configuration; consumes exactly one uniform variate.
const DropConfig& sample_config(const DropDistribution& dist, RandomStream& rng);

/// Pseudo-Bernoulli marginal per sensor: p(i) = sum_j delta_j(i) p_j.
std::vector<double> marginal_on_prob(const DropDistribution& dist);

}  // namespace sdrl::sd
