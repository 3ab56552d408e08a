#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "sdrl/agents.hpp"
#include "sdrl/env.hpp"
#include "sdrl/train.hpp"

namespace sdrl::analysis {

/// Per-input-element attribution: sum over action dimensions of the
/// absolute policy gradient. Exactly zero on blocks the configuration
/// masks off.
std::vector<double> saliency(const rl::Agent& agent, std::span<const double> obs,
                             const sd::DropConfig& config);

struct SensitivityReport {
    double ratio = 0.0;  // mean of per-state ratios
    std::vector<double> per_state;
    std::vector<int> numerator_sensors;  // indices into the agent's sensor list
    std::vector<int> denominator_sensors;
    int states_used = 0;
    int excluded = 0;        // states dropped for a zero denominator
    bool degenerate = false;  // every state was excluded
};

/// Core of the sensitivity metric over precomputed per-state salience maps;
/// block means are per-element so dimension counts do not skew the ratio.
SensitivityReport sensitivity_from_salience(const std::vector<std::vector<double>>& salience,
                                            std::span<const int> dims,
                                            const std::vector<int>& numerator_sensors,
                                            const std::vector<int>& denominator_sensors);

/// Relative gradient magnitude of the policy between two sensor subsets,
/// averaged over evaluation states (>= 100 recommended).
SensitivityReport sensitivity_ratio(const rl::Agent& agent,
                                    const std::vector<std::vector<double>>& states,
                                    const std::vector<int>& numerator_sensors,
                                    const std::vector<int>& denominator_sensors);

struct SubPolicyEval {
    struct Row {
        int config_index = 0;
        std::string flags;
        double mean = 0.0;
        double stddev = 0.0;
        double normalized = 0.0;  // mean / anchor
    };
    std::vector<Row> rows;
    double anchor = 0.0;  // all-on configuration mean return
};

/// Seeded evaluation episodes per dropping configuration, normalized against
/// the all-on configuration.
SubPolicyEval eval_subpolicy(const rl::Agent& agent, const EnvConfig& env,
                             const std::vector<int>& config_indices, int episodes,
                             std::uint64_t seed);

struct VarianceReport {
    std::array<double, 2> per_dim{0.0, 0.0};
    int states = 0;
};

/// Population variance per action dimension over one state's sub-policy
/// actions.
std::array<double, 2> action_variance_of(const std::vector<std::array<double, 2>>& actions);

/// Variance of sub-policy actions across all dropping configurations,
/// averaged over evaluation states.
VarianceReport action_variance(const rl::Agent& agent,
                               const std::vector<std::vector<double>>& states);

struct PcaResult {
    std::vector<std::vector<double>> components;  // rank x d
    std::vector<double> fractions;                // eigenvalue / total variance
    std::vector<std::vector<double>> projected;   // n x rank
    int rank = 0;
};

/// Top-k principal components via deterministic power iteration with
/// deflation (tolerance 1e-10, at most 10000 iterations per component).
/// Rank-deficient inputs produce fewer than k components.
PcaResult pca_embed(const std::vector<std::vector<double>>& rows, int k);

struct RobustnessRow {
    std::string scenario;
    bool operable = true;
    double noisy_mean = 0.0;
    double drop_pct = 0.0;
};

struct RobustnessReport {
    double clean_mean = 0.0;
    std::vector<RobustnessRow> rows;
};

/// Mean return under each noise/failure scenario against the clean run,
/// with drop% = (clean - noisy) / clean * 100. Scenarios that leave the
/// agent without sensors are reported non-operable.
RobustnessReport robustness_eval(const rl::Agent& agent, const EnvConfig& env,
                                 const std::vector<std::pair<std::string, SensorNoiseSpec>>& grid,
                                 int episodes, std::uint64_t seed);

/// Greedy on-policy rollouts under the all-on configuration until at least
/// min_states flattened observations are collected.
std::vector<std::vector<double>> collect_states(const rl::Agent& agent, const EnvConfig& env,
                                                int min_states, std::uint64_t seed);

/// Last-hidden-layer activations, one row per (state, config) pair; labels
/// receive each row's config index.
std::vector<std::vector<double>> collect_embeddings(const rl::Agent& agent,
                                                    const std::vector<std::vector<double>>& states,
                                                    std::vector<int>* labels = nullptr);

void write_saliency_csv(const std::string& path, const rl::Agent& agent,
                        std::span<const double> salience);
void write_sensitivity_csv(const std::string& path, const SensitivityReport& report);
void write_subpolicy_csv(const std::string& path, const SubPolicyEval& eval);
void write_variance_csv(const std::string& path, const VarianceReport& report);
void write_pca_csv(const std::string& path, const PcaResult& pca);
void write_pca_points_csv(const std::string& path, const PcaResult& pca,
                          const std::vector<int>& labels);
void write_robustness_csv(const std::string& path, const RobustnessReport& report);

}  // namespace sdrl::analysis
