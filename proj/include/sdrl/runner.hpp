#pragma once

#include <array>
#include <string>
#include <vector>

#include "sdrl/analysis.hpp"
#include "sdrl/config.hpp"

namespace sdrl::harness {

struct CellOutcome {
    std::string variant;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::string dir;
    double last10_return = 0.0;
    double clean_eval = 0.0;
    double sensitivity = 0.0;
    bool has_sensitivity = false;
    std::array<double, 2> action_var{0.0, 0.0};
    bool has_variance = false;
    double pc1_fraction = 0.0;
    bool has_pca = false;
};

/// Trains one (variant, seed) cell into out_dir/{variant}/{seed}/ and runs
/// the enabled analyses against the trained agent.
CellOutcome run_cell(const ExperimentConfig& cfg, const std::string& variant,
                     std::uint64_t seed);

/// Runs the enabled analyses for an already-trained agent, writing reports
/// into dir. Used by run_cell and the analyze subcommand.
void run_analyses(const ExperimentConfig& cfg, rl::Agent& agent, const EnvConfig& env,
                  const std::string& dir, std::uint64_t seed, CellOutcome* outcome);

/// Full variants x seeds matrix. Independent cells may run on parallel
/// workers; all numeric artifacts stay byte-reproducible (timestamps are
/// confined to run.log). Failed cells are recorded and the rest continue.
/// Returns nonzero when any cell failed.
int run_matrix(const ExperimentConfig& cfg, std::vector<CellOutcome>* outcomes = nullptr);

void write_index_csv(const std::string& path, const ExperimentConfig& cfg,
                     const std::vector<CellOutcome>& outcomes);

}  // namespace sdrl::harness
