#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sdrl/agents.hpp"
#include "sdrl/env.hpp"

namespace sdrl::harness {

/// Everything a run needs, resolved from a plain-text `key = value` file
/// with `[section]` headers. Defaults follow the desk-scale setup: three
/// sensors, uniform dropping distribution over the 7 non-empty subsets,
/// minibatch 16, learning rates 1e-4 / 1e-3.
struct ExperimentConfig {
    // experiment
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::vector<std::uint64_t> seeds;  // optional matrix seeds; defaults to {seed}
    std::string out_dir;               // empty -> $SDRL_OUT_DIR or "runs"
    std::string algo = "ddpg";
    std::vector<std::string> variants = {"multi-sd"};
    std::vector<std::string> analyses = {"robustness", "subpolicy", "sensitivity",
                                         "variance", "pca", "saliency"};
    int eval_episodes = 5;
    int eval_states = 100;
    int workers = 0;  // 0 = hardware concurrency

    // env
    std::string track_file;  // empty -> built-in stadium
    double track_straight = 80.0;
    double track_radius = 30.0;
    double track_half_width = 5.0;
    double dt = 0.05;
    double max_range = 50.0;
    int laser_frames = 1;
    int image_frames = 1;
    int image_size = 16;
    double image_cell = 1.0;

    // train
    int episodes = 150;
    int steps = 400;
    double gamma = 0.99;
    double tau = 0.001;
    int batch_size = 16;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double lambda = -1.0;        // <0 -> variant default (0.05 for multi-sd-aux)
    double dropout_keep = -1.0;  // <0 -> variant default (0.8 for multi-dropout)
    int warmup = 1000;
    long buffer_capacity = 100000;
    int hidden1 = 64;
    int hidden2 = 64;
    double ou_theta = 0.15;
    double ou_sigma0 = 0.2;
    double ou_sigma1 = 0.05;
    double ou_dt = 1.0;

    // sensor dropout
    std::string sd_distribution = "uniform";  // or an explicit probability list

    // noise scenarios for the robustness table
    std::vector<std::pair<std::string, SensorNoiseSpec>> noise_grid;
};

/// Parses and validates; unknown keys, type errors, and a missing seed are
/// reported with the offending line number.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

std::string serialize_config(const ExperimentConfig& cfg);

EnvConfig make_env_config(const ExperimentConfig& cfg);
rl::TrainSettings make_train_settings(const ExperimentConfig& cfg, rl::Variant variant,
                                      std::uint64_t seed);

/// Scenario list for robustness_eval; the built-in grid perturbs each sensor
/// alone and then all of them at sigma 0.1.
std::vector<std::pair<std::string, SensorNoiseSpec>> noise_grid(const ExperimentConfig& cfg);

}  // namespace sdrl::harness
