#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sdrl/agents.hpp"
#include "sdrl/env.hpp"
#include "sdrl/ou.hpp"
#include "sdrl/replay.hpp"

namespace sdrl::rl {

struct EpisodeLog {
    int episode = 0;
    int steps = 0;
    double ret = 0.0;
    double bellman = 0.0;  // mean over the episode's updates
    double aux = 0.0;
    int cstar_mode = -1;  // most frequent c* index, -1 when aux is off
};

void write_curve_csv(const std::string& path, const std::vector<EpisodeLog>& curve);

/// Off-policy training driver: owns the environment, agent, replay buffer,
/// exploration process, and one named random stream per consumer so that
/// trajectories replay bit-for-bit from a checkpoint.
class Trainer {
public:
    Trainer(EnvConfig env_cfg, TrainSettings settings);

    /// Runs episodes until settings.episodes have completed in total.
    void run();
    void run_episodes(int n);

    const std::vector<EpisodeLog>& curve() const { return curve_; }
    Agent& agent() { return *agent_; }
    const Agent& agent() const { return *agent_; }
    const TrainSettings& settings() const { return settings_; }
    const EnvConfig& env_config() const { return env_cfg_; }
    int episodes_done() const { return episodes_done_; }
    long total_steps() const { return total_steps_; }

    /// Exploration sigma after `step` environment steps (linear anneal over
    /// the planned budget).
    double ou_sigma_at(long step) const;

    // checkpoint surface
    struct StreamState {
        std::string env, ou, replay, sd, dropout;
    };
    StreamState stream_state() const;
    void restore_stream_state(const StreamState& st);
    void restore_progress(int episodes_done, long total_steps);
    ReplayBuffer& buffer() { return buffer_; }
    const ReplayBuffer& buffer() const { return buffer_; }

private:
    EnvConfig env_cfg_;
    TrainSettings settings_;
    TrackEnv env_;
    std::unique_ptr<Agent> agent_;
    ReplayBuffer buffer_;
    OUProcess ou_;
    RandomStream env_rng_, ou_rng_, replay_rng_, sd_rng_, dropout_rng_;
    std::vector<EpisodeLog> curve_;
    int episodes_done_ = 0;
    long total_steps_ = 0;
};

/// Evaluation rollouts with the deterministic policy. Observations pass
/// through the optional noise/failure spec before the agent sees them; the
/// availability-implied dropping configuration is applied by act().
struct EvalRun {
    std::vector<double> returns;
    double mean = 0.0;
    double stddev = 0.0;
};

EvalRun evaluate_policy(const Agent& agent, const EnvConfig& env_cfg,
                        const SensorNoiseSpec* noise, int episodes, std::uint64_t seed,
                        std::vector<TrajectoryRow>* first_trajectory = nullptr);

}  // namespace sdrl::rl
