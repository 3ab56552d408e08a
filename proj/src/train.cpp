#include "sdrl/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "sdrl/errors.hpp"

namespace sdrl::rl {

namespace {

// fixed stream tags; changing these invalidates saved checkpoints
enum StreamTag : std::uint64_t {
    kInitTag = 0x5d01,
    kEnvTag = 0x5d02,
    kOuTag = 0x5d03,
    kReplayTag = 0x5d04,
    kSdTag = 0x5d05,
    kDropoutTag = 0x5d06,
};

}  // namespace

void write_curve_csv(const std::string& path, const std::vector<EpisodeLog>& curve) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write curve file: " + path);
    out.precision(17);
    out << "episode,steps,return,bellman_loss,aux_loss,cstar_index_mode\n";
    for (const auto& e : curve)
        out << e.episode << ',' << e.steps << ',' << e.ret << ',' << e.bellman << ',' << e.aux
            << ',' << e.cstar_mode << '\n';
}

Trainer::Trainer(EnvConfig env_cfg, TrainSettings settings)
    : env_cfg_(std::move(env_cfg)),
      settings_(std::move(settings)),
      env_(env_cfg_),
      buffer_(settings_.buffer_capacity),
      env_rng_(RandomStream::derive(settings_.seed, kEnvTag)),
      ou_rng_(RandomStream::derive(settings_.seed, kOuTag)),
      replay_rng_(RandomStream::derive(settings_.seed, kReplayTag)),
      sd_rng_(RandomStream::derive(settings_.seed, kSdTag)),
      dropout_rng_(RandomStream::derive(settings_.seed, kDropoutTag)) {
    settings_.validate();
    env_cfg_ = env_.config();
    RandomStream init_rng = RandomStream::derive(settings_.seed, kInitTag);
    agent_ = make_agent(env_cfg_, settings_, init_rng);
    ou_.theta = settings_.ou_theta;
    ou_.dt = settings_.ou_dt;
}

double Trainer::ou_sigma_at(long step) const {
    const long planned = static_cast<long>(settings_.episodes) * settings_.steps_per_episode;
    if (planned <= 0) return settings_.ou_sigma0;
    const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(planned));
    return settings_.ou_sigma0 + (settings_.ou_sigma1 - settings_.ou_sigma0) * frac;
}

void Trainer::run() {
    run_episodes(settings_.episodes - episodes_done_);
}

void Trainer::run_episodes(int n) {
    for (int e = 0; e < n; ++e) {
        MultiObservation obs = env_.reset(static_cast<std::uint64_t>(episodes_done_));
        std::vector<double> flat = flatten_observation(obs, env_cfg_, agent_->sensors());
        ou_.reset();

        EpisodeLog log;
        log.episode = episodes_done_;
        double bellman_sum = 0.0, aux_sum = 0.0;
        int updates = 0;
        std::map<int, int> cstar_counts;

        for (int step = 0; step < settings_.steps_per_episode; ++step) {
            ou_.sigma = ou_sigma_at(total_steps_);
            const auto noise = ou_.sample(ou_rng_);
            auto action = agent_->act_greedy(flat, agent_->all_on_config());
            action[0] = std::clamp(action[0] + noise[0], -1.0, 1.0);
            action[1] = std::clamp(action[1] + noise[1], -1.0, 1.0);

            auto res = env_.step(action);
            std::vector<double> flat2 = flatten_observation(res.obs, env_cfg_, agent_->sensors());
            buffer_.push({flat, action, res.reward, flat2, res.done});
            log.ret += res.reward;
            ++log.steps;
            ++total_steps_;

            if (buffer_.size() >= static_cast<std::size_t>(settings_.warmup)) {
                const auto batch = buffer_.sample_indices(settings_.batch_size, replay_rng_);
                const sd::DropConfig config =
                    sample_config(agent_->drop_distribution(), sd_rng_);
                const UpdateStats st =
                    agent_->update(buffer_, batch, settings_, config, dropout_rng_);
                bellman_sum += st.bellman;
                aux_sum += st.aux;
                if (st.cstar >= 0) ++cstar_counts[st.cstar];
                ++updates;
            }

            flat = std::move(flat2);
            if (res.done) break;
        }

        if (updates > 0) {
            log.bellman = bellman_sum / updates;
            log.aux = aux_sum / updates;
        }
        if (!cstar_counts.empty()) {
            int best = -1, best_count = -1;
            for (const auto& [idx, count] : cstar_counts) {
                if (count > best_count) {
                    best = idx;
                    best_count = count;
                }
            }
            log.cstar_mode = best;
        }
        curve_.push_back(log);
        ++episodes_done_;
    }
}

Trainer::StreamState Trainer::stream_state() const {
    return {env_rng_.save_state(), ou_rng_.save_state(), replay_rng_.save_state(),
            sd_rng_.save_state(), dropout_rng_.save_state()};
}

void Trainer::restore_stream_state(const StreamState& st) {
    env_rng_.load_state(st.env);
    ou_rng_.load_state(st.ou);
    replay_rng_.load_state(st.replay);
    sd_rng_.load_state(st.sd);
    dropout_rng_.load_state(st.dropout);
}

void Trainer::restore_progress(int episodes_done, long total_steps) {
    episodes_done_ = episodes_done;
    total_steps_ = total_steps;
}

EvalRun evaluate_policy(const Agent& agent, const EnvConfig& env_cfg,
                        const SensorNoiseSpec* noise, int episodes, std::uint64_t seed,
                        std::vector<TrajectoryRow>* first_trajectory) {
    if (episodes <= 0) throw ConfigError("evaluate_policy: episodes must be positive");
    EvalRun run;
    TrackEnv env(env_cfg);
    for (int e = 0; e < episodes; ++e) {
        RandomStream noise_rng = RandomStream::derive(seed, 0x9e77 + static_cast<std::uint64_t>(e));
        MultiObservation obs = env.reset(seed + static_cast<std::uint64_t>(e));
        if (noise) obs = corrupt(obs, *noise, env_cfg, noise_rng);
        double ret = 0.0;
        bool done = false;
        double t = 0.0;
        while (!done) {
            const auto action = act(agent, obs, env_cfg);
            auto res = env.step(action);
            ret += res.reward;
            done = res.done;
            obs = noise ? corrupt(res.obs, *noise, env_cfg, noise_rng) : res.obs;
            t += env_cfg.dt;
            if (first_trajectory && e == 0) {
                const CarState& s = env.state();
                first_trajectory->push_back({t, s.position.x, s.position.y, s.heading, s.v_x,
                                             s.track_pos, s.angle, res.reward, done});
            }
        }
        run.returns.push_back(ret);
    }
    double sum = 0.0;
    for (double r : run.returns) sum += r;
    run.mean = sum / run.returns.size();
    double var = 0.0;
    for (double r : run.returns) var += (r - run.mean) * (r - run.mean);
    run.stddev = std::sqrt(var / run.returns.size());
    return run;
}

}  // namespace sdrl::rl
