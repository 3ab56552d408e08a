#include "sdrl/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdrl/errors.hpp"
#include "sdrl/track.hpp"

namespace sdrl::harness {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

struct Parser {
    std::string origin;
    int lineno = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + msg);
    }

    double to_double(const std::string& v) const {
        try {
            std::size_t used = 0;
            const double x = std::stod(v, &used);
            if (used != v.size()) fail("not a number: `" + v + "`");
            return x;
        } catch (const ConfigError&) {
            throw;
        } catch (...) {
            fail("not a number: `" + v + "`");
        }
    }

    long to_long(const std::string& v) const {
        try {
            std::size_t used = 0;
            const long x = std::stol(v, &used);
            if (used != v.size()) fail("not an integer: `" + v + "`");
            return x;
        } catch (const ConfigError&) {
            throw;
        } catch (...) {
            fail("not an integer: `" + v + "`");
        }
    }

    std::uint64_t to_u64(const std::string& v) const {
        try {
            std::size_t used = 0;
            const unsigned long long x = std::stoull(v, &used);
            if (used != v.size()) fail("not an unsigned integer: `" + v + "`");
            return x;
        } catch (const ConfigError&) {
            throw;
        } catch (...) {
            fail("not an unsigned integer: `" + v + "`");
        }
    }
};

}  // namespace

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), path);
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    Parser p{origin};
    std::istringstream in(text);
    std::string raw;
    std::string section = "experiment";

    while (std::getline(in, raw)) {
        ++p.lineno;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') p.fail("unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "experiment" && section != "env" && section != "train" &&
                section != "sd" && section != "noise")
                p.fail("unknown section: [" + section + "]");
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) p.fail("expected `key = value`");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) p.fail("empty key");
        if (value.empty()) p.fail("empty value for key `" + key + "`");

        if (section == "experiment") {
            if (key == "seed") {
                cfg.seed = p.to_u64(value);
                cfg.seed_set = true;
            } else if (key == "seeds") {
                for (const auto& s : split_list(value)) cfg.seeds.push_back(p.to_u64(s));
            } else if (key == "out_dir") {
                cfg.out_dir = value;
            } else if (key == "algo") {
                cfg.algo = value;
            } else if (key == "variants") {
                cfg.variants = split_list(value);
            } else if (key == "analyses") {
                cfg.analyses = value == "none" ? std::vector<std::string>{} : split_list(value);
            } else if (key == "eval_episodes") {
                cfg.eval_episodes = static_cast<int>(p.to_long(value));
            } else if (key == "eval_states") {
                cfg.eval_states = static_cast<int>(p.to_long(value));
            } else if (key == "workers") {
                cfg.workers = static_cast<int>(p.to_long(value));
            } else {
                p.fail("unknown key `" + key + "` in [experiment]");
            }
        } else if (section == "env") {
            if (key == "track") cfg.track_file = value;
            else if (key == "track_straight") cfg.track_straight = p.to_double(value);
            else if (key == "track_radius") cfg.track_radius = p.to_double(value);
            else if (key == "track_half_width") cfg.track_half_width = p.to_double(value);
            else if (key == "dt") cfg.dt = p.to_double(value);
            else if (key == "max_range") cfg.max_range = p.to_double(value);
            else if (key == "laser_frames") cfg.laser_frames = static_cast<int>(p.to_long(value));
            else if (key == "image_frames") cfg.image_frames = static_cast<int>(p.to_long(value));
            else if (key == "image_size") cfg.image_size = static_cast<int>(p.to_long(value));
            else if (key == "image_cell") cfg.image_cell = p.to_double(value);
            else p.fail("unknown key `" + key + "` in [env]");
        } else if (section == "train") {
            if (key == "episodes") cfg.episodes = static_cast<int>(p.to_long(value));
            else if (key == "steps") cfg.steps = static_cast<int>(p.to_long(value));
            else if (key == "gamma") cfg.gamma = p.to_double(value);
            else if (key == "tau") cfg.tau = p.to_double(value);
            else if (key == "batch_size") cfg.batch_size = static_cast<int>(p.to_long(value));
            else if (key == "actor_lr") cfg.actor_lr = p.to_double(value);
            else if (key == "critic_lr") cfg.critic_lr = p.to_double(value);
            else if (key == "lambda") cfg.lambda = p.to_double(value);
            else if (key == "dropout_keep") cfg.dropout_keep = p.to_double(value);
            else if (key == "warmup") cfg.warmup = static_cast<int>(p.to_long(value));
            else if (key == "buffer_capacity") cfg.buffer_capacity = p.to_long(value);
            else if (key == "hidden1") cfg.hidden1 = static_cast<int>(p.to_long(value));
            else if (key == "hidden2") cfg.hidden2 = static_cast<int>(p.to_long(value));
            else if (key == "ou_theta") cfg.ou_theta = p.to_double(value);
            else if (key == "ou_sigma0") cfg.ou_sigma0 = p.to_double(value);
            else if (key == "ou_sigma1") cfg.ou_sigma1 = p.to_double(value);
            else if (key == "ou_dt") cfg.ou_dt = p.to_double(value);
            else p.fail("unknown key `" + key + "` in [train]");
        } else if (section == "sd") {
            if (key == "distribution") cfg.sd_distribution = value;
            else p.fail("unknown key `" + key + "` in [sd]");
        } else if (section == "noise") {
            if (key.rfind("scenario.", 0) == 0) {
                const std::string name = key.substr(9);
                if (name.empty()) p.fail("scenario needs a name: `scenario.<name>`");
                std::istringstream vs(value);
                SensorNoiseSpec spec;
                std::string tok;
                int idx = 0;
                while (vs >> tok && idx < kNumSensors) {
                    if (tok == "fail")
                        spec.failed[idx] = true;
                    else
                        spec.sigma[idx] = p.to_double(tok);
                    ++idx;
                }
                if (idx != kNumSensors)
                    p.fail("scenario wants " + std::to_string(kNumSensors) +
                           " entries (sigma or `fail`)");
                cfg.noise_grid.emplace_back(name, spec);
            } else {
                p.fail("unknown key `" + key + "` in [noise]");
            }
        }
    }

    // validation against module preconditions, before any training starts
    p.lineno = 0;
    if (!cfg.seed_set) throw ConfigError(origin + ": missing mandatory key `seed`");
    if (cfg.seeds.empty()) cfg.seeds = {cfg.seed};
    if (cfg.out_dir.empty()) {
        const char* env_dir = std::getenv("SDRL_OUT_DIR");
        cfg.out_dir = env_dir && *env_dir ? env_dir : "runs";
    }
    rl::algo_from_name(cfg.algo);
    if (cfg.variants.empty()) throw ConfigError(origin + ": variants list is empty");
    for (const auto& v : cfg.variants) rl::variant_from_name(v);
    for (const auto& a : cfg.analyses) {
        if (a != "robustness" && a != "subpolicy" && a != "sensitivity" && a != "variance" &&
            a != "pca" && a != "saliency")
            throw ConfigError(origin + ": unknown analysis `" + a + "`");
    }
    if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0))
        throw ConfigError(origin + ": gamma must be in [0,1]");
    if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0)) throw ConfigError(origin + ": tau must be in [0,1]");
    if (cfg.eval_episodes <= 0) throw ConfigError(origin + ": eval_episodes must be positive");
    if (cfg.eval_states <= 0) throw ConfigError(origin + ": eval_states must be positive");
    if (!cfg.track_file.empty() && !std::filesystem::exists(cfg.track_file))
        throw ConfigError(origin + ": track file does not exist: " + cfg.track_file);
    if (cfg.sd_distribution != "uniform") {
        const auto probs = split_list(cfg.sd_distribution);
        if (probs.empty()) throw ConfigError(origin + ": empty sd distribution");
        double sum = 0.0;
        for (const auto& x : probs) {
            const double v = p.to_double(x);
            if (v < 0.0) throw ConfigError(origin + ": sd probabilities must be >= 0");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw ConfigError(origin + ": sd probabilities must sum to 1");
    }
    // remaining bounds are enforced by TrainSettings::validate; run it for
    // the first variant so bad values are caught at parse time
    make_train_settings(cfg, rl::variant_from_name(cfg.variants.front()), cfg.seed).validate();
    return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "seed = " << cfg.seed << "\n";
    out << "[experiment]\n";
    out << "seeds = ";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
        out << (i ? ", " : "") << cfg.seeds[i];
    out << "\n";
    out << "out_dir = " << cfg.out_dir << "\n";
    out << "algo = " << cfg.algo << "\n";
    out << "variants = ";
    for (std::size_t i = 0; i < cfg.variants.size(); ++i)
        out << (i ? ", " : "") << cfg.variants[i];
    out << "\n";
    out << "analyses = ";
    if (cfg.analyses.empty()) {
        out << "none";
    } else {
        for (std::size_t i = 0; i < cfg.analyses.size(); ++i)
            out << (i ? ", " : "") << cfg.analyses[i];
    }
    out << "\n";
    out << "eval_episodes = " << cfg.eval_episodes << "\n";
    out << "eval_states = " << cfg.eval_states << "\n";
    out << "workers = " << cfg.workers << "\n";
    out << "[env]\n";
    if (!cfg.track_file.empty()) out << "track = " << cfg.track_file << "\n";
    out << "track_straight = " << cfg.track_straight << "\n";
    out << "track_radius = " << cfg.track_radius << "\n";
    out << "track_half_width = " << cfg.track_half_width << "\n";
    out << "dt = " << cfg.dt << "\n";
    out << "max_range = " << cfg.max_range << "\n";
    out << "laser_frames = " << cfg.laser_frames << "\n";
    out << "image_frames = " << cfg.image_frames << "\n";
    out << "image_size = " << cfg.image_size << "\n";
    out << "image_cell = " << cfg.image_cell << "\n";
    out << "[train]\n";
    out << "episodes = " << cfg.episodes << "\n";
    out << "steps = " << cfg.steps << "\n";
    out << "gamma = " << cfg.gamma << "\n";
    out << "tau = " << cfg.tau << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "actor_lr = " << cfg.actor_lr << "\n";
    out << "critic_lr = " << cfg.critic_lr << "\n";
    out << "lambda = " << cfg.lambda << "\n";
    out << "dropout_keep = " << cfg.dropout_keep << "\n";
    out << "warmup = " << cfg.warmup << "\n";
    out << "buffer_capacity = " << cfg.buffer_capacity << "\n";
    out << "hidden1 = " << cfg.hidden1 << "\n";
    out << "hidden2 = " << cfg.hidden2 << "\n";
    out << "ou_theta = " << cfg.ou_theta << "\n";
    out << "ou_sigma0 = " << cfg.ou_sigma0 << "\n";
    out << "ou_sigma1 = " << cfg.ou_sigma1 << "\n";
    out << "ou_dt = " << cfg.ou_dt << "\n";
    out << "[sd]\n";
    out << "distribution = " << cfg.sd_distribution << "\n";
    out << "[noise]\n";
    for (const auto& [name, spec] : cfg.noise_grid) {
        out << "scenario." << name << " = ";
        for (int i = 0; i < kNumSensors; ++i) {
            if (i) out << ' ';
            if (spec.failed[i])
                out << "fail";
            else
                out << spec.sigma[i];
        }
        out << "\n";
    }
    return out.str();
}

EnvConfig make_env_config(const ExperimentConfig& cfg) {
    EnvConfig env;
    if (!cfg.track_file.empty())
        env.track = load_track(cfg.track_file);
    else
        env.track = make_stadium_track(cfg.track_straight, cfg.track_radius,
                                       cfg.track_half_width);
    env.dt = cfg.dt;
    env.max_steps = cfg.steps;
    env.max_range = cfg.max_range;
    env.laser_frames = cfg.laser_frames;
    env.image_frames = cfg.image_frames;
    env.image_h = cfg.image_size;
    env.image_w = cfg.image_size;
    env.image_cell = cfg.image_cell;
    return env;
}

rl::TrainSettings make_train_settings(const ExperimentConfig& cfg, rl::Variant variant,
                                      std::uint64_t seed) {
    rl::TrainSettings st;
    st.algo = rl::algo_from_name(cfg.algo);
    st.variant = variant;
    st.gamma = cfg.gamma;
    st.tau = cfg.tau;
    st.batch_size = cfg.batch_size;
    st.actor_lr = cfg.actor_lr;
    st.critic_lr = cfg.critic_lr;
    st.lambda = cfg.lambda >= 0.0
                    ? cfg.lambda
                    : (variant == rl::Variant::multi_sd_aux ? 0.05 : 0.0);
    st.episodes = cfg.episodes;
    st.steps_per_episode = cfg.steps;
    st.buffer_capacity = static_cast<std::size_t>(cfg.buffer_capacity);
    st.warmup = cfg.warmup;
    st.ou_theta = cfg.ou_theta;
    st.ou_sigma0 = cfg.ou_sigma0;
    st.ou_sigma1 = cfg.ou_sigma1;
    st.ou_dt = cfg.ou_dt;
    st.hidden1 = cfg.hidden1;
    st.hidden2 = cfg.hidden2;
    st.dropout_keep = cfg.dropout_keep >= 0.0
                          ? cfg.dropout_keep
                          : (variant == rl::Variant::multi_dropout ? 0.8 : 1.0);
    st.seed = seed;
    if (cfg.sd_distribution != "uniform") {
        for (const auto& tok : split_list(cfg.sd_distribution))
            st.sd_probs.push_back(std::stod(tok));
    }
    return st;
}

std::vector<std::pair<std::string, SensorNoiseSpec>> noise_grid(const ExperimentConfig& cfg) {
    if (!cfg.noise_grid.empty()) return cfg.noise_grid;
    std::vector<std::pair<std::string, SensorNoiseSpec>> grid;
    const char* names[kNumSensors] = {"physical", "laser", "image"};
    for (int i = 0; i < kNumSensors; ++i) {
        SensorNoiseSpec spec;
        spec.sigma[i] = 0.1;
        grid.emplace_back(std::string("noise-") + names[i], spec);
    }
    SensorNoiseSpec all;
    all.sigma = {0.1, 0.1, 0.1};
    grid.emplace_back("noise-all", all);
    return grid;
}

}  // namespace sdrl::harness
