#include "sdrl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sdrl/errors.hpp"

namespace sdrl::analysis {

std::vector<double> saliency(const rl::Agent& agent, std::span<const double> obs,
                             const sd::DropConfig& config) {
    const auto jac = agent.action_jacobian(obs, config);
    std::vector<double> out(obs.size(), 0.0);
    for (const auto& row : jac)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::abs(row[i]);
    return out;
}

SensitivityReport sensitivity_from_salience(const std::vector<std::vector<double>>& salience,
                                            std::span<const int> dims,
                                            const std::vector<int>& numerator_sensors,
                                            const std::vector<int>& denominator_sensors) {
    if (numerator_sensors.empty() || denominator_sensors.empty())
        throw ConfigError("sensitivity: empty sensor subset");
    std::vector<std::size_t> offsets(dims.size() + 1, 0);
    for (std::size_t i = 0; i < dims.size(); ++i) offsets[i + 1] = offsets[i] + dims[i];

    auto block_mean = [&](const std::vector<double>& g, const std::vector<int>& sensors) {
        double sum = 0.0;
        std::size_t count = 0;
        for (int s : sensors) {
            if (s < 0 || s >= static_cast<int>(dims.size()))
                throw ConfigError("sensitivity: sensor index out of range");
            for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) sum += std::abs(g[i]);
            count += static_cast<std::size_t>(dims[s]);
        }
        return sum / static_cast<double>(count);
    };

    SensitivityReport report;
    report.numerator_sensors = numerator_sensors;
    report.denominator_sensors = denominator_sensors;
    for (const auto& g : salience) {
        if (g.size() != offsets.back())
            throw ConfigError("sensitivity: salience length does not match dims");
        const double den = block_mean(g, denominator_sensors);
        if (den == 0.0) {
            ++report.excluded;
            continue;
        }
        report.per_state.push_back(block_mean(g, numerator_sensors) / den);
    }
    report.states_used = static_cast<int>(report.per_state.size());
    if (report.per_state.empty()) {
        report.degenerate = true;
        report.ratio = 0.0;
        return report;
    }
    double sum = 0.0;
    for (double r : report.per_state) sum += r;
    report.ratio = sum / report.per_state.size();
    return report;
}

SensitivityReport sensitivity_ratio(const rl::Agent& agent,
                                    const std::vector<std::vector<double>>& states,
                                    const std::vector<int>& numerator_sensors,
                                    const std::vector<int>& denominator_sensors) {
    std::vector<std::vector<double>> salience;
    salience.reserve(states.size());
    const auto& all_on = agent.all_on_config();
    for (const auto& s : states) salience.push_back(saliency(agent, s, all_on));
    return sensitivity_from_salience(salience, agent.raw_dims(), numerator_sensors,
                                     denominator_sensors);
}

SubPolicyEval eval_subpolicy(const rl::Agent& agent, const EnvConfig& env,
                             const std::vector<int>& config_indices, int episodes,
                             std::uint64_t seed) {
    if (episodes <= 0) throw ConfigError("eval_subpolicy: episodes must be positive");
    const auto& dist = agent.drop_distribution();
    const int all_on_index = dist.num_configs();

    auto run_config = [&](int index) {
        const auto& config = dist.config(index);
        SensorNoiseSpec spec;
        for (std::size_t i = 0; i < agent.sensors().size(); ++i)
            spec.failed[agent.sensors()[i]] = config.flags[i] == 0;
        // sensors the agent does not read are irrelevant; leave them alive
        return rl::evaluate_policy(agent, env, &spec, episodes, seed);
    };

    SubPolicyEval eval;
    eval.anchor = run_config(all_on_index).mean;
    for (int index : config_indices) {
        const auto run = run_config(index);
        SubPolicyEval::Row row;
        row.config_index = index;
        const auto& flags = dist.config(index).flags;
        for (auto f : flags) row.flags += f ? '1' : '0';
        row.mean = run.mean;
        row.stddev = run.stddev;
        row.normalized = eval.anchor != 0.0 ? run.mean / eval.anchor : 0.0;
        eval.rows.push_back(std::move(row));
    }
    return eval;
}

std::array<double, 2> action_variance_of(const std::vector<std::array<double, 2>>& actions) {
    std::array<double, 2> var{0.0, 0.0};
    if (actions.empty()) return var;
    const double n = static_cast<double>(actions.size());
    for (int d = 0; d < 2; ++d) {
        double mean = 0.0;
        for (const auto& a : actions) mean += a[d];
        mean /= n;
        double acc = 0.0;
        for (const auto& a : actions) acc += (a[d] - mean) * (a[d] - mean);
        var[d] = acc / n;  // population variance
    }
    return var;
}

VarianceReport action_variance(const rl::Agent& agent,
                               const std::vector<std::vector<double>>& states) {
    VarianceReport report;
    const auto& dist = agent.drop_distribution();
    std::vector<std::array<double, 2>> actions(dist.num_configs());
    for (const auto& s : states) {
        for (int j = 1; j <= dist.num_configs(); ++j)
            actions[j - 1] = agent.act_greedy(s, dist.config(j));
        const auto var = action_variance_of(actions);
        report.per_dim[0] += var[0];
        report.per_dim[1] += var[1];
        ++report.states;
    }
    if (report.states > 0) {
        report.per_dim[0] /= report.states;
        report.per_dim[1] /= report.states;
    }
    return report;
}

PcaResult pca_embed(const std::vector<std::vector<double>>& rows, int k) {
    if (rows.size() < static_cast<std::size_t>(k) + 1)
        throw ConfigError("pca_embed: need at least k+1 rows");
    const std::size_t n = rows.size();
    const std::size_t d = rows.front().size();
    for (const auto& r : rows)
        if (r.size() != d) throw ConfigError("pca_embed: ragged rows");

    std::vector<double> mean(d, 0.0);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
    for (double& m : mean) m /= static_cast<double>(n);

    std::vector<std::vector<double>> centered(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) centered[i][j] = rows[i][j] - mean[j];

    // sample covariance
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const auto& r : centered)
        for (std::size_t a = 0; a < d; ++a) {
            const double ra = r[a];
            if (ra == 0.0) continue;
            for (std::size_t b = 0; b < d; ++b) cov[a][b] += ra * r[b];
        }
    const double denom = static_cast<double>(n - 1);
    double trace = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) cov[a][b] /= denom;
        trace += cov[a][a];
    }

    PcaResult out;
    if (trace <= 0.0) return out;

    constexpr double kTol = 1e-10;
    constexpr int kMaxIter = 10000;
    for (int comp = 0; comp < k; ++comp) {
        // deterministic generic start direction
        std::vector<double> v(d);
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            v[j] = 1.0 / static_cast<double>(j + 1 + comp);
            norm += v[j] * v[j];
        }
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;

        std::vector<double> w(d);
        double eig = 0.0;
        for (int iter = 0; iter < kMaxIter; ++iter) {
            for (std::size_t a = 0; a < d; ++a) {
                double acc = 0.0;
                for (std::size_t b = 0; b < d; ++b) acc += cov[a][b] * v[b];
                w[a] = acc;
            }
            double wn = 0.0;
            for (double x : w) wn += x * x;
            wn = std::sqrt(wn);
            if (wn <= trace * 1e-14) {
                eig = 0.0;
                break;
            }
            double diff = 0.0, diff_flip = 0.0;
            for (std::size_t a = 0; a < d; ++a) {
                const double next = w[a] / wn;
                diff += (next - v[a]) * (next - v[a]);
                diff_flip += (next + v[a]) * (next + v[a]);
                v[a] = next;
            }
            eig = wn;
            if (std::min(diff, diff_flip) < kTol * kTol) break;
        }
        // Rayleigh quotient on the deflated matrix
        double quad = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
            double acc = 0.0;
            for (std::size_t b = 0; b < d; ++b) acc += cov[a][b] * v[b];
            quad += v[a] * acc;
        }
        eig = quad;
        if (eig <= trace * 1e-12) break;  // rank exhausted

        out.components.push_back(v);
        out.fractions.push_back(eig / trace);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) cov[a][b] -= eig * v[a] * v[b];
    }
    out.rank = static_cast<int>(out.components.size());

    out.projected.assign(n, std::vector<double>(out.rank, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < out.rank; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += centered[i][j] * out.components[c][j];
            out.projected[i][c] = acc;
        }
    return out;
}

RobustnessReport robustness_eval(const rl::Agent& agent, const EnvConfig& env,
                                 const std::vector<std::pair<std::string, SensorNoiseSpec>>& grid,
                                 int episodes, std::uint64_t seed) {
    RobustnessReport report;
    report.clean_mean = rl::evaluate_policy(agent, env, nullptr, episodes, seed).mean;
    for (const auto& [name, spec] : grid) {
        RobustnessRow row;
        row.scenario = name;
        try {
            row.noisy_mean = rl::evaluate_policy(agent, env, &spec, episodes, seed).mean;
            row.drop_pct = report.clean_mean != 0.0
                               ? (report.clean_mean - row.noisy_mean) / report.clean_mean * 100.0
                               : 0.0;
        } catch (const SensorsUnavailableError&) {
            row.operable = false;
            row.noisy_mean = 0.0;
            row.drop_pct = 100.0;
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::vector<std::vector<double>> collect_states(const rl::Agent& agent, const EnvConfig& env,
                                                int min_states, std::uint64_t seed) {
    std::vector<std::vector<double>> states;
    TrackEnv world(env);
    std::uint64_t episode = 0;
    const auto& all_on = agent.all_on_config();
    while (static_cast<int>(states.size()) < min_states) {
        MultiObservation obs = world.reset(seed + episode);
        bool done = false;
        while (!done && static_cast<int>(states.size()) < min_states) {
            auto flat = flatten_observation(obs, env, agent.sensors());
            states.push_back(flat);
            const auto action = agent.act_greedy(flat, all_on);
            auto res = world.step(action);
            obs = std::move(res.obs);
            done = res.done;
        }
        ++episode;
    }
    return states;
}

std::vector<std::vector<double>> collect_embeddings(const rl::Agent& agent,
                                                    const std::vector<std::vector<double>>& states,
                                                    std::vector<int>* labels) {
    std::vector<std::vector<double>> rows;
    const auto& dist = agent.drop_distribution();
    rows.reserve(states.size() * dist.num_configs());
    if (labels) labels->clear();
    for (const auto& s : states) {
        for (int j = 1; j <= dist.num_configs(); ++j) {
            rows.push_back(agent.policy_embedding(s, dist.config(j)));
            if (labels) labels->push_back(j);
        }
    }
    return rows;
}

namespace {

std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write report: " + path);
    out.precision(17);
    return out;
}

}  // namespace

void write_saliency_csv(const std::string& path, const rl::Agent& agent,
                        std::span<const double> salience) {
    auto out = open_csv(path);
    out << "element,sensor,block_offset,value\n";
    std::size_t idx = 0;
    for (std::size_t s = 0; s < agent.sensors().size(); ++s) {
        for (int k = 0; k < agent.raw_dims()[s]; ++k, ++idx)
            out << idx << ',' << agent.sensors()[s] << ',' << k << ',' << salience[idx] << '\n';
    }
}

void write_sensitivity_csv(const std::string& path, const SensitivityReport& report) {
    auto out = open_csv(path);
    out << "state_index,ratio\n";
    for (std::size_t i = 0; i < report.per_state.size(); ++i)
        out << i << ',' << report.per_state[i] << '\n';
}

void write_subpolicy_csv(const std::string& path, const SubPolicyEval& eval) {
    auto out = open_csv(path);
    out << "config_index,flags,mean_return,std_return,normalized\n";
    for (const auto& row : eval.rows)
        out << row.config_index << ',' << row.flags << ',' << row.mean << ',' << row.stddev
            << ',' << row.normalized << '\n';
}

void write_variance_csv(const std::string& path, const VarianceReport& report) {
    auto out = open_csv(path);
    out << "action_dim,variance\n";
    out << "steer," << report.per_dim[0] << '\n';
    out << "accel," << report.per_dim[1] << '\n';
}

void write_pca_csv(const std::string& path, const PcaResult& pca) {
    auto out = open_csv(path);
    out << "component,explained_variance_fraction\n";
    for (int c = 0; c < pca.rank; ++c) out << c + 1 << ',' << pca.fractions[c] << '\n';
}

void write_pca_points_csv(const std::string& path, const PcaResult& pca,
                          const std::vector<int>& labels) {
    auto out = open_csv(path);
    out << "row,config_label,p1,p2\n";
    for (std::size_t i = 0; i < pca.projected.size(); ++i) {
        out << i << ',' << (i < labels.size() ? labels[i] : -1);
        out << ',' << (pca.rank > 0 ? pca.projected[i][0] : 0.0);
        out << ',' << (pca.rank > 1 ? pca.projected[i][1] : 0.0) << '\n';
    }
}

void write_robustness_csv(const std::string& path, const RobustnessReport& report) {
    auto out = open_csv(path);
    out << "scenario,operable,clean_mean,noisy_mean,drop_pct\n";
    for (const auto& row : report.rows)
        out << row.scenario << ',' << (row.operable ? 1 : 0) << ',' << report.clean_mean << ','
            << row.noisy_mean << ',' << row.drop_pct << '\n';
}

}  // namespace sdrl::analysis
