#include "sdrl/runner.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "sdrl/checkpoint.hpp"
#include "sdrl/errors.hpp"

namespace sdrl::harness {

namespace fs = std::filesystem;

namespace {

bool analysis_enabled(const ExperimentConfig& cfg, const std::string& name) {
    for (const auto& a : cfg.analyses)
        if (a == name) return true;
    return false;
}

double last_n_mean(const std::vector<rl::EpisodeLog>& curve, int n) {
    if (curve.empty()) return 0.0;
    const std::size_t take = std::min<std::size_t>(n, curve.size());
    double sum = 0.0;
    for (std::size_t i = curve.size() - take; i < curve.size(); ++i) sum += curve[i].ret;
    return sum / static_cast<double>(take);
}

}  // namespace

void run_analyses(const ExperimentConfig& cfg, rl::Agent& agent, const EnvConfig& env,
                  const std::string& dir, std::uint64_t seed, CellOutcome* outcome) {
    const std::uint64_t eval_seed = RandomStream::splitmix64(seed ^ 0xe7a1);
    const bool multimodal = agent.sensors().size() == 3;

    std::vector<std::vector<double>> states;
    auto need_states = [&]() -> const std::vector<std::vector<double>>& {
        if (states.empty())
            states = analysis::collect_states(agent, env, cfg.eval_states, eval_seed);
        return states;
    };

    if (analysis_enabled(cfg, "robustness")) {
        const auto report =
            analysis::robustness_eval(agent, env, noise_grid(cfg), cfg.eval_episodes, eval_seed);
        analysis::write_robustness_csv(dir + "/robustness.csv", report);
        if (outcome) outcome->clean_eval = report.clean_mean;
    }
    if (analysis_enabled(cfg, "subpolicy")) {
        std::vector<int> configs;
        for (int j = 1; j <= agent.drop_distribution().num_configs(); ++j) configs.push_back(j);
        const auto eval =
            analysis::eval_subpolicy(agent, env, configs, cfg.eval_episodes, eval_seed);
        analysis::write_subpolicy_csv(dir + "/subpolicy.csv", eval);
    }
    if (analysis_enabled(cfg, "sensitivity") && multimodal) {
        const auto report = analysis::sensitivity_ratio(agent, need_states(), {0, 1}, {2});
        analysis::write_sensitivity_csv(dir + "/sensitivity.csv", report);
        if (outcome) {
            outcome->sensitivity = report.ratio;
            outcome->has_sensitivity = !report.degenerate;
        }
    }
    if (analysis_enabled(cfg, "variance")) {
        const auto report = analysis::action_variance(agent, need_states());
        analysis::write_variance_csv(dir + "/variance.csv", report);
        if (outcome) {
            outcome->action_var = report.per_dim;
            outcome->has_variance = true;
        }
    }
    if (analysis_enabled(cfg, "pca")) {
        std::vector<int> labels;
        const auto rows = analysis::collect_embeddings(agent, need_states(), &labels);
        const auto pca = analysis::pca_embed(rows, 3);
        analysis::write_pca_csv(dir + "/pca.csv", pca);
        analysis::write_pca_points_csv(dir + "/pca_points.csv", pca, labels);
        if (outcome && pca.rank > 0) {
            outcome->pc1_fraction = pca.fractions[0];
            outcome->has_pca = true;
        }
    }
    if (analysis_enabled(cfg, "saliency")) {
        const auto s = analysis::saliency(agent, need_states().front(), agent.all_on_config());
        analysis::write_saliency_csv(dir + "/saliency.csv", agent, s);
    }
}

CellOutcome run_cell(const ExperimentConfig& cfg, const std::string& variant,
                     std::uint64_t seed) {
    CellOutcome outcome;
    outcome.variant = variant;
    outcome.seed = seed;
    const fs::path dir = fs::path(cfg.out_dir) / variant / std::to_string(seed);
    fs::create_directories(dir);
    outcome.dir = dir.string();

    const rl::Variant v = rl::variant_from_name(variant);
    const EnvConfig env = make_env_config(cfg);
    rl::Trainer trainer(env, make_train_settings(cfg, v, seed));
    trainer.run();
    rl::write_curve_csv((dir / "curve.csv").string(), trainer.curve());
    save_checkpoint(trainer, (dir / "checkpoint.sdrl").string(), false);
    outcome.last10_return = last_n_mean(trainer.curve(), 10);

    run_analyses(cfg, trainer.agent(), env, dir.string(), seed, &outcome);
    outcome.ok = true;
    return outcome;
}

void write_index_csv(const std::string& path, const ExperimentConfig& cfg,
                     const std::vector<CellOutcome>& outcomes) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write index: " + path);
    out.precision(17);
    out << "algo,variant,seed,status,last10_return,clean_eval,sensitivity_ratio,"
           "var_steer,var_accel,pc1_fraction\n";
    for (const auto& o : outcomes) {
        out << cfg.algo << ',' << o.variant << ',' << o.seed << ','
            << (o.ok ? "ok" : "failed") << ',' << o.last10_return << ',' << o.clean_eval << ',';
        if (o.has_sensitivity) out << o.sensitivity;
        out << ',';
        if (o.has_variance) out << o.action_var[0];
        out << ',';
        if (o.has_variance) out << o.action_var[1];
        out << ',';
        if (o.has_pca) out << o.pc1_fraction;
        out << '\n';
    }
}

int run_matrix(const ExperimentConfig& cfg, std::vector<CellOutcome>* outcomes_out) {
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream resolved(fs::path(cfg.out_dir) / "config_resolved.cfg");
        resolved << serialize_config(cfg);
    }

    struct Cell {
        std::string variant;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const auto& variant : cfg.variants)
        for (std::uint64_t seed : cfg.seeds) cells.push_back({variant, seed});

    std::vector<CellOutcome> outcomes(cells.size());
    std::ofstream log(fs::path(cfg.out_dir) / "run.log", std::ios::app);
    std::mutex log_mutex;
    auto log_line = [&](const std::string& msg) {
        std::lock_guard<std::mutex> lock(log_mutex);
        const auto now = std::chrono::system_clock::now();
        log << std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch())
                   .count()
            << " " << msg << "\n";
        log.flush();
    };

    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    const int workers = std::max(
        1, std::min<int>(static_cast<int>(cells.size()),
                         cfg.workers > 0 ? cfg.workers : std::max(1, hw)));

    std::mutex queue_mutex;
    std::size_t next_cell = 0;
    auto worker = [&]() {
        while (true) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(queue_mutex);
                if (next_cell >= cells.size()) return;
                i = next_cell++;
            }
            const Cell& cell = cells[i];
            log_line("start " + cell.variant + " seed " + std::to_string(cell.seed));
            try {
                outcomes[i] = run_cell(cfg, cell.variant, cell.seed);
                log_line("done " + cell.variant + " seed " + std::to_string(cell.seed));
            } catch (const std::exception& e) {
                outcomes[i].variant = cell.variant;
                outcomes[i].seed = cell.seed;
                outcomes[i].ok = false;
                outcomes[i].error = e.what();
                log_line("failed " + cell.variant + " seed " + std::to_string(cell.seed) + ": " +
                         e.what());
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    write_index_csv((fs::path(cfg.out_dir) / "index.csv").string(), cfg, outcomes);
    int failures = 0;
    for (const auto& o : outcomes)
        if (!o.ok) ++failures;
    if (outcomes_out) *outcomes_out = std::move(outcomes);
    return failures == 0 ? 0 : 1;
}

}  // namespace sdrl::harness
