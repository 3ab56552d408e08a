// sdrl: train and analyze sensor-dropout driving policies.
#include <cmath>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "sdrl/checkpoint.hpp"
#include "sdrl/runner.hpp"

namespace fs = std::filesystem;
using namespace sdrl;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::string variant;
    std::string algo;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int episodes = -1;
};

harness::ExperimentConfig load_config(const CommonOpts& opts) {
    harness::ExperimentConfig cfg = harness::parse_config(opts.config_path);
    if (opts.seed_given) {
        cfg.seed = opts.seed;
        cfg.seeds = {opts.seed};
    }
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (!opts.variant.empty()) cfg.variants = {opts.variant};
    if (!opts.algo.empty()) cfg.algo = opts.algo;
    if (opts.episodes >= 0) cfg.episodes = opts.episodes;
    rl::algo_from_name(cfg.algo);
    for (const auto& v : cfg.variants) rl::variant_from_name(v);
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_overrides = true) {
    cmd->add_option("--config", opts.config_path, "experiment config file")
        ->required()
        ->check(CLI::ExistingFile);
    if (with_overrides) {
        cmd->add_option("--seed", opts.seed, "override the config seed")
            ->each([&opts](const std::string&) { opts.seed_given = true; });
        cmd->add_option("--variant", opts.variant, "override the variant list");
        cmd->add_option("--algo", opts.algo, "override the algorithm (ddpg|naf)");
        cmd->add_option("--out", opts.out_dir, "output directory");
        cmd->add_option("--episodes", opts.episodes, "override the episode budget");
    }
}

int cmd_train(const CommonOpts& opts, const std::string& resume_path, bool resumable) {
    const harness::ExperimentConfig cfg = load_config(opts);
    const std::string variant = cfg.variants.front();
    const fs::path dir = fs::path(cfg.out_dir) / variant / std::to_string(cfg.seed);
    fs::create_directories(dir);

    const EnvConfig env = harness::make_env_config(cfg);
    rl::Trainer trainer(env,
                        harness::make_train_settings(cfg, rl::variant_from_name(variant),
                                                     cfg.seed));
    if (!resume_path.empty()) {
        const auto meta = harness::load_checkpoint(trainer, resume_path);
        std::cout << "resumed from episode " << meta.episodes_done
                  << (meta.has_buffer ? "" : " (no replay buffer in checkpoint)") << "\n";
    }
    trainer.run();
    rl::write_curve_csv((dir / "curve.csv").string(), trainer.curve());
    harness::save_checkpoint(trainer, (dir / "checkpoint.sdrl").string(), resumable);
    const auto& curve = trainer.curve();
    double tail = 0.0;
    const std::size_t take = std::min<std::size_t>(10, curve.size());
    for (std::size_t i = curve.size() - take; i < curve.size(); ++i) tail += curve[i].ret;
    std::cout << "trained " << cfg.algo << "/" << variant << " seed " << cfg.seed << ": "
              << trainer.episodes_done() << " episodes, last-" << take << " mean return "
              << (take ? tail / take : 0.0) << "\n"
              << "wrote " << (dir / "curve.csv").string() << " and "
              << (dir / "checkpoint.sdrl").string() << "\n";
    return 0;
}

rl::Trainer make_loaded_trainer(const harness::ExperimentConfig& cfg,
                                const std::string& checkpoint_path) {
    const auto meta = harness::peek_checkpoint_meta(checkpoint_path);
    harness::ExperimentConfig resolved = cfg;
    resolved.algo = meta.algo;
    const EnvConfig env = harness::make_env_config(resolved);
    rl::Trainer trainer(env,
                        harness::make_train_settings(resolved,
                                                     rl::variant_from_name(meta.variant),
                                                     resolved.seed));
    harness::load_checkpoint(trainer, checkpoint_path);
    return trainer;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint_path, int episodes,
             const std::string& trajectory_path) {
    const harness::ExperimentConfig cfg = load_config(opts);
    rl::Trainer trainer = make_loaded_trainer(cfg, checkpoint_path);
    const EnvConfig env = harness::make_env_config(cfg);

    std::vector<TrajectoryRow> rows;
    const auto run = rl::evaluate_policy(trainer.agent(), env, nullptr,
                                         episodes > 0 ? episodes : cfg.eval_episodes,
                                         RandomStream::splitmix64(cfg.seed ^ 0xe7a1),
                                         trajectory_path.empty() ? nullptr : &rows);
    std::cout << rl::algo_name(trainer.settings().algo) << "/"
              << rl::variant_name(trainer.settings().variant) << ": mean return " << run.mean
              << " +/- " << run.stddev << " over " << run.returns.size() << " episodes\n";
    if (!trajectory_path.empty()) {
        write_trajectory_csv(trajectory_path, rows);
        std::cout << "wrote " << trajectory_path << "\n";
    }
    return 0;
}

int cmd_analyze(const CommonOpts& opts, const std::string& checkpoint_path) {
    const harness::ExperimentConfig cfg = load_config(opts);
    rl::Trainer trainer = make_loaded_trainer(cfg, checkpoint_path);
    const std::string variant = rl::variant_name(trainer.settings().variant);
    const fs::path dir = fs::path(cfg.out_dir) / variant / std::to_string(cfg.seed);
    fs::create_directories(dir);
    harness::run_analyses(cfg, trainer.agent(), harness::make_env_config(cfg), dir.string(),
                          cfg.seed, nullptr);
    std::cout << "analysis reports written under " << dir.string() << "\n";
    return 0;
}

int cmd_matrix(const CommonOpts& opts) {
    const harness::ExperimentConfig cfg = load_config(opts);
    std::vector<harness::CellOutcome> outcomes;
    const int status = harness::run_matrix(cfg, &outcomes);
    for (const auto& o : outcomes) {
        std::cout << (o.ok ? "ok     " : "FAILED ") << cfg.algo << "/" << o.variant << " seed "
                  << o.seed;
        if (o.ok)
            std::cout << "  last10 " << o.last10_return;
        else
            std::cout << "  " << o.error;
        std::cout << "\n";
    }
    std::cout << "index written to " << (fs::path(cfg.out_dir) / "index.csv").string() << "\n";
    return status;
}

int cmd_inspect(const std::string& path) {
    const auto records = harness::read_checkpoint_file(path);
    std::cout << records.size() << " records\n";
    for (const auto& rec : records) {
        std::cout << "  " << rec.name;
        if (rec.is_bytes) {
            std::cout << "  bytes[" << rec.bytes.size() << "]";
        } else {
            std::cout << "  f64[";
            for (std::size_t i = 0; i < rec.dims.size(); ++i)
                std::cout << (i ? "x" : "") << rec.dims[i];
            double norm = 0.0;
            for (double v : rec.values) norm += v * v;
            std::cout << "]  l2=" << std::sqrt(norm);
        }
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sensor-dropout continuous-control toolkit"};
    app.require_subcommand(1);

    CommonOpts train_opts, eval_opts, analyze_opts, matrix_opts;
    std::string resume_path, checkpoint_path, analyze_checkpoint, inspect_path, trajectory_path;
    bool resumable = false;
    int eval_episodes = -1;

    CLI::App* train = app.add_subcommand("train", "train one variant and write a checkpoint");
    add_common(train, train_opts);
    train->add_option("--resume", resume_path, "checkpoint to continue from")
        ->check(CLI::ExistingFile);
    train->add_flag("--resumable", resumable,
                    "include the replay buffer so training can resume bit-for-bit");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a trained checkpoint");
    add_common(eval, eval_opts);
    eval->add_option("--checkpoint", checkpoint_path, "trained checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--episodes-eval", eval_episodes, "evaluation episodes");
    eval->add_option("--trajectory", trajectory_path, "dump the first episode as CSV");

    CLI::App* analyze = app.add_subcommand("analyze", "run the analysis suite on a checkpoint");
    add_common(analyze, analyze_opts);
    analyze->add_option("--checkpoint", analyze_checkpoint, "trained checkpoint")
        ->required()
        ->check(CLI::ExistingFile);

    CLI::App* matrix =
        app.add_subcommand("matrix", "train and analyze every variant x seed cell");
    add_common(matrix, matrix_opts);

    CLI::App* inspect = app.add_subcommand("inspect-checkpoint", "list checkpoint records");
    inspect->add_option("path", inspect_path, "checkpoint file")
        ->required()
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*train) return cmd_train(train_opts, resume_path, resumable);
        if (*eval) return cmd_eval(eval_opts, checkpoint_path, eval_episodes, trajectory_path);
        if (*analyze) return cmd_analyze(analyze_opts, analyze_checkpoint);
        if (*matrix) return cmd_matrix(matrix_opts);
        if (*inspect) return cmd_inspect(inspect_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
