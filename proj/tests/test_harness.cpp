#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sdrl/checkpoint.hpp"
#include "sdrl/errors.hpp"
#include "sdrl/runner.hpp"

using namespace sdrl;
using namespace sdrl::harness;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string mini_cfg_text() {
    return R"(seed = 11
[experiment]
variants = multi-sd
analyses = none
eval_episodes = 2
eval_states = 12
[env]
image_size = 8
[train]
episodes = 2
steps = 40
warmup = 16
hidden1 = 8
hidden2 = 8
)";
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config: defaults fill in around a bare seed") {
    const auto cfg = parse_config_text("seed = 1\n", "inline");
    CHECK(cfg.seed == 1);
    CHECK(cfg.batch_size == 16);
    CHECK(cfg.actor_lr == 1e-4);
    CHECK(cfg.critic_lr == 1e-3);
    CHECK(cfg.sd_distribution == "uniform");
    CHECK(cfg.episodes == 150);
    CHECK(cfg.steps == 400);
    // three sensors, uniform over the 7 non-empty subsets
    const auto st = make_train_settings(cfg, rl::Variant::multi_sd, cfg.seed);
    const auto dist = rl::variant_distribution(st.variant, st.sd_probs);
    CHECK(dist.sensors() == 3);
    CHECK(dist.num_configs() == 7);
    for (double p : dist.probabilities()) CHECK(p == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("config: rejections carry context") {
    CHECK_THROWS_WITH_AS(parse_config_text("seed = 1\n[train]\ngamma = 1.5\n", "inline"),
                         doctest::Contains("gamma"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("", "inline"), doctest::Contains("seed"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("seed = 1\nbogus_key = 2\n", "inline"),
                         doctest::Contains(":2:"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("seed = 1\n[what]\n", "inline"),
                         doctest::Contains("section"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("seed = 1\n[train]\nepisodes = nope\n", "inline"),
                         doctest::Contains(":3:"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("seed = 1\n[env]\ntrack = missing.trk\n", "inline"),
                    ConfigError);
    CHECK_THROWS_AS(
        parse_config_text("seed = 1\n[sd]\ndistribution = 0.5, 0.5, 0.5\n", "inline"),
        ConfigError);
}

TEST_CASE("config: round trip through serialization") {
    auto cfg = parse_config_text(mini_cfg_text(), "inline");
    cfg.noise_grid.push_back({"custom", SensorNoiseSpec{{0.1, 0.0, 0.2}, {false, true, false}}});
    const std::string text = serialize_config(cfg);
    const auto again = parse_config_text(text, "roundtrip");
    CHECK(serialize_config(again) == text);
    CHECK(again.seed == cfg.seed);
    CHECK(again.variants == cfg.variants);
    CHECK(again.noise_grid.size() == 1);
    CHECK(again.noise_grid[0].first == "custom");
    CHECK(again.noise_grid[0].second.failed[1]);
    CHECK(again.noise_grid[0].second.sigma[2] == 0.2);
}

TEST_CASE("config: scenario lines define the noise grid") {
    const auto cfg = parse_config_text(
        "seed = 1\n[noise]\nscenario.rain = 0.05 0.1 fail\n", "inline");
    const auto grid = noise_grid(cfg);
    REQUIRE(grid.size() == 1);
    CHECK(grid[0].first == "rain");
    CHECK(grid[0].second.sigma[0] == 0.05);
    CHECK(grid[0].second.failed[2]);

    // built-in grid: one scenario per sensor plus all-sensors
    const auto dflt = noise_grid(parse_config_text("seed = 1\n", "inline"));
    CHECK(dflt.size() == 4);
    CHECK(dflt.back().first == "noise-all");
}

TEST_CASE("checkpoint file format round trip and corruption") {
    TempDir tmp("sdrl_ckpt_test");
    const std::string path = (tmp.path / "x.sdrl").string();
    std::vector<CheckpointRecord> records;
    records.push_back({"meta/tag", true, {}, {}, "hello"});
    CheckpointRecord arr;
    arr.name = "w";
    arr.dims = {2, 3};
    arr.values = {1, 2, 3, 4, 5, 6};
    records.push_back(arr);
    write_checkpoint_file(path, records);

    const auto back = read_checkpoint_file(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].bytes == "hello");
    CHECK(back[1].dims == std::vector<std::uint32_t>{2, 3});
    CHECK(back[1].values == arr.values);

    // truncate by one byte: load fails, names the offending record
    std::string data = read_file(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(data.data(), static_cast<std::streamsize>(data.size() - 1));
    out.close();
    CHECK_THROWS_WITH_AS(read_checkpoint_file(path), doctest::Contains("w"), CheckpointError);

    std::ofstream bad(path, std::ios::binary | std::ios::trunc);
    bad << "NOPE";
    bad.close();
    CHECK_THROWS_AS(read_checkpoint_file(path), CheckpointError);
}

TEST_CASE("checkpoint: save/load reproduces parameters bit for bit") {
    TempDir tmp("sdrl_ckpt_rt");
    const auto cfg = parse_config_text(mini_cfg_text(), "inline");
    const EnvConfig env = make_env_config(cfg);
    rl::Trainer trainer(env, make_train_settings(cfg, rl::Variant::multi_sd, cfg.seed));
    trainer.run();
    const std::string path = (tmp.path / "a.sdrl").string();
    save_checkpoint(trainer, path, true);

    rl::Trainer fresh(env, make_train_settings(cfg, rl::Variant::multi_sd, cfg.seed + 5));
    const auto meta = load_checkpoint(fresh, path);
    CHECK(meta.variant == "multi-sd");
    CHECK(meta.has_buffer);
    CHECK(meta.episodes_done == 2);
    auto a = trainer.agent().named_arrays();
    auto b = fresh.agent().named_arrays();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].data == *b[i].data);
    CHECK(fresh.buffer().size() == trainer.buffer().size());

    // wrong variant: rejected before any state is touched
    rl::Trainer other(env, make_train_settings(cfg, rl::Variant::multi_naive, cfg.seed));
    CHECK_THROWS_WITH_AS(load_checkpoint(other, path), doctest::Contains("variant"),
                         CheckpointError);

    // architecture mismatch (different hidden sizes): shape error names the record
    auto wide_cfg = cfg;
    wide_cfg.hidden1 = 12;
    rl::Trainer wide(env, make_train_settings(wide_cfg, rl::Variant::multi_sd, cfg.seed));
    CHECK_THROWS_WITH_AS(load_checkpoint(wide, path), doctest::Contains("actor/trunk"),
                         CheckpointError);
}

TEST_CASE("checkpoint: resumed training replays the uninterrupted run") {
    TempDir tmp("sdrl_resume");
    auto cfg = parse_config_text(mini_cfg_text(), "inline");
    cfg.episodes = 6;
    const EnvConfig env = make_env_config(cfg);
    const auto settings = make_train_settings(cfg, rl::Variant::multi_sd, cfg.seed);

    rl::Trainer full(env, settings);
    full.run();

    rl::Trainer head(env, settings);
    head.run_episodes(3);
    const std::string path = (tmp.path / "half.sdrl").string();
    save_checkpoint(head, path, true);

    rl::Trainer tail(env, settings);
    load_checkpoint(tail, path);
    tail.run();
    REQUIRE(tail.curve().size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(tail.curve()[i].ret == full.curve()[i + 3].ret);
        CHECK(tail.curve()[i].bellman == full.curve()[i + 3].bellman);
        CHECK(tail.curve()[i].steps == full.curve()[i + 3].steps);
    }
}

TEST_CASE("matrix: reruns are byte identical and failures are isolated") {
    TempDir tmp("sdrl_matrix_run");
    TempDir snapshot("sdrl_matrix_snap");
    auto cfg = parse_config_text(mini_cfg_text(), "inline");
    cfg.analyses = {"robustness", "subpolicy", "variance"};
    cfg.variants = {"uni-physical", "multi-sd"};
    cfg.workers = 2;
    cfg.out_dir = tmp.path.string();

    std::vector<CellOutcome> outcomes;
    CHECK(run_matrix(cfg, &outcomes) == 0);
    REQUIRE(outcomes.size() == 2);
    CHECK(outcomes[0].ok);
    CHECK(outcomes[1].ok);

    fs::copy(tmp.path, snapshot.path,
             fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    CHECK(run_matrix(cfg) == 0);  // same out_dir, fresh run over the same cells

    int compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(snapshot.path)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), snapshot.path);
        if (rel.filename() == "run.log") continue;  // timestamps live here only
        CHECK(read_file(entry.path()) == read_file(tmp.path / rel));
        ++compared;
    }
    CHECK(compared >= 8);  // curves, checkpoints, reports, index, resolved config
}
