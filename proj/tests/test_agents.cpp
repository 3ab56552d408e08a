#include <cmath>

#include "doctest.h"
#include "fd_instances.hpp"
#include "oracles.hpp"
#include "sdrl/agents.hpp"
#include "sdrl/errors.hpp"
#include "sdrl/grad_check.hpp"
#include "sdrl/train.hpp"

using namespace sdrl;
using namespace sdrl::rl;

namespace {

// small desk config so finite-difference sweeps stay fast
EnvConfig tiny_env() {
    EnvConfig cfg;
    cfg.track = make_stadium_track(120.0, 35.0, 5.0);
    cfg.image_h = 8;
    cfg.image_w = 8;
    return cfg;
}

TrainSettings tiny_settings(Algo algo, Variant variant) {
    TrainSettings s;
    s.algo = algo;
    s.variant = variant;
    s.hidden1 = 8;
    s.hidden2 = 8;
    s.batch_size = 4;
    s.warmup = 4;
    s.buffer_capacity = 256;
    s.episodes = 2;
    s.steps_per_episode = 40;
    if (variant == Variant::multi_sd_aux) s.lambda = 0.05;
    return s;
}

std::vector<double> random_obs(int dim, RandomStream& rng) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

ReplayBuffer random_buffer(int n, int dim, RandomStream& rng, bool done = false) {
    ReplayBuffer buf(1024);
    for (int i = 0; i < n; ++i) {
        Transition t;
        t.s = random_obs(dim, rng);
        t.s2 = random_obs(dim, rng);
        t.a = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        t.r = rng.uniform(-1, 1);
        t.done = done;
        buf.push(std::move(t));
    }
    return buf;
}

std::vector<std::size_t> iota_batch(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

}  // namespace

TEST_CASE("naf advantage formula") {
    // L = identity, mu = 0, a = (1,1): A = -1/2 * (1+1) = -1
    CHECK(naf_advantage(1.0, 0.0, 1.0, {0.0, 0.0}, {1.0, 1.0}) == -1.0);
    CHECK(naf_advantage(0.7, 0.2, 0.9, {0.3, -0.1}, {0.3, -0.1}) == 0.0);
    RandomStream rng(3);
    for (int i = 0; i < 100; ++i) {
        const double a = naf_advantage(rng.uniform(0, 1), rng.uniform(-1, 1), rng.uniform(0, 1),
                                       {rng.uniform(-1, 1), rng.uniform(-1, 1)},
                                       {rng.uniform(-1, 1), rng.uniform(-1, 1)});
        CHECK(a <= 0.0);
    }
}

TEST_CASE("naf q decomposition: A <= 0 and Q = V at the greedy action") {
    const EnvConfig env = tiny_env();
    const TrainSettings settings = tiny_settings(Algo::naf, Variant::multi_sd);
    RandomStream init(1);
    NafAgent agent(env, settings, init);
    const auto& all_on = agent.all_on_config();

    RandomStream rng(2);
    for (int i = 0; i < 1000; ++i) {
        const auto s = random_obs(agent.obs_dim(), rng);
        const std::array<double, 2> a = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const auto q = agent.q_value(s, a, all_on);
        CHECK(q.a <= 0.0);
        CHECK(q.q == doctest::Approx(q.v + q.a).epsilon(1e-15));
        // at a = mu(s) the quadratic vanishes identically
        const auto q_mu = agent.q_value(s, q.mu, all_on);
        CHECK(std::abs(q_mu.a) < 1e-9);
        CHECK(q_mu.q == doctest::Approx(q_mu.v).epsilon(1e-12));
    }
}

TEST_CASE("naf bellman targets: gamma = 0 and done rows use the raw reward") {
    const EnvConfig env = tiny_env();
    TrainSettings settings = tiny_settings(Algo::naf, Variant::multi_naive);
    RandomStream init(4);
    NafAgent agent(env, settings, init);
    const auto& all_on = agent.all_on_config();
    RandomStream rng(5);

    auto mask_mu = sd::mask_multipliers(all_on, agent.mu_torso().feature_dims());
    auto mask_vl = sd::mask_multipliers(all_on, agent.vl_module().feature_dims);

    SUBCASE("gamma zero") {
        settings.gamma = 0.0;
        ReplayBuffer buf = random_buffer(1, agent.obs_dim(), rng, false);
        const auto q = agent.q_value(buf.at(0).s, buf.at(0).a, all_on);
        agent.mu_torso().zero_grads();
        agent.vl_module().zero_grads();
        const double loss =
            agent.bellman_pass(buf, {0}, settings, mask_mu, mask_vl, mask_vl);
        const double expect = (buf.at(0).r - q.q) * (buf.at(0).r - q.q);
        CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("done row") {
        ReplayBuffer buf = random_buffer(1, agent.obs_dim(), rng, true);
        const auto q = agent.q_value(buf.at(0).s, buf.at(0).a, all_on);
        agent.mu_torso().zero_grads();
        agent.vl_module().zero_grads();
        const double loss =
            agent.bellman_pass(buf, {0}, settings, mask_mu, mask_vl, mask_vl);
        const double expect = (buf.at(0).r - q.q) * (buf.at(0).r - q.q);
        CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("naf zero-residual batch leaves parameters untouched") {
    const EnvConfig env = tiny_env();
    TrainSettings settings = tiny_settings(Algo::naf, Variant::multi_naive);
    settings.tau = 0.0;
    RandomStream init(6);
    NafAgent agent(env, settings, init);
    const auto& all_on = agent.all_on_config();
    RandomStream rng(7);

    Transition t;
    t.s = random_obs(agent.obs_dim(), rng);
    t.s2 = random_obs(agent.obs_dim(), rng);
    t.a = {0.2, -0.4};
    t.done = true;
    t.r = agent.q_value(t.s, t.a, all_on).q;  // y - Q = 0 exactly
    ReplayBuffer buf(16);
    for (int i = 0; i < 4; ++i) buf.push(t);

    std::vector<double> mu_before, vl_before;
    agent.mu_torso().gather_params(mu_before);
    agent.vl_module().gather_params(vl_before);
    RandomStream drop(1);
    const auto st = agent.update(buf, iota_batch(4), settings, all_on, drop);
    CHECK(st.bellman == 0.0);
    CHECK(st.aux == 0.0);
    std::vector<double> mu_after, vl_after;
    agent.mu_torso().gather_params(mu_after);
    agent.vl_module().gather_params(vl_after);
    CHECK(mu_before == mu_after);
    CHECK(vl_before == vl_after);
}

TEST_CASE("naf bellman gradient matches finite differences") {
    CHECK(fd::worst_over_instances(fd::naf_bellman_fd, 3) < 1e-6);
}

TEST_CASE("ddpg critic targets use reward and discounted target Q") {
    const EnvConfig env = tiny_env();
    TrainSettings settings = tiny_settings(Algo::ddpg, Variant::multi_naive);
    settings.gamma = 0.99;
    RandomStream init(10);
    DdpgAgent agent(env, settings, init);
    const auto& all_on = agent.all_on_config();
    const auto mask = sd::mask_multipliers(all_on, agent.critic().feature_dims());
    RandomStream rng(11);

    SUBCASE("done row: y = r") {
        ReplayBuffer buf = random_buffer(1, agent.obs_dim(), rng, true);
        const double q = agent.q_value(buf.at(0).s, buf.at(0).a, all_on);
        agent.critic().zero_grads();
        const double loss = agent.critic_loss_pass(buf, {0}, settings, mask, mask);
        CHECK(loss == doctest::Approx((buf.at(0).r - q) * (buf.at(0).r - q)).epsilon(1e-12));
    }
    SUBCASE("bootstrap row: y = r + gamma Q'(s', mu'(s'))") {
        ReplayBuffer buf = random_buffer(1, agent.obs_dim(), rng, false);
        const Transition& tr = buf.at(0);
        const auto a2 = agent.actor_target().forward(tr.s2, mask, {});
        const double q2 = agent.critic_target().forward(tr.s2, mask, a2)[0];
        const double y = tr.r + 0.99 * q2;
        const double q = agent.q_value(tr.s, tr.a, all_on);
        agent.critic().zero_grads();
        const double loss = agent.critic_loss_pass(buf, {0}, settings, mask, mask);
        CHECK(loss == doctest::Approx((y - q) * (y - q)).epsilon(1e-12));
    }
}

TEST_CASE("ddpg critic fits a single transition within 200 steps") {
    const EnvConfig env = tiny_env();
    TrainSettings settings = tiny_settings(Algo::ddpg, Variant::multi_naive);
    settings.critic_lr = 5e-2;
    RandomStream init(12);
    DdpgAgent agent(env, settings, init);
    const auto mask = sd::mask_multipliers(agent.all_on_config(), agent.critic().feature_dims());
    RandomStream rng(13);
    ReplayBuffer buf = random_buffer(1, agent.obs_dim(), rng, true);
    double loss = 0.0;
    for (int i = 0; i < 200; ++i)
        loss = agent.critic_update(buf, {0}, settings, mask, mask);
    CHECK(loss < 1e-5);
}

TEST_CASE("ddpg actor objective gradient matches finite differences") {
    CHECK(fd::worst_over_instances(fd::ddpg_actor_fd, 3) < 1e-5);
}

TEST_CASE("ddpg critic loss gradient matches finite differences") {
    CHECK(fd::worst_over_instances(fd::ddpg_critic_fd, 3) < 1e-6);
}

TEST_CASE("aux loss gradient matches finite differences") {
    CHECK(fd::worst_over_instances(fd::aux_fd, 3) < 1e-6);
}

TEST_CASE("masked torso gradient matches finite differences") {
    CHECK(fd::worst_over_instances(fd::torso_fd, 3) < 1e-6);
}

TEST_CASE("deterministic policy gradient ascends an analytic quadratic critic") {
    // mu is a learnable constant; Q(a) = -|a - a*|^2 with exact gradients
    // chained through the product backward + Adam path.
    RandomStream rng(16);
    nn::Net actor({nn::LayerSpec::dense(1, 2), nn::LayerSpec::activation_layer(
                                                   nn::Activation::tanh, 2)},
                  rng);
    nn::AdamState opt(actor.params().size(), 1e-2);
    const std::vector<double> input = {1.0};
    const std::array<double, 2> target = {0.3, -0.5};
    for (int step = 0; step < 500; ++step) {
        nn::Net::Tape tape;
        const auto a = actor.forward(input, &tape);
        // minimize -Q: upstream = d(-Q)/da = 2 (a - a*)
        const std::array<double, 2> up = {2.0 * (a[0] - target[0]), 2.0 * (a[1] - target[1])};
        actor.zero_grads();
        actor.backward(tape, up);
        nn::adam_step(actor.params(), actor.grads(), opt);
    }
    const auto a = actor.forward(input);
    CHECK(std::abs(a[0] - target[0]) < 1e-3);
    CHECK(std::abs(a[1] - target[1]) < 1e-3);
}

TEST_CASE("aux loss is zero when all sub-policies agree") {
    const EnvConfig env = tiny_env();
    TrainSettings settings = tiny_settings(Algo::ddpg, Variant::multi_sd_aux);
    RandomStream init(17);
    DdpgAgent agent(env, settings, init);
    // zero the final actor layer online and target: mu == 0 under every config
    for (auto& rec : agent.named_arrays()) {
        if (rec.name == "actor/trunk" || rec.name == "actor_tgt/trunk") {
            const std::size_t final_dense = static_cast<std::size_t>(settings.hidden2) * 2 + 2;
            std::fill(rec.data->end() - final_dense, rec.data->end(), 0.0);
        }
    }
    RandomStream rng(18);
    ReplayBuffer buf = random_buffer(4, agent.obs_dim(), rng);
    agent.actor().zero_grads();
    int cstar = -1;
    const double loss = agent.aux_pass(buf, iota_batch(4), settings, &cstar);
    CHECK(loss == 0.0);
    CHECK(cstar >= 1);
}

TEST_CASE("lambda = 0 disables the aux term") {
    const EnvConfig env = tiny_env();
    TrainSettings settings = tiny_settings(Algo::ddpg, Variant::multi_sd);
    RandomStream init(19);
    DdpgAgent agent(env, settings, init);
    RandomStream rng(20);
    ReplayBuffer buf = random_buffer(8, agent.obs_dim(), rng);
    RandomStream drop(1);
    const auto st = agent.update(buf, iota_batch(8), settings, agent.all_on_config(), drop);
    CHECK(st.aux == 0.0);
    CHECK(st.cstar == -1);
    CHECK(st.bellman > 0.0);
}

TEST_CASE("aux c* equals the exhaustive argmax over configs") {
    const EnvConfig env = tiny_env();
    TrainSettings settings = tiny_settings(Algo::ddpg, Variant::multi_sd_aux);
    RandomStream init(21);
    DdpgAgent agent(env, settings, init);
    RandomStream rng(22);
    ReplayBuffer buf = random_buffer(6, agent.obs_dim(), rng);
    const auto batch = iota_batch(6);

    agent.actor().zero_grads();
    int cstar = -1;
    agent.aux_pass(buf, batch, settings, &cstar);

    const auto& dist = agent.drop_distribution();
    int best = -1;
    double best_sum = -1e300;
    for (int j = 1; j <= dist.num_configs(); ++j) {
        const auto mask = sd::mask_multipliers(dist.config(j), agent.actor().feature_dims());
        double sum = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const auto a = agent.actor_target().forward(buf.at(i).s, mask, {});
            sum += agent.critic_target().forward(buf.at(i).s, mask, a)[0];
        }
        if (sum > best_sum) {
            best_sum = sum;
            best = j;
        }
    }
    CHECK(cstar == best);
}

TEST_CASE("aux loss is invariant to batch permutation") {
    const EnvConfig env = tiny_env();
    TrainSettings settings = tiny_settings(Algo::naf, Variant::multi_sd_aux);
    RandomStream init(23);
    NafAgent agent(env, settings, init);
    RandomStream rng(24);
    ReplayBuffer buf = random_buffer(6, agent.obs_dim(), rng);

    std::vector<std::size_t> fwd = iota_batch(6);
    std::vector<std::size_t> rev(fwd.rbegin(), fwd.rend());
    agent.mu_torso().zero_grads();
    int c1 = -1, c2 = -1;
    const double l1 = agent.aux_pass(buf, fwd, settings, &c1);
    agent.mu_torso().zero_grads();
    const double l2 = agent.aux_pass(buf, rev, settings, &c2);
    CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
    CHECK(c1 == c2);
}

TEST_CASE("act applies the availability-implied mask") {
    const EnvConfig env = tiny_env();
    const TrainSettings settings = tiny_settings(Algo::ddpg, Variant::multi_sd);
    RandomStream init(25);
    DdpgAgent agent(env, settings, init);

    TrackEnv world(env);
    MultiObservation obs = world.reset(0);
    const auto flat = flatten_observation(obs, env, agent.sensors());

    // all sensors: identity configuration
    const auto a_all = act(agent, obs, env);
    const auto a_direct = agent.act_greedy(flat, agent.all_on_config());
    CHECK(a_all == a_direct);

    // single remaining sensor still yields a bounded action
    MultiObservation only_phys = obs;
    only_phys.available = {true, false, false};
    const auto a_one = act(agent, only_phys, env);
    CHECK(std::isfinite(a_one[0]));
    CHECK(std::abs(a_one[0]) <= 1.0);
    CHECK(std::abs(a_one[1]) <= 1.0);

    MultiObservation none = obs;
    none.available = {false, false, false};
    CHECK_THROWS_AS(act(agent, none, env), SensorsUnavailableError);

    // a uni agent refuses when its own sensor is the failed one
    RandomStream init2(26);
    DdpgAgent uni(env, tiny_settings(Algo::ddpg, Variant::uni_laser), init2);
    MultiObservation no_laser = obs;
    no_laser.available = {true, false, true};
    CHECK_THROWS_AS(act(uni, no_laser, env), SensorsUnavailableError);
}

TEST_CASE("act matches an independent mask+forward reimplementation") {
    const EnvConfig env = tiny_env();
    const TrainSettings settings = tiny_settings(Algo::ddpg, Variant::multi_sd);
    RandomStream init(27);
    DdpgAgent agent(env, settings, init);
    TrackEnv world(env);
    world.reset(0);
    world.set_pose(world.geometry().start_position(), world.geometry().start_heading() + 0.1,
                   8.0);
    MultiObservation obs = world.step({0.1, 0.3}).obs;

    for (int config_index : {7, 3, 5, 1}) {
        MultiObservation masked_obs = obs;
        masked_obs.available = {(config_index & 4) != 0, (config_index & 2) != 0,
                                (config_index & 1) != 0};
        const auto got = act(agent, masked_obs, env);

        // reference: extractor forwards, block mask with alpha rescale, trunk
        const auto flat = flatten_observation(masked_obs, env, agent.sensors());
        std::vector<double> features;
        std::size_t off = 0;
        for (std::size_t i = 0; i < agent.actor().extractors().size(); ++i) {
            const auto& net = agent.actor().extractors()[i];
            std::vector<double> block(flat.begin() + off, flat.begin() + off + net.input_size());
            auto f = oracle::net_forward(net, block);
            features.insert(features.end(), f.begin(), f.end());
            off += net.input_size();
        }
        const auto& dims = agent.actor().feature_dims();
        double total = 0.0, kept = 0.0;
        for (std::size_t i = 0; i < dims.size(); ++i) {
            total += dims[i];
            if (masked_obs.available[i]) kept += dims[i];
        }
        const double alpha = total / kept;
        std::size_t foff = 0;
        for (std::size_t i = 0; i < dims.size(); ++i) {
            const double m = masked_obs.available[i] ? alpha : 0.0;
            for (int k = 0; k < dims[i]; ++k) features[foff + k] *= m;
            foff += dims[i];
        }
        const auto out = oracle::net_forward(agent.actor().trunk(), features);
        CHECK(got[0] == doctest::Approx(std::clamp(out[0], -1.0, 1.0)).epsilon(1e-12));
        CHECK(got[1] == doctest::Approx(std::clamp(out[1], -1.0, 1.0)).epsilon(1e-12));
    }
}

TEST_CASE("targets move only through soft updates") {
    const EnvConfig env = tiny_env();
    TrainSettings settings = tiny_settings(Algo::ddpg, Variant::multi_naive);
    settings.tau = 0.0;
    RandomStream init(28);
    DdpgAgent agent(env, settings, init);
    std::vector<double> tgt_before;
    const_cast<Torso&>(agent.actor_target()).gather_params(tgt_before);

    RandomStream rng(29);
    ReplayBuffer buf = random_buffer(8, agent.obs_dim(), rng);
    RandomStream drop(1);
    for (int i = 0; i < 5; ++i)
        agent.update(buf, iota_batch(8), settings, agent.all_on_config(), drop);

    std::vector<double> tgt_after;
    const_cast<Torso&>(agent.actor_target()).gather_params(tgt_after);
    CHECK(tgt_before == tgt_after);

    agent.soft_update_targets(1.0);
    std::vector<double> online;
    agent.actor().gather_params(online);
    const_cast<Torso&>(agent.actor_target()).gather_params(tgt_after);
    CHECK(online == tgt_after);
}

TEST_CASE("updates keep parameters finite") {
    const EnvConfig env = tiny_env();
    for (Algo algo : {Algo::ddpg, Algo::naf}) {
        TrainSettings settings = tiny_settings(algo, Variant::multi_sd_aux);
        RandomStream init(30);
        auto agent = make_agent(env, settings, init);
        RandomStream rng(31);
        ReplayBuffer buf = random_buffer(16, agent->obs_dim(), rng);
        RandomStream sd_rng(32), drop(33);
        for (int i = 0; i < 10; ++i) {
            const auto& cfg = sample_config(agent->drop_distribution(), sd_rng);
            agent->update(buf, iota_batch(8), settings, cfg, drop);
        }
        for (auto& rec : agent->named_arrays())
            for (double v : *rec.data) CHECK(std::isfinite(v));
    }
}

TEST_CASE("trainer: zero episodes yields an empty curve and a usable agent") {
    EnvConfig env = tiny_env();
    TrainSettings settings = tiny_settings(Algo::ddpg, Variant::multi_naive);
    settings.episodes = 0;
    Trainer trainer(env, settings);
    trainer.run();
    CHECK(trainer.curve().empty());
    TrackEnv world(env);
    const auto obs = world.reset(0);
    const auto a = act(trainer.agent(), obs, env);
    CHECK(std::abs(a[0]) <= 1.0);
}

TEST_CASE("trainer is deterministic for a fixed seed") {
    EnvConfig env = tiny_env();
    TrainSettings settings = tiny_settings(Algo::naf, Variant::multi_sd);
    settings.episodes = 2;
    settings.steps_per_episode = 30;
    settings.seed = 99;
    Trainer t1(env, settings), t2(env, settings);
    t1.run();
    t2.run();
    REQUIRE(t1.curve().size() == t2.curve().size());
    for (std::size_t i = 0; i < t1.curve().size(); ++i) {
        CHECK(t1.curve()[i].ret == t2.curve()[i].ret);
        CHECK(t1.curve()[i].bellman == t2.curve()[i].bellman);
    }
}

TEST_CASE("multi-sd with the all-on one-hot law replays multi-naive bit for bit") {
    EnvConfig env = tiny_env();
    TrainSettings naive = tiny_settings(Algo::ddpg, Variant::multi_naive);
    naive.episodes = 3;
    naive.steps_per_episode = 30;
    naive.warmup = 8;
    naive.batch_size = 8;
    naive.seed = 4242;

    TrainSettings sd_one_hot = naive;
    sd_one_hot.variant = Variant::multi_sd;
    sd_one_hot.lambda = 0.0;
    sd_one_hot.sd_probs.assign(7, 0.0);
    sd_one_hot.sd_probs[6] = 1.0;  // all-on configuration

    Trainer a(env, naive), b(env, sd_one_hot);
    a.run();
    b.run();
    REQUIRE(a.curve().size() == b.curve().size());
    for (std::size_t i = 0; i < a.curve().size(); ++i) {
        CHECK(a.curve()[i].ret == b.curve()[i].ret);
        CHECK(a.curve()[i].steps == b.curve()[i].steps);
        CHECK(a.curve()[i].bellman == b.curve()[i].bellman);
        CHECK(a.curve()[i].aux == b.curve()[i].aux);
    }
}
