#include "sdrl/agents.hpp"

#include <algorithm>
#include <cmath>

#include "sdrl/errors.hpp"

namespace sdrl::rl {

const char* algo_name(Algo a) { return a == Algo::ddpg ? "ddpg" : "naf"; }

Algo algo_from_name(const std::string& name) {
    if (name == "ddpg") return Algo::ddpg;
    if (name == "naf") return Algo::naf;
    throw ConfigError("unknown algorithm: " + name);
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::uni_physical: return "uni-physical";
        case Variant::uni_laser: return "uni-laser";
        case Variant::uni_image: return "uni-image";
        case Variant::multi_naive: return "multi-naive";
        case Variant::multi_dropout: return "multi-dropout";
        case Variant::multi_sd: return "multi-sd";
        case Variant::multi_sd_aux: return "multi-sd-aux";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    for (Variant v : {Variant::uni_physical, Variant::uni_laser, Variant::uni_image,
                      Variant::multi_naive, Variant::multi_dropout, Variant::multi_sd,
                      Variant::multi_sd_aux})
        if (name == variant_name(v)) return v;
    throw ConfigError("unknown variant: " + name);
}

std::vector<int> variant_sensors(Variant v) {
    switch (v) {
        case Variant::uni_physical: return {kSensorPhysical};
        case Variant::uni_laser: return {kSensorLaser};
        case Variant::uni_image: return {kSensorImage};
        default: return {kSensorPhysical, kSensorLaser, kSensorImage};
    }
}

std::vector<nn::LayerSpec> make_extractor_specs(int sensor, const EnvConfig& cfg) {
    using nn::Activation;
    using nn::LayerSpec;
    std::vector<LayerSpec> specs;
    switch (sensor) {
        case kSensorPhysical:
            specs.push_back(LayerSpec::activation_layer(Activation::linear, kPhysicalDim));
            break;
        case kSensorLaser: {
            int channels = cfg.laser_frames;
            int len = kLaserRays;
            for (int stage = 0; stage < 2; ++stage) {
                constexpr int filters = 4, k = 4, stride = 1;
                if (len < k) break;
                specs.push_back(LayerSpec::conv1d(channels, len, filters, k, stride));
                len = specs.back().conv1d_out_len();
                channels = filters;
                specs.push_back(LayerSpec::activation_layer(Activation::relu, channels * len));
            }
            break;
        }
        case kSensorImage: {
            int channels = cfg.image_frames;
            int h = cfg.image_h, w = cfg.image_w;
            const int stages[3][3] = {{16, 4, 4}, {32, 2, 2}, {32, 2, 2}};
            for (const auto& st : stages) {
                const int filters = st[0], k = st[1], stride = st[2];
                if (h < k || w < k) break;
                specs.push_back(LayerSpec::conv2d(channels, h, w, filters, k, stride));
                h = specs.back().conv2d_out_h();
                w = specs.back().conv2d_out_w();
                channels = filters;
                specs.push_back(LayerSpec::activation_layer(Activation::relu, channels * h * w));
            }
            break;
        }
        default:
            throw ConfigError("make_extractor_specs: bad sensor index");
    }
    return specs;
}

void TrainSettings::validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in [0,1]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must be in [0,1]");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (actor_lr <= 0.0 || critic_lr <= 0.0) throw ConfigError("learning rates must be positive");
    if (episodes < 0 || steps_per_episode <= 0) throw ConfigError("bad episode budget");
    if (buffer_capacity < static_cast<std::size_t>(batch_size))
        throw ConfigError("buffer capacity must hold at least one batch");
    if (warmup < batch_size) throw ConfigError("warmup must be >= batch_size");
    if (hidden1 <= 0 || hidden2 <= 0) throw ConfigError("hidden sizes must be positive");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0))
        throw ConfigError("dropout_keep must be in (0,1]");
    if (ou_theta < 0.0 || ou_sigma0 < 0.0 || ou_sigma1 < 0.0 || ou_dt <= 0.0)
        throw ConfigError("bad OU parameters");
}

// --- Torso ---

Torso::Torso(const std::vector<int>& sensors, const EnvConfig& env, int extra_inputs,
             int hidden1, int hidden2, int out_dim, nn::Activation out_act,
             bool small_final_init, RandomStream& rng)
    : sensors_(sensors), extra_inputs_(extra_inputs) {
    using nn::Activation;
    using nn::LayerSpec;
    for (int s : sensors_) {
        raw_dims_.push_back(env.sensor_dim(s));
        obs_dim_ += raw_dims_.back();
        extractors_.emplace_back(make_extractor_specs(s, env), rng);
        feature_dims_.push_back(extractors_.back().output_size());
        feature_total_ += feature_dims_.back();
    }
    std::vector<LayerSpec> trunk = {
        LayerSpec::dense(feature_total_ + extra_inputs_, hidden1),
        LayerSpec::activation_layer(Activation::relu, hidden1),
        LayerSpec::dense(hidden1, hidden2),
        LayerSpec::activation_layer(Activation::relu, hidden2),
        LayerSpec::dense(hidden2, out_dim),
    };
    last_hidden_layer_ = 4;  // input index of the final dense layer
    if (out_act != Activation::linear)
        trunk.push_back(LayerSpec::activation_layer(out_act, out_dim));
    trunk_ = nn::Net(std::move(trunk), rng);
    if (small_final_init) trunk_.reinit_layer_uniform(last_hidden_layer_, -3e-3, 3e-3, rng);
}

std::vector<double> Torso::extract(std::span<const double> obs,
                                   std::vector<nn::Net::Tape>* tapes) const {
    if (static_cast<int>(obs.size()) != obs_dim_)
        throw ConfigError("torso: observation size mismatch");
    if (tapes) tapes->resize(extractors_.size());
    std::vector<double> features;
    features.reserve(feature_total_);
    std::size_t off = 0;
    for (std::size_t i = 0; i < extractors_.size(); ++i) {
        auto out = extractors_[i].forward(obs.subspan(off, raw_dims_[i]),
                                          tapes ? &(*tapes)[i] : nullptr);
        features.insert(features.end(), out.begin(), out.end());
        off += raw_dims_[i];
    }
    return features;
}

std::vector<double> Torso::trunk_forward(std::span<const double> features,
                                         std::span<const double> mask,
                                         std::span<const double> extra,
                                         nn::Net::Tape* tape) const {
    if (static_cast<int>(features.size()) != feature_total_)
        throw ConfigError("torso: feature size mismatch");
    if (static_cast<int>(extra.size()) != extra_inputs_)
        throw ConfigError("torso: extra input size mismatch");
    std::vector<double> in;
    in.reserve(feature_total_ + extra_inputs_);
    if (mask.empty()) {
        in.assign(features.begin(), features.end());
    } else {
        if (mask.size() != features.size()) throw ConfigError("torso: mask size mismatch");
        in.resize(features.size());
        for (std::size_t i = 0; i < features.size(); ++i) in[i] = features[i] * mask[i];
    }
    in.insert(in.end(), extra.begin(), extra.end());
    return trunk_.forward(in, tape);
}

std::vector<double> Torso::forward(std::span<const double> obs, std::span<const double> mask,
                                   std::span<const double> extra, Tape* tape) const {
    if (!tape) {
        auto features = extract(obs);
        return trunk_forward(features, mask, extra);
    }
    tape->features = extract(obs, &tape->ext);
    return trunk_forward(tape->features, mask, extra, &tape->trunk);
}

std::vector<double> Torso::trunk_backward(const nn::Net::Tape& trunk_tape,
                                          std::span<const double> upstream,
                                          std::span<const double> mask,
                                          std::span<double> extra_grad, bool accum_params) {
    auto gin = trunk_.backward(trunk_tape, upstream, accum_params);
    if (!extra_grad.empty()) {
        if (static_cast<int>(extra_grad.size()) != extra_inputs_)
            throw UsageError("torso: extra_grad size mismatch");
        std::copy(gin.begin() + feature_total_, gin.end(), extra_grad.begin());
    }
    std::vector<double> fg(gin.begin(), gin.begin() + feature_total_);
    if (!mask.empty())
        for (int i = 0; i < feature_total_; ++i) fg[i] *= mask[i];
    return fg;
}

std::vector<double> Torso::extractors_backward(const std::vector<nn::Net::Tape>& ext_tapes,
                                               std::span<const double> feature_grad,
                                               bool accum_params) {
    if (ext_tapes.size() != extractors_.size())
        throw UsageError("torso: extractor tape count mismatch");
    std::vector<double> obs_grad;
    obs_grad.reserve(obs_dim_);
    std::size_t off = 0;
    for (std::size_t i = 0; i < extractors_.size(); ++i) {
        auto g = extractors_[i].backward(ext_tapes[i],
                                         feature_grad.subspan(off, feature_dims_[i]),
                                         accum_params);
        obs_grad.insert(obs_grad.end(), g.begin(), g.end());
        off += feature_dims_[i];
    }
    return obs_grad;
}

std::vector<double> Torso::backward(const Tape& tape, std::span<const double> upstream,
                                    std::span<const double> mask, std::span<double> extra_grad,
                                    bool accum_params) {
    auto fg = trunk_backward(tape.trunk, upstream, mask, extra_grad, accum_params);
    return extractors_backward(tape.ext, fg, accum_params);
}

std::vector<double> Torso::last_hidden(const Tape& tape) const {
    return tape.trunk.acts.at(last_hidden_layer_);
}

std::size_t Torso::param_count() const {
    std::size_t n = trunk_.params().size();
    for (const auto& e : extractors_) n += e.params().size();
    return n;
}

void Torso::gather_params(std::vector<double>& out) const {
    out.clear();
    out.reserve(param_count());
    for (const auto& e : extractors_) out.insert(out.end(), e.params().begin(), e.params().end());
    out.insert(out.end(), trunk_.params().begin(), trunk_.params().end());
}

void Torso::scatter_params(std::span<const double> in) {
    if (in.size() != param_count()) throw UsageError("torso: parameter count mismatch");
    std::size_t off = 0;
    for (auto& e : extractors_) {
        std::copy(in.begin() + off, in.begin() + off + e.params().size(), e.params().begin());
        off += e.params().size();
    }
    std::copy(in.begin() + off, in.end(), trunk_.params().begin());
}

void Torso::gather_grads(std::vector<double>& out) const {
    out.clear();
    out.reserve(param_count());
    for (const auto& e : extractors_) out.insert(out.end(), e.grads().begin(), e.grads().end());
    out.insert(out.end(), trunk_.grads().begin(), trunk_.grads().end());
}

void Torso::zero_grads() {
    for (auto& e : extractors_) e.zero_grads();
    trunk_.zero_grads();
}

namespace {

void soft_update_torso(Torso& target, const Torso& online, double tau) {
    std::vector<double> t, o;
    target.gather_params(t);
    online.gather_params(o);
    nn::soft_update(t, o, tau);
    target.scatter_params(t);
}

std::array<double, 2> clip_action(std::span<const double> a) {
    return {std::clamp(a[0], -1.0, 1.0), std::clamp(a[1], -1.0, 1.0)};
}

// Composes the block mask with a per-row Bernoulli keep mask (the standard
// Dropout baseline). Consumes feature_total uniforms when keep < 1.
void apply_dropout_row(std::vector<double>& mask, double keep, RandomStream& rng) {
    if (keep >= 1.0) return;
    for (double& m : mask) {
        const bool kept = rng.uniform01() < keep;
        m *= kept ? 1.0 / keep : 0.0;
    }
}

}  // namespace

// --- Agent base ---

Agent::Agent(Algo algo, Variant variant, const EnvConfig& env, const TrainSettings& settings)
    : algo_(algo), variant_(variant), sensors_(variant_sensors(variant)) {
    for (int s : sensors_) {
        raw_dims_.push_back(env.sensor_dim(s));
        obs_dim_ += raw_dims_.back();
    }
    dist_ = variant_distribution(variant, settings.sd_probs);
}

void Agent::set_drop_distribution(sd::DropDistribution dist) {
    if (dist.sensors() != static_cast<int>(sensors_.size()))
        throw ConfigError("set_drop_distribution: sensor count mismatch");
    dist_ = std::move(dist);
}

std::vector<double> Agent::feature_mask(const Torso& torso, const sd::DropConfig& config) const {
    return sd::mask_multipliers(config, torso.feature_dims());
}

sd::DropDistribution variant_distribution(Variant v, const std::vector<double>& explicit_probs) {
    const int m = static_cast<int>(variant_sensors(v).size());
    if (v == Variant::multi_sd || v == Variant::multi_sd_aux) {
        if (!explicit_probs.empty()) return sd::DropDistribution(m, explicit_probs);
        return sd::DropDistribution::uniform(m);
    }
    return sd::DropDistribution::all_on(m);
}

const sd::DropConfig& availability_config(const Agent& agent, const MultiObservation& obs) {
    const auto& sensors = agent.sensors();
    const int m = static_cast<int>(sensors.size());
    int value = 0;
    for (int i = 0; i < m; ++i)
        if (obs.available[sensors[i]]) value |= 1 << (m - 1 - i);
    if (value == 0)
        throw SensorsUnavailableError("act: no available sensor feeds this agent");
    return agent.drop_distribution().config(value);
}

std::array<double, 2> act(const Agent& agent, const MultiObservation& obs, const EnvConfig& env) {
    const sd::DropConfig& config = availability_config(agent, obs);
    const auto flat = flatten_observation(obs, env, agent.sensors());
    return agent.act_greedy(flat, config);
}

// --- DDPG ---

DdpgAgent::DdpgAgent(const EnvConfig& env, const TrainSettings& settings, RandomStream& rng)
    : Agent(Algo::ddpg, settings.variant, env, settings) {
    actor_ = Torso(sensors_, env, 0, settings.hidden1, settings.hidden2, kActionDim,
                   nn::Activation::tanh, true, rng);
    critic_ = Torso(sensors_, env, kActionDim, settings.hidden1, settings.hidden2, 1,
                    nn::Activation::linear, false, rng);
    actor_target_ = actor_;
    critic_target_ = critic_;
    actor_opt_ = nn::AdamState(actor_.param_count(), settings.actor_lr);
    critic_opt_ = nn::AdamState(critic_.param_count(), settings.critic_lr);
}

std::array<double, 2> DdpgAgent::act_greedy(std::span<const double> obs,
                                            const sd::DropConfig& config) const {
    const auto mask = feature_mask(actor_, config);
    return clip_action(actor_.forward(obs, mask, {}));
}

double DdpgAgent::q_value(std::span<const double> obs, std::span<const double> action,
                          const sd::DropConfig& config) const {
    const auto mask = feature_mask(critic_, config);
    return critic_.forward(obs, mask, action)[0];
}

double DdpgAgent::critic_loss_pass(const ReplayBuffer& buffer,
                                   const std::vector<std::size_t>& batch,
                                   const TrainSettings& settings, std::span<const double> mask,
                                   std::span<const double> target_mask) {
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (std::size_t idx : batch) {
        const Transition& tr = buffer.at(idx);
        double y = tr.r;
        if (!tr.done) {
            const auto a2 = actor_target_.forward(tr.s2, target_mask, {});
            const auto q2 = critic_target_.forward(tr.s2, target_mask, a2);
            y += settings.gamma * q2[0];
        }
        Torso::Tape tape;
        const auto q = critic_.forward(tr.s, mask, tr.a, &tape);
        const double resid = y - q[0];
        loss += resid * resid * inv_b;
        const double upstream = -2.0 * resid * inv_b;
        std::array<double, 2> unused{};
        critic_.backward(tape, std::array<double, 1>{upstream}, mask, unused, true);
    }
    return loss;
}

double DdpgAgent::critic_update(const ReplayBuffer& buffer,
                                const std::vector<std::size_t>& batch,
                                const TrainSettings& settings, std::span<const double> mask,
                                std::span<const double> target_mask) {
    critic_.zero_grads();
    const double loss = critic_loss_pass(buffer, batch, settings, mask, target_mask);
    critic_.gather_params(scratch_params_);
    critic_.gather_grads(scratch_grads_);
    nn::adam_step(scratch_params_, scratch_grads_, critic_opt_);
    critic_.scatter_params(scratch_params_);
    return loss;
}

double DdpgAgent::actor_objective_pass(const ReplayBuffer& buffer,
                                       const std::vector<std::size_t>& batch,
                                       [[maybe_unused]] const TrainSettings& settings,
                                       std::span<const double> mask,
                                       std::span<const double> eval_mask) {
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double objective = 0.0;
    for (std::size_t idx : batch) {
        const Transition& tr = buffer.at(idx);
        Torso::Tape ta;
        const auto a = actor_.forward(tr.s, mask, {}, &ta);
        Torso::Tape tc;
        const auto q = critic_.forward(tr.s, eval_mask, a, &tc);
        objective += q[0] * inv_b;
        std::array<double, 2> dq_da{};
        critic_.backward(tc, std::array<double, 1>{inv_b}, eval_mask, dq_da, false);
        // ascend the objective: minimize -J
        const std::array<double, 2> upstream = {-dq_da[0], -dq_da[1]};
        actor_.backward(ta, upstream, mask, {}, true);
    }
    return objective;
}

double DdpgAgent::actor_update(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                               const TrainSettings& settings, std::span<const double> mask,
                               std::span<const double> eval_mask, double* aux_loss, int* cstar) {
    actor_.zero_grads();
    const double objective = actor_objective_pass(buffer, batch, settings, mask, eval_mask);
    double aux = 0.0;
    int best_config = -1;
    if (settings.variant == Variant::multi_sd_aux && settings.lambda > 0.0)
        aux = aux_pass(buffer, batch, settings, &best_config);
    if (aux_loss) *aux_loss = aux;
    if (cstar) *cstar = best_config;

    actor_.gather_params(scratch_params_);
    actor_.gather_grads(scratch_grads_);
    nn::adam_step(scratch_params_, scratch_grads_, actor_opt_);
    actor_.scatter_params(scratch_params_);
    return objective;
}

double DdpgAgent::aux_pass(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                           const TrainSettings& settings, int* cstar) {
    const std::size_t b = batch.size();
    const int n_configs = dist_.num_configs();

    // cache target features once per row; only the trunks rerun per config
    std::vector<std::vector<double>> feat_actor_t(b), feat_critic_t(b);
    for (std::size_t i = 0; i < b; ++i) {
        const Transition& tr = buffer.at(batch[i]);
        feat_actor_t[i] = actor_target_.extract(tr.s);
        feat_critic_t[i] = critic_target_.extract(tr.s);
    }

    // c* = argmax_j sum_i Qt(s_i, mu_t(s_i)) under config j
    int best = 1;
    double best_sum = -std::numeric_limits<double>::infinity();
    for (int j = 1; j <= n_configs; ++j) {
        const sd::DropConfig& cj = dist_.config(j);
        const auto mask_a = feature_mask(actor_target_, cj);
        const auto mask_c = feature_mask(critic_target_, cj);
        double sum = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const auto a = actor_target_.trunk_forward(feat_actor_t[i], mask_a, {});
            sum += critic_target_.trunk_forward(feat_critic_t[i], mask_c, a)[0];
        }
        if (sum > best_sum) {
            best_sum = sum;
            best = j;
        }
    }
    if (cstar) *cstar = best;

    // frozen target actions under c*
    const auto mask_star = feature_mask(actor_target_, dist_.config(best));
    std::vector<std::array<double, 2>> target_actions(b);
    for (std::size_t i = 0; i < b; ++i) {
        const auto a = actor_target_.trunk_forward(feat_actor_t[i], mask_star, {});
        target_actions[i] = {a[0], a[1]};
    }

    // penalize each online sub-policy's disagreement with the frozen action
    double loss = 0.0;
    const double lambda = settings.lambda;
    std::vector<double> feature_grad(actor_.feature_total());
    for (std::size_t i = 0; i < b; ++i) {
        const Transition& tr = buffer.at(batch[i]);
        std::vector<nn::Net::Tape> ext_tapes;
        const auto features = actor_.extract(tr.s, &ext_tapes);
        std::fill(feature_grad.begin(), feature_grad.end(), 0.0);
        for (int j = 1; j <= n_configs; ++j) {
            const auto mask_j = feature_mask(actor_, dist_.config(j));
            nn::Net::Tape trunk_tape;
            const auto a = actor_.trunk_forward(features, mask_j, {}, &trunk_tape);
            const double e0 = a[0] - target_actions[i][0];
            const double e1 = a[1] - target_actions[i][1];
            loss += lambda * (e0 * e0 + e1 * e1);
            const std::array<double, 2> upstream = {2.0 * lambda * e0, 2.0 * lambda * e1};
            const auto fg = actor_.trunk_backward(trunk_tape, upstream, mask_j, {}, true);
            for (std::size_t k = 0; k < fg.size(); ++k) feature_grad[k] += fg[k];
        }
        actor_.extractors_backward(ext_tapes, feature_grad, true);
    }
    return loss;
}

UpdateStats DdpgAgent::update(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                              const TrainSettings& settings, const sd::DropConfig& config,
                              RandomStream& dropout_rng) {
    UpdateStats st;
    const auto sd_mask = feature_mask(critic_, config);
    if (settings.dropout_keep < 1.0) {
        // The Dropout baseline draws one elementwise mask per batch for each
        // network receiving gradients; inference passes (targets, the frozen
        // critic in the actor step) keep the plain block mask.
        auto critic_mask = sd_mask;
        apply_dropout_row(critic_mask, settings.dropout_keep, dropout_rng);
        st.bellman = critic_update(buffer, batch, settings, critic_mask, sd_mask);
        auto actor_mask = sd_mask;
        apply_dropout_row(actor_mask, settings.dropout_keep, dropout_rng);
        actor_update(buffer, batch, settings, actor_mask, sd_mask, &st.aux, &st.cstar);
    } else {
        st.bellman = critic_update(buffer, batch, settings, sd_mask, sd_mask);
        actor_update(buffer, batch, settings, sd_mask, sd_mask, &st.aux, &st.cstar);
    }
    soft_update_targets(settings.tau);
    return st;
}

void DdpgAgent::soft_update_targets(double tau) {
    soft_update_torso(actor_target_, actor_, tau);
    soft_update_torso(critic_target_, critic_, tau);
}

std::array<std::vector<double>, 2> DdpgAgent::action_jacobian(
    std::span<const double> obs, const sd::DropConfig& config) const {
    const auto mask = feature_mask(actor_, config);
    Torso::Tape tape;
    auto& self = const_cast<DdpgAgent&>(*this);
    self.actor_.forward(obs, mask, {}, &tape);
    std::array<std::vector<double>, 2> rows;
    for (int k = 0; k < kActionDim; ++k) {
        std::array<double, 2> unit{};
        unit[k] = 1.0;
        rows[k] = self.actor_.backward(tape, std::span<const double>(unit.data(), 2), mask, {},
                                       false);
    }
    return rows;
}

std::vector<double> DdpgAgent::policy_embedding(std::span<const double> obs,
                                                const sd::DropConfig& config) const {
    const auto mask = feature_mask(actor_, config);
    Torso::Tape tape;
    actor_.forward(obs, mask, {}, &tape);
    return actor_.last_hidden(tape);
}

std::vector<Agent::NamedArray> DdpgAgent::named_arrays() {
    std::vector<NamedArray> out;
    auto add_torso = [&out](const std::string& prefix, Torso& t) {
        auto& nets = t.extractor_nets();
        for (std::size_t i = 0; i < nets.size(); ++i)
            out.push_back({prefix + "/ext" + std::to_string(i), &nets[i].params()});
        out.push_back({prefix + "/trunk", &t.trunk_net().params()});
    };
    add_torso("actor", actor_);
    add_torso("critic", critic_);
    add_torso("actor_tgt", actor_target_);
    add_torso("critic_tgt", critic_target_);
    out.push_back({"adam/actor/m", &actor_opt_.m});
    out.push_back({"adam/actor/v", &actor_opt_.v});
    out.push_back({"adam/critic/m", &critic_opt_.m});
    out.push_back({"adam/critic/v", &critic_opt_.v});
    return out;
}

long& DdpgAgent::adam_step_count(int group) {
    return group == 0 ? actor_opt_.t : critic_opt_.t;
}

// --- NAF ---

namespace {

std::vector<nn::LayerSpec> head_trunk_specs(int in, int h1, int h2, int out,
                                            nn::Activation out_act) {
    using nn::Activation;
    using nn::LayerSpec;
    std::vector<LayerSpec> specs = {
        LayerSpec::dense(in, h1),
        LayerSpec::activation_layer(Activation::relu, h1),
        LayerSpec::dense(h1, h2),
        LayerSpec::activation_layer(Activation::relu, h2),
        LayerSpec::dense(h2, out),
    };
    if (out_act != Activation::linear)
        specs.push_back(LayerSpec::activation_layer(out_act, out));
    return specs;
}

}  // namespace

VlModule::VlModule(const std::vector<int>& sensors, const EnvConfig& env, int hidden1,
                   int hidden2, RandomStream& rng) {
    for (int s : sensors) {
        obs_dim += env.sensor_dim(s);
        extractors.emplace_back(make_extractor_specs(s, env), rng);
        feature_dims.push_back(extractors.back().output_size());
        feature_total += feature_dims.back();
    }
    v_trunk = nn::Net(head_trunk_specs(feature_total, hidden1, hidden2, 1,
                                       nn::Activation::linear), rng);
    l_trunk = nn::Net(head_trunk_specs(feature_total, hidden1, hidden2, 3,
                                       nn::Activation::sigmoid), rng);
}

std::array<double, 4> VlModule::forward(std::span<const double> obs,
                                        std::span<const double> mask, Tape* tape) const {
    if (static_cast<int>(obs.size()) != obs_dim)
        throw ConfigError("vl module: observation size mismatch");
    std::vector<nn::Net::Tape> local_ext;
    std::vector<nn::Net::Tape>* ext = tape ? &tape->ext : &local_ext;
    ext->resize(extractors.size());
    std::vector<double> features;
    features.reserve(feature_total);
    std::size_t off = 0;
    for (std::size_t i = 0; i < extractors.size(); ++i) {
        auto out = extractors[i].forward(obs.subspan(off, extractors[i].input_size()),
                                         &(*ext)[i]);
        features.insert(features.end(), out.begin(), out.end());
        off += extractors[i].input_size();
    }
    std::vector<double> masked(features.size());
    if (mask.empty()) {
        masked = features;
    } else {
        for (std::size_t i = 0; i < features.size(); ++i) masked[i] = features[i] * mask[i];
    }
    const auto v = v_trunk.forward(masked, tape ? &tape->v : nullptr);
    const auto l = l_trunk.forward(masked, tape ? &tape->l : nullptr);
    if (tape) {
        tape->features = std::move(features);
        tape->masked = masked;
    }
    return {v[0], l[0], l[1], l[2]};
}

void VlModule::backward(const Tape& tape, double v_grad, std::span<const double> l_grad,
                        std::span<const double> mask) {
    auto gv = v_trunk.backward(tape.v, std::array<double, 1>{v_grad}, true);
    auto gl = l_trunk.backward(tape.l, l_grad, true);
    std::vector<double> fg(feature_total);
    for (int i = 0; i < feature_total; ++i) {
        double g = gv[i] + gl[i];
        if (!mask.empty()) g *= mask[i];
        fg[i] = g;
    }
    std::size_t off = 0;
    for (std::size_t i = 0; i < extractors.size(); ++i) {
        extractors[i].backward(tape.ext[i],
                               std::span<const double>(fg.data() + off, feature_dims[i]), true);
        off += feature_dims[i];
    }
}

std::size_t VlModule::param_count() const {
    std::size_t n = v_trunk.params().size() + l_trunk.params().size();
    for (const auto& e : extractors) n += e.params().size();
    return n;
}

void VlModule::gather_params(std::vector<double>& out) const {
    out.clear();
    out.reserve(param_count());
    for (const auto& e : extractors) out.insert(out.end(), e.params().begin(), e.params().end());
    out.insert(out.end(), v_trunk.params().begin(), v_trunk.params().end());
    out.insert(out.end(), l_trunk.params().begin(), l_trunk.params().end());
}

void VlModule::scatter_params(std::span<const double> in) {
    if (in.size() != param_count()) throw UsageError("vl module: parameter count mismatch");
    std::size_t off = 0;
    for (auto& e : extractors) {
        std::copy(in.begin() + off, in.begin() + off + e.params().size(), e.params().begin());
        off += e.params().size();
    }
    std::copy(in.begin() + off, in.begin() + off + v_trunk.params().size(),
              v_trunk.params().begin());
    off += v_trunk.params().size();
    std::copy(in.begin() + off, in.end(), l_trunk.params().begin());
}

void VlModule::gather_grads(std::vector<double>& out) const {
    out.clear();
    out.reserve(param_count());
    for (const auto& e : extractors) out.insert(out.end(), e.grads().begin(), e.grads().end());
    out.insert(out.end(), v_trunk.grads().begin(), v_trunk.grads().end());
    out.insert(out.end(), l_trunk.grads().begin(), l_trunk.grads().end());
}

void VlModule::zero_grads() {
    for (auto& e : extractors) e.zero_grads();
    v_trunk.zero_grads();
    l_trunk.zero_grads();
}

NafAgent::NafAgent(const EnvConfig& env, const TrainSettings& settings, RandomStream& rng)
    : Agent(Algo::naf, settings.variant, env, settings) {
    mu_ = Torso(sensors_, env, 0, settings.hidden1, settings.hidden2, kActionDim,
                nn::Activation::tanh, true, rng);
    vl_ = VlModule(sensors_, env, settings.hidden1, settings.hidden2, rng);
    mu_target_ = mu_;
    vl_target_ = vl_;
    mu_opt_ = nn::AdamState(mu_.param_count(), settings.actor_lr);
    vl_opt_ = nn::AdamState(vl_.param_count(), settings.critic_lr);
}

std::array<double, 2> NafAgent::act_greedy(std::span<const double> obs,
                                           const sd::DropConfig& config) const {
    const auto mask = feature_mask(mu_, config);
    return clip_action(mu_.forward(obs, mask, {}));
}

double naf_advantage(double l11, double l21, double l22, std::array<double, 2> mu,
                     std::array<double, 2> action) {
    const double d0 = action[0] - mu[0], d1 = action[1] - mu[1];
    const double ld0 = l11 * d0;
    const double ld1 = l21 * d0 + l22 * d1;
    return -0.5 * (ld0 * ld0 + ld1 * ld1);
}

NafAgent::QValue NafAgent::q_value(std::span<const double> obs, std::span<const double> action,
                                   const sd::DropConfig& config) const {
    const auto mask_mu = feature_mask(mu_, config);
    const auto mu = mu_.forward(obs, mask_mu, {});
    std::vector<double> vl_mask = sd::mask_multipliers(config, vl_.feature_dims);
    const auto vl = vl_.forward(obs, vl_mask);
    const double l11 = vl[1], l21 = vl[2], l22 = vl[3];
    QValue q;
    q.v = vl[0];
    q.a = naf_advantage(l11, l21, l22, {mu[0], mu[1]}, {action[0], action[1]});
    q.q = q.v + q.a;
    q.mu = {mu[0], mu[1]};
    q.p = {{{l11 * l11 + l21 * l21, l21 * l22}, {l21 * l22, l22 * l22}}};
    return q;
}

double NafAgent::bellman_pass(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                              const TrainSettings& settings, std::span<const double> mask_mu,
                              std::span<const double> mask_vl,
                              std::span<const double> target_mask_vl) {
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (std::size_t idx : batch) {
        const Transition& tr = buffer.at(idx);
        // y = r + gamma V'(s'); the greedy action's advantage is exactly zero
        double y = tr.r;
        if (!tr.done) y += settings.gamma * vl_target_.forward(tr.s2, target_mask_vl)[0];

        Torso::Tape tmu;
        const auto mu = mu_.forward(tr.s, mask_mu, {}, &tmu);
        VlModule::Tape tvl;
        const auto vl = vl_.forward(tr.s, mask_vl, &tvl);
        const double l11 = vl[1], l21 = vl[2], l22 = vl[3];
        const double d0 = tr.a[0] - mu[0], d1 = tr.a[1] - mu[1];
        const double ld0 = l11 * d0;
        const double ld1 = l21 * d0 + l22 * d1;
        const double adv = -0.5 * (ld0 * ld0 + ld1 * ld1);
        const double q = vl[0] + adv;
        const double resid = y - q;
        loss += resid * resid * inv_b;
        const double dq = -2.0 * resid * inv_b;

        // dA/dmu = P d with P = L^T L
        const double p00 = l11 * l11 + l21 * l21, p01 = l21 * l22, p11 = l22 * l22;
        const std::array<double, 2> dmu = {dq * (p00 * d0 + p01 * d1),
                                           dq * (p01 * d0 + p11 * d1)};
        // dA/dL = -(L d) d^T, lower-triangular entries
        const std::array<double, 3> dl = {dq * (-ld0 * d0), dq * (-ld1 * d0), dq * (-ld1 * d1)};

        mu_.backward(tmu, dmu, mask_mu, {}, true);
        vl_.backward(tvl, dq, dl, mask_vl);
    }
    return loss;
}

UpdateStats NafAgent::update(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                             const TrainSettings& settings, const sd::DropConfig& config,
                             RandomStream& dropout_rng) {
    UpdateStats st;
    const auto sd_mask_mu = feature_mask(mu_, config);
    std::vector<double> sd_mask_vl = sd::mask_multipliers(config, vl_.feature_dims);
    auto mask_mu = sd_mask_mu;
    auto mask_vl = sd_mask_vl;
    if (settings.dropout_keep < 1.0) {
        apply_dropout_row(mask_mu, settings.dropout_keep, dropout_rng);
        apply_dropout_row(mask_vl, settings.dropout_keep, dropout_rng);
    }

    mu_.zero_grads();
    vl_.zero_grads();
    st.bellman = bellman_pass(buffer, batch, settings, mask_mu, mask_vl, sd_mask_vl);

    if (settings.variant == Variant::multi_sd_aux && settings.lambda > 0.0)
        st.aux = aux_pass(buffer, batch, settings, &st.cstar);

    mu_.gather_params(scratch_params_);
    mu_.gather_grads(scratch_grads_);
    nn::adam_step(scratch_params_, scratch_grads_, mu_opt_);
    mu_.scatter_params(scratch_params_);

    vl_.gather_params(scratch_params_);
    vl_.gather_grads(scratch_grads_);
    nn::adam_step(scratch_params_, scratch_grads_, vl_opt_);
    vl_.scatter_params(scratch_params_);

    soft_update_targets(settings.tau);
    return st;
}

double NafAgent::aux_pass(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                          const TrainSettings& settings, int* cstar) {
    const std::size_t b = batch.size();
    const int n_configs = dist_.num_configs();

    // Qt(s, mu_t(s)) under config j collapses to Vt(s) under config j
    int best = 1;
    double best_sum = -std::numeric_limits<double>::infinity();
    for (int j = 1; j <= n_configs; ++j) {
        std::vector<double> mask_vl = sd::mask_multipliers(dist_.config(j), vl_target_.feature_dims);
        double sum = 0.0;
        for (std::size_t i = 0; i < b; ++i)
            sum += vl_target_.forward(buffer.at(batch[i]).s, mask_vl)[0];
        if (sum > best_sum) {
            best_sum = sum;
            best = j;
        }
    }
    if (cstar) *cstar = best;

    const auto mask_star = feature_mask(mu_target_, dist_.config(best));
    double loss = 0.0;
    const double lambda = settings.lambda;
    std::vector<double> feature_grad(mu_.feature_total());
    for (std::size_t i = 0; i < b; ++i) {
        const Transition& tr = buffer.at(batch[i]);
        const auto target_a = mu_target_.forward(tr.s, mask_star, {});
        std::vector<nn::Net::Tape> ext_tapes;
        const auto features = mu_.extract(tr.s, &ext_tapes);
        std::fill(feature_grad.begin(), feature_grad.end(), 0.0);
        for (int j = 1; j <= n_configs; ++j) {
            const auto mask_j = feature_mask(mu_, dist_.config(j));
            nn::Net::Tape trunk_tape;
            const auto a = mu_.trunk_forward(features, mask_j, {}, &trunk_tape);
            const double e0 = a[0] - target_a[0];
            const double e1 = a[1] - target_a[1];
            loss += lambda * (e0 * e0 + e1 * e1);
            const std::array<double, 2> upstream = {2.0 * lambda * e0, 2.0 * lambda * e1};
            const auto fg = mu_.trunk_backward(trunk_tape, upstream, mask_j, {}, true);
            for (std::size_t k = 0; k < fg.size(); ++k) feature_grad[k] += fg[k];
        }
        mu_.extractors_backward(ext_tapes, feature_grad, true);
    }
    return loss;
}

void NafAgent::soft_update_targets(double tau) {
    soft_update_torso(mu_target_, mu_, tau);
    std::vector<double> t, o;
    vl_target_.gather_params(t);
    vl_.gather_params(o);
    nn::soft_update(t, o, tau);
    vl_target_.scatter_params(t);
}

std::array<std::vector<double>, 2> NafAgent::action_jacobian(
    std::span<const double> obs, const sd::DropConfig& config) const {
    const auto mask = feature_mask(mu_, config);
    Torso::Tape tape;
    auto& self = const_cast<NafAgent&>(*this);
    self.mu_.forward(obs, mask, {}, &tape);
    std::array<std::vector<double>, 2> rows;
    for (int k = 0; k < kActionDim; ++k) {
        std::array<double, 2> unit{};
        unit[k] = 1.0;
        rows[k] = self.mu_.backward(tape, std::span<const double>(unit.data(), 2), mask, {},
                                    false);
    }
    return rows;
}

std::vector<double> NafAgent::policy_embedding(std::span<const double> obs,
                                               const sd::DropConfig& config) const {
    const auto mask = feature_mask(mu_, config);
    Torso::Tape tape;
    mu_.forward(obs, mask, {}, &tape);
    return mu_.last_hidden(tape);
}

std::vector<Agent::NamedArray> NafAgent::named_arrays() {
    std::vector<NamedArray> out;
    auto add_torso = [&out](const std::string& prefix, Torso& t) {
        auto& nets = t.extractor_nets();
        for (std::size_t i = 0; i < nets.size(); ++i)
            out.push_back({prefix + "/ext" + std::to_string(i), &nets[i].params()});
        out.push_back({prefix + "/trunk", &t.trunk_net().params()});
    };
    auto add_vl = [&out](const std::string& prefix, VlModule& m) {
        for (std::size_t i = 0; i < m.extractors.size(); ++i)
            out.push_back({prefix + "/ext" + std::to_string(i), &m.extractors[i].params()});
        out.push_back({prefix + "/v_trunk", &m.v_trunk.params()});
        out.push_back({prefix + "/l_trunk", &m.l_trunk.params()});
    };
    add_torso("mu", mu_);
    add_vl("vl", vl_);
    add_torso("mu_tgt", mu_target_);
    add_vl("vl_tgt", vl_target_);
    out.push_back({"adam/mu/m", &mu_opt_.m});
    out.push_back({"adam/mu/v", &mu_opt_.v});
    out.push_back({"adam/vl/m", &vl_opt_.m});
    out.push_back({"adam/vl/v", &vl_opt_.v});
    return out;
}

long& NafAgent::adam_step_count(int group) {
    return group == 0 ? mu_opt_.t : vl_opt_.t;
}

std::unique_ptr<Agent> make_agent(const EnvConfig& env, const TrainSettings& settings,
                                  RandomStream& init_rng) {
    settings.validate();
    if (settings.algo == Algo::ddpg)
        return std::make_unique<DdpgAgent>(env, settings, init_rng);
    return std::make_unique<NafAgent>(env, settings, init_rng);
}

}  // namespace sdrl::rl
