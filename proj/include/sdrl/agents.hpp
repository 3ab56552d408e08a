#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sdrl/env.hpp"
#include "sdrl/net.hpp"
#include "sdrl/optim.hpp"
#include "sdrl/replay.hpp"
#include "sdrl/sensor_dropout.hpp"

namespace sdrl::rl {

enum class Algo { ddpg, naf };
enum class Variant {
    uni_physical,
    uni_laser,
    uni_image,
    multi_naive,
    multi_dropout,
    multi_sd,
    multi_sd_aux
};

const char* algo_name(Algo a);
Algo algo_from_name(const std::string& name);
const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

/// Env sensors feeding each variant's networks.
std::vector<int> variant_sensors(Variant v);

/// Feature extractor stack for one sensor: identity for the physical block,
/// 1D convolutions for laser, 2D convolutions for the image, with relu after
/// each convolution. Conv stages that no longer fit the (desk-scale) spatial
/// size are skipped.
std::vector<nn::LayerSpec> make_extractor_specs(int sensor, const EnvConfig& cfg);

/// Learner hyperparameters, resolved per variant.
struct TrainSettings {
    Algo algo = Algo::ddpg;
    Variant variant = Variant::multi_sd;
    double gamma = 0.99;
    double tau = 0.001;
    int batch_size = 16;
    double actor_lr = 1e-4;   // DDPG actor / NAF mu head
    double critic_lr = 1e-3;  // DDPG critic / NAF V,L heads
    double lambda = 0.0;      // auxiliary consistency loss weight
    int episodes = 150;
    int steps_per_episode = 400;
    std::size_t buffer_capacity = 100000;
    int warmup = 1000;
    double ou_theta = 0.15;
    double ou_sigma0 = 0.2;
    double ou_sigma1 = 0.05;  // linearly annealed over the planned steps
    double ou_dt = 1.0;
    int hidden1 = 64;
    int hidden2 = 64;
    double dropout_keep = 1.0;     // multi_dropout uses 0.8
    std::vector<double> sd_probs;  // empty -> variant default
    std::uint64_t seed = 0;

    void validate() const;
};

struct UpdateStats {
    double bellman = 0.0;
    double aux = 0.0;
    int cstar = -1;  // config index chosen by the aux loss, -1 when off
};

/// Multimodal network body: per-sensor feature extractors, a block mask
/// between extraction and fusion, then a fully-connected trunk. The mask
/// slot is where Sensor Dropout (and the element-wise Dropout baseline)
/// plugs in; an empty mask means identity.
class Torso {
public:
    struct Tape {
        std::vector<nn::Net::Tape> ext;
        std::vector<double> features;  // pre-mask concatenation
        nn::Net::Tape trunk;
    };

    Torso() = default;
    Torso(const std::vector<int>& sensors, const EnvConfig& env, int extra_inputs,
          int hidden1, int hidden2, int out_dim, nn::Activation out_act, bool small_final_init,
          RandomStream& rng);

    int obs_dim() const { return obs_dim_; }
    int out_dim() const { return trunk_.output_size(); }
    int feature_total() const { return feature_total_; }
    const std::vector<int>& feature_dims() const { return feature_dims_; }

    std::vector<double> forward(std::span<const double> obs, std::span<const double> mask,
                                std::span<const double> extra, Tape* tape = nullptr) const;

    /// Feature pass only; reused across mask configurations.
    std::vector<double> extract(std::span<const double> obs,
                                std::vector<nn::Net::Tape>* tapes = nullptr) const;
    std::vector<double> trunk_forward(std::span<const double> features,
                                      std::span<const double> mask,
                                      std::span<const double> extra,
                                      nn::Net::Tape* tape = nullptr) const;

    /// Gradient through the trunk alone; returns the gradient w.r.t. the
    /// pre-mask features (mask applied) and fills extra_grad if given.
    std::vector<double> trunk_backward(const nn::Net::Tape& trunk_tape,
                                       std::span<const double> upstream,
                                       std::span<const double> mask,
                                       std::span<double> extra_grad, bool accum_params);
    std::vector<double> extractors_backward(const std::vector<nn::Net::Tape>& ext_tapes,
                                            std::span<const double> feature_grad,
                                            bool accum_params);
    std::vector<double> backward(const Tape& tape, std::span<const double> upstream,
                                 std::span<const double> mask, std::span<double> extra_grad,
                                 bool accum_params);

    /// Activations entering the trunk's final dense layer.
    std::vector<double> last_hidden(const Tape& tape) const;

    std::size_t param_count() const;
    void gather_params(std::vector<double>& out) const;
    void scatter_params(std::span<const double> in);
    void gather_grads(std::vector<double>& out) const;
    void zero_grads();

    const std::vector<nn::Net>& extractors() const { return extractors_; }
    const nn::Net& trunk() const { return trunk_; }
    std::vector<nn::Net>& extractor_nets() { return extractors_; }
    nn::Net& trunk_net() { return trunk_; }

private:
    std::vector<int> sensors_;
    std::vector<int> raw_dims_;
    std::vector<int> feature_dims_;
    std::vector<nn::Net> extractors_;
    nn::Net trunk_;
    int obs_dim_ = 0;
    int feature_total_ = 0;
    int extra_inputs_ = 0;
    std::size_t last_hidden_layer_ = 0;
};

/// Common interface of the two learners, shared by the training loop, the
/// evaluation harness, and the analysis suite.
class Agent {
public:
    virtual ~Agent() = default;

    Algo algo() const { return algo_; }
    Variant variant() const { return variant_; }
    const std::vector<int>& sensors() const { return sensors_; }
    const std::vector<int>& raw_dims() const { return raw_dims_; }
    int obs_dim() const { return obs_dim_; }
    const sd::DropDistribution& drop_distribution() const { return dist_; }
    void set_drop_distribution(sd::DropDistribution dist);
    const sd::DropConfig& all_on_config() const { return dist_.config(dist_.num_configs()); }

    /// Deterministic policy action under a dropping configuration.
    virtual std::array<double, 2> act_greedy(std::span<const double> obs,
                                             const sd::DropConfig& config) const = 0;

    /// One learning step on a minibatch; applies optimizer and target soft
    /// updates. `config` is the batch's sampled dropping configuration.
    virtual UpdateStats update(const ReplayBuffer& buffer,
                               const std::vector<std::size_t>& batch,
                               const TrainSettings& settings, const sd::DropConfig& config,
                               RandomStream& dropout_rng) = 0;

    /// d action_k / d obs_i for the policy head; rows are action dims.
    virtual std::array<std::vector<double>, 2> action_jacobian(
        std::span<const double> obs, const sd::DropConfig& config) const = 0;

    /// Last hidden activations of the policy trunk.
    virtual std::vector<double> policy_embedding(std::span<const double> obs,
                                                 const sd::DropConfig& config) const = 0;

    struct NamedArray {
        std::string name;
        std::vector<double>* data;
    };
    /// Mutable views of every parameter and optimizer array, stable names.
    virtual std::vector<NamedArray> named_arrays() = 0;
    virtual long& adam_step_count(int group) = 0;
    virtual int adam_groups() const = 0;

protected:
    Agent(Algo algo, Variant variant, const EnvConfig& env, const TrainSettings& settings);

    /// Mask multipliers over the feature state for a config, optionally
    /// composed with an element-wise Bernoulli keep mask (training-time
    /// Dropout baseline).
    std::vector<double> feature_mask(const Torso& torso, const sd::DropConfig& config) const;

    Algo algo_;
    Variant variant_;
    std::vector<int> sensors_;
    std::vector<int> raw_dims_;
    int obs_dim_ = 0;
    sd::DropDistribution dist_;
};

std::unique_ptr<Agent> make_agent(const EnvConfig& env, const TrainSettings& settings,
                                  RandomStream& init_rng);

/// Effective dropping distribution for a variant: uniform over the non-empty
/// configs for the SD variants, all-mass-on-all-on otherwise. Explicit probs
/// (from config) override.
sd::DropDistribution variant_distribution(Variant v, const std::vector<double>& explicit_probs);

/// Evaluation-time action under declared sensor availability: masks by the
/// availability-implied config, runs the policy head, clips to [-1,1]^2.
/// Throws SensorsUnavailableError when every sensor the agent uses is down.
std::array<double, 2> act(const Agent& agent, const MultiObservation& obs, const EnvConfig& env);

/// Availability-implied config over the agent's sensor set.
const sd::DropConfig& availability_config(const Agent& agent, const MultiObservation& obs);

// --- DDPG ---

class DdpgAgent final : public Agent {
public:
    DdpgAgent(const EnvConfig& env, const TrainSettings& settings, RandomStream& rng);

    std::array<double, 2> act_greedy(std::span<const double> obs,
                                     const sd::DropConfig& config) const override;
    UpdateStats update(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                       const TrainSettings& settings, const sd::DropConfig& config,
                       RandomStream& dropout_rng) override;
    std::array<std::vector<double>, 2> action_jacobian(
        std::span<const double> obs, const sd::DropConfig& config) const override;
    std::vector<double> policy_embedding(std::span<const double> obs,
                                         const sd::DropConfig& config) const override;
    std::vector<NamedArray> named_arrays() override;
    long& adam_step_count(int group) override;
    int adam_groups() const override { return 2; }

    /// Critic value for analysis and tests.
    double q_value(std::span<const double> obs, std::span<const double> action,
                   const sd::DropConfig& config) const;

    /// Gradient-accumulating passes, separated from the optimizer step so
    /// that finite-difference oracles can read analytic gradients.
    double critic_loss_pass(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                            const TrainSettings& settings, std::span<const double> mask,
                            std::span<const double> target_mask);
    /// Accumulates the ascent direction (gradient of -J) into the actor;
    /// returns J, the mean online Q over the batch.
    double actor_objective_pass(const ReplayBuffer& buffer,
                                const std::vector<std::size_t>& batch,
                                const TrainSettings& settings, std::span<const double> mask,
                                std::span<const double> eval_mask);
    double aux_pass(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                    const TrainSettings& settings, int* cstar);

    double critic_update(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                         const TrainSettings& settings, std::span<const double> mask,
                         std::span<const double> target_mask);
    /// Returns the mean online Q over the batch (the ascent objective).
    double actor_update(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                        const TrainSettings& settings, std::span<const double> mask,
                        std::span<const double> eval_mask, double* aux_loss, int* cstar);
    void soft_update_targets(double tau);

    Torso& actor() { return actor_; }
    Torso& critic() { return critic_; }
    const Torso& actor_target() const { return actor_target_; }
    const Torso& critic_target() const { return critic_target_; }

private:
    Torso actor_, critic_, actor_target_, critic_target_;
    nn::AdamState actor_opt_, critic_opt_;
    std::vector<double> scratch_params_, scratch_grads_;
};

// --- NAF ---

/// Value/covariance half of NAF: one shared feature extraction module
/// feeding separate V and L trunks.
struct VlModule {
    std::vector<int> feature_dims;
    std::vector<nn::Net> extractors;
    nn::Net v_trunk;
    nn::Net l_trunk;
    int obs_dim = 0;
    int feature_total = 0;

    VlModule() = default;
    VlModule(const std::vector<int>& sensors, const EnvConfig& env, int hidden1, int hidden2,
             RandomStream& rng);

    struct Tape {
        std::vector<nn::Net::Tape> ext;
        std::vector<double> features;
        std::vector<double> masked;
        nn::Net::Tape v, l;
    };

    /// Returns {V, l11, l21, l22} with sigmoid-bounded L entries.
    std::array<double, 4> forward(std::span<const double> obs, std::span<const double> mask,
                                  Tape* tape = nullptr) const;
    void backward(const Tape& tape, double v_grad, std::span<const double> l_grad,
                  std::span<const double> mask);

    std::size_t param_count() const;
    void gather_params(std::vector<double>& out) const;
    void scatter_params(std::span<const double> in);
    void gather_grads(std::vector<double>& out) const;
    void zero_grads();
};

class NafAgent final : public Agent {
public:
    NafAgent(const EnvConfig& env, const TrainSettings& settings, RandomStream& rng);

    std::array<double, 2> act_greedy(std::span<const double> obs,
                                     const sd::DropConfig& config) const override;
    UpdateStats update(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                       const TrainSettings& settings, const sd::DropConfig& config,
                       RandomStream& dropout_rng) override;
    std::array<std::vector<double>, 2> action_jacobian(
        std::span<const double> obs, const sd::DropConfig& config) const override;
    std::vector<double> policy_embedding(std::span<const double> obs,
                                         const sd::DropConfig& config) const override;
    std::vector<NamedArray> named_arrays() override;
    long& adam_step_count(int group) override;
    int adam_groups() const override { return 2; }

    struct QValue {
        double q, v, a;
        std::array<double, 2> mu;
        std::array<std::array<double, 2>, 2> p;  // P = L^T L
    };
    /// Q decomposition at (s, a): Q = V + A, A = -1/2 (a-mu)^T P (a-mu).
    QValue q_value(std::span<const double> obs, std::span<const double> action,
                   const sd::DropConfig& config) const;

    /// Accumulates Bellman gradients into the mu and V/L groups without
    /// stepping the optimizer; returns the loss.
    double bellman_pass(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                        const TrainSettings& settings, std::span<const double> mask_mu,
                        std::span<const double> mask_vl, std::span<const double> target_mask_vl);
    double aux_pass(const ReplayBuffer& buffer, const std::vector<std::size_t>& batch,
                    const TrainSettings& settings, int* cstar);

    void soft_update_targets(double tau);

    Torso& mu_torso() { return mu_; }
    VlModule& vl_module() { return vl_; }
    const Torso& mu_target() const { return mu_target_; }
    const VlModule& vl_target() const { return vl_target_; }

private:
    Torso mu_, mu_target_;
    VlModule vl_, vl_target_;
    nn::AdamState mu_opt_, vl_opt_;
    std::vector<double> scratch_params_, scratch_grads_;
};

/// Quadratic advantage: A = -1/2 (a-mu)^T L^T L (a-mu) for the 2x2
/// lower-triangular L = [[l11, 0], [l21, l22]].
double naf_advantage(double l11, double l21, double l22, std::array<double, 2> mu,
                     std::array<double, 2> action);

}  // namespace sdrl::rl
