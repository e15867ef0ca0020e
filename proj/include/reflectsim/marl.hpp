#pragma once

// MAPPO under centralised training / decentralised execution: one actor per
// agent acting on its local observation, one critic over the global state.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "reflectsim/baselines.hpp"
#include "reflectsim/environment.hpp"
#include "reflectsim/neural.hpp"
#include "reflectsim/task.hpp"

namespace reflectsim {

struct PPOHyper {
    double lr = 2.0e-4;
    double gamma = 0.985;
    double gae_lambda = 0.9;
    double clip_eps = 0.2;
    double value_coef = 0.5;
    double entropy_coef = 1.0e-4;
    int rollout_size = 1000;
    int minibatch = 200;
    int epochs = 10;
    int episodes = 3000;
    std::vector<int> hidden{256, 256};

    void validate() const {
        if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidConfiguration("ppo: gamma must lie in (0,1)");
        if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw InvalidConfiguration("ppo: gae_lambda must lie in (0,1]");
        if (!(clip_eps > 0.0)) throw InvalidConfiguration("ppo: clip_eps must be positive");
        if (!(lr > 0.0)) throw InvalidConfiguration("ppo: lr must be positive");
        if (rollout_size < 1 || minibatch < 1 || minibatch > rollout_size)
            throw InvalidConfiguration("ppo: need 1 <= minibatch <= rollout_size");
        if (epochs < 1) throw InvalidConfiguration("ppo: epochs must be >= 1");
        if (episodes < 0) throw InvalidConfiguration("ppo: episodes must be >= 0");
        if (hidden.empty()) throw InvalidConfiguration("ppo: need at least one hidden layer");
    }
};

// ---- rollout storage ------------------------------------------------------

struct AgentRollout {
    RowMatrix observations;
    RowMatrix actions;  // pre-clip samples
    RowMatrix critic_inputs;
    std::vector<double> log_probs;
    std::vector<double> rewards;
    std::vector<double> values;
    std::vector<double> dones;
    std::vector<double> advantages;
    std::vector<double> returns;
    double bootstrap_value = 0.0;
};

class RolloutBuffer {
public:
    RolloutBuffer(const TaskSpec& spec, int capacity) : spec_(spec), capacity_(capacity) {
        agents_.resize(static_cast<std::size_t>(spec.agents));
        for (auto& a : agents_) {
            a.observations.resize(capacity, spec.obs_dim);
            a.actions.resize(capacity, spec.action_dim);
            a.critic_inputs.resize(capacity, spec.critic_dim);
        }
    }

    const TaskSpec& spec() const { return spec_; }
    int size() const { return size_; }
    int capacity() const { return capacity_; }
    bool advantages_ready() const { return advantages_ready_; }
    std::vector<AgentRollout>& agents() { return agents_; }
    const std::vector<AgentRollout>& agents() const { return agents_; }
    AgentRollout& agent(int i) { return agents_[static_cast<std::size_t>(i)]; }
    const AgentRollout& agent(int i) const { return agents_[static_cast<std::size_t>(i)]; }

    int push_slot() {
        if (size_ >= capacity_) throw ContractViolation("RolloutBuffer: capacity exceeded");
        return size_++;
    }

    void mark_advantages_ready() { advantages_ready_ = true; }

    /// Drops rows beyond the filled size so every array has equal length.
    void seal() {
        for (auto& a : agents_) {
            a.observations.conservativeResize(size_, Eigen::NoChange);
            a.actions.conservativeResize(size_, Eigen::NoChange);
            a.critic_inputs.conservativeResize(size_, Eigen::NoChange);
        }
        capacity_ = size_;
    }

private:
    TaskSpec spec_;
    int capacity_ = 0;
    int size_ = 0;
    bool advantages_ready_ = false;
    std::vector<AgentRollout> agents_;
};

// ---- learner state --------------------------------------------------------

struct TrainerState {
    BaselineKind algo = BaselineKind::beam_focusing_ma;
    TaskSpec spec;
    double delta_max = 2.0;
    std::uint64_t seed = 0;
    std::int64_t episodes = 0;
    std::string config_text;
    std::vector<DenseNet> actors;
    std::vector<GaussianPolicyHead> heads;
    DenseNet critic;
    std::vector<AdamState> actor_adam;
    std::vector<AdamState> head_adam;
    AdamState critic_adam;

    static TrainerState create(BaselineKind algo, const TaskSpec& spec, double delta_max, std::uint64_t seed,
                               const std::vector<int>& hidden) {
        TrainerState s;
        s.algo = algo;
        s.spec = spec;
        s.delta_max = delta_max;
        s.seed = seed;
        std::mt19937_64 rng(derive_seed(seed, 12));
        auto dims = [&](int in, int out) {
            std::vector<int> d{in};
            d.insert(d.end(), hidden.begin(), hidden.end());
            d.push_back(out);
            return d;
        };
        for (int a = 0; a < spec.agents; ++a) {
            DenseNet actor(dims(spec.obs_dim, spec.action_dim));
            actor.initialize(rng, std::sqrt(2.0), 0.01);
            s.actor_adam.emplace_back(actor.num_params());
            s.actors.push_back(std::move(actor));
            s.heads.emplace_back(spec.action_dim, std::log(0.25 * delta_max));
            s.head_adam.emplace_back(spec.action_dim);
        }
        s.critic = DenseNet(dims(spec.critic_dim, 1));
        s.critic.initialize(rng, std::sqrt(2.0), 1.0);
        s.critic_adam = AdamState(s.critic.num_params());
        return s;
    }

    /// Deterministic action: the policy mean clipped to the displacement bound.
    std::vector<double> act_deterministic(int agent, std::span<const double> observation) const {
        auto mean = actors[static_cast<std::size_t>(agent)].forward(observation);
        for (auto& m : mean) m = std::clamp(m, -delta_max, delta_max);
        return mean;
    }
};

// ---- advantage estimation -------------------------------------------------

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

/// Generalised advantage estimation with done-flag masking.
inline GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const double> dones,
                     double bootstrap_value, double gamma, double lambda) {
    const std::size_t n = rewards.size();
    if (values.size() != n || dones.size() != n) throw InvalidArgument("gae: length mismatch");
    GaeResult out;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    double next_adv = 0.0;
    double next_value = bootstrap_value;
    for (std::size_t t = n; t-- > 0;) {
        const double live = 1.0 - dones[t];
        const double delta = rewards[t] + gamma * next_value * live - values[t];
        out.advantages[t] = delta + gamma * lambda * live * next_adv;
        out.returns[t] = out.advantages[t] + values[t];
        next_adv = out.advantages[t];
        next_value = values[t];
    }
    return out;
}

inline void compute_advantages(RolloutBuffer& buffer, const PPOHyper& h) {
    for (auto& a : buffer.agents()) {
        auto r = gae(a.rewards, a.values, a.dones, a.bootstrap_value, h.gamma, h.gae_lambda);
        a.advantages = std::move(r.advantages);
        a.returns = std::move(r.returns);
    }
    buffer.mark_advantages_ready();
}

/// Zero mean, unit (population) standard deviation.
inline void normalize_advantages(std::vector<double>& adv) {
    if (adv.empty()) return;
    const double n = static_cast<double>(adv.size());
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / n);
    for (double& a : adv) a = sd > 0.0 ? (a - mean) / sd : a - mean;
}

// ---- rollout collection ---------------------------------------------------

struct EpisodeRecord {
    std::int64_t episode = 0;
    std::vector<double> cumulative_reward;  // one per agent
};

/// Steps a task with stochastic policies, carrying the current episode
/// across successive rollouts.
class RolloutCollector {
public:
    RolloutCollector(ControlTask& task, std::uint64_t seed)
        : task_(&task), seed_(seed), rng_(derive_seed(seed, 10)) {}

    std::int64_t episodes_completed() const { return completed_; }
    int steps_into_episode() const { return steps_in_episode_; }
    bool episode_open() const { return open_; }

    /// Episodes finished since the last call.
    std::vector<EpisodeRecord> take_finished() { return std::exchange(finished_, {}); }

    RolloutBuffer collect(const TrainerState& trainer, int horizon) {
        const TaskSpec spec = task_->spec();
        if (!(spec == trainer.spec)) throw IncompatibleCheckpoint("collect: trainer does not match task dimensions");
        RolloutBuffer buf(spec, horizon);
        const auto A = static_cast<std::size_t>(spec.agents);
        std::vector<std::vector<double>> actions(A);
        for (int t = 0; t < horizon; ++t) {
            if (!open_) start_episode();
            const int row = buf.push_slot();
            for (std::size_t a = 0; a < A; ++a) {
                auto& ag = buf.agent(static_cast<int>(a));
                const auto& obs = frame_.observations[a];
                const auto mean = trainer.actors[a].forward(obs);
                auto sample = policy_sample(trainer.heads[a], mean, rng_);
                ag.observations.row(row) = Eigen::Map<const Eigen::RowVectorXd>(obs.data(), spec.obs_dim);
                ag.actions.row(row) = Eigen::Map<const Eigen::RowVectorXd>(sample.action.data(), spec.action_dim);
                ag.critic_inputs.row(row) =
                    Eigen::Map<const Eigen::RowVectorXd>(frame_.critic_inputs[a].data(), spec.critic_dim);
                ag.log_probs.push_back(sample.log_prob);
                ag.values.push_back(trainer.critic.forward(frame_.critic_inputs[a])[0]);
                actions[a] = std::move(sample.action);
            }
            TaskStep s = task_->step(actions);
            ++steps_in_episode_;
            for (std::size_t a = 0; a < A; ++a) {
                auto& ag = buf.agent(static_cast<int>(a));
                ag.rewards.push_back(s.rewards[a]);
                ag.dones.push_back(s.done ? 1.0 : 0.0);
                running_[a] += s.rewards[a];
            }
            frame_ = std::move(s.next);
            if (s.done) {
                finished_.push_back({completed_, running_});
                ++completed_;
                open_ = false;
            }
        }
        for (std::size_t a = 0; a < A; ++a) {
            auto& ag = buf.agent(static_cast<int>(a));
            ag.bootstrap_value = open_ ? trainer.critic.forward(frame_.critic_inputs[a])[0] : 0.0;
        }
        return buf;
    }

private:
    void start_episode() {
        frame_ = task_->reset(derive_seed(seed_, 1000 + static_cast<std::uint64_t>(completed_)));
        running_.assign(static_cast<std::size_t>(task_->spec().agents), 0.0);
        steps_in_episode_ = 0;
        open_ = true;
    }

    ControlTask* task_;
    std::uint64_t seed_;
    std::mt19937_64 rng_;
    TaskFrame frame_;
    std::vector<double> running_;
    std::int64_t completed_ = 0;
    int steps_in_episode_ = 0;
    bool open_ = false;
    std::vector<EpisodeRecord> finished_;
};

// ---- losses ---------------------------------------------------------------

namespace detail {

inline RowMatrix gather_rows(const RowMatrix& m, std::span<const int> idx) {
    RowMatrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
}

}  // namespace detail

struct SurrogateResult {
    double loss = 0.0;
    double mean_ratio = 1.0;
    double approx_kl = 0.0;
    Eigen::VectorXd param_grad;
    Eigen::VectorXd log_std_grad;
};

/// Clipped surrogate minus entropy bonus on the given transitions, with
/// gradients. Uses `data.advantages` as stored (normalise beforehand).
inline SurrogateResult actor_surrogate(const DenseNet& actor, const GaussianPolicyHead& head, const AgentRollout& data,
                                       std::span<const int> idx, const PPOHyper& h) {
    const auto B = static_cast<Eigen::Index>(idx.size());
    const int D = head.dim();
    DenseNet::Cache cache;
    const RowMatrix means = actor.forward(detail::gather_rows(data.observations, idx), &cache);
    const Eigen::ArrayXd sigma = head.log_std.array().exp();

    SurrogateResult r;
    RowMatrix dmean(B, D);
    r.log_std_grad = Eigen::VectorXd::Zero(D);
    double obj = 0.0;
    double ratio_sum = 0.0;
    double kl = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        const int t = idx[static_cast<std::size_t>(i)];
        double lp = 0.0;
        for (int j = 0; j < D; ++j) {
            const double z = (data.actions(t, j) - means(i, j)) / sigma[j];
            lp += -0.5 * z * z - head.log_std[j] - 0.5 * kLogTwoPi;
        }
        const double ratio = std::exp(lp - data.log_probs[static_cast<std::size_t>(t)]);
        const double adv = data.advantages[static_cast<std::size_t>(t)];
        const double clipped = std::clamp(ratio, 1.0 - h.clip_eps, 1.0 + h.clip_eps);
        obj += std::min(ratio * adv, clipped * adv);
        ratio_sum += ratio;
        kl += data.log_probs[static_cast<std::size_t>(t)] - lp;

        const bool active = adv >= 0.0 ? ratio <= 1.0 + h.clip_eps : ratio >= 1.0 - h.clip_eps;
        const double g = active ? -adv * ratio / static_cast<double>(B) : 0.0;
        for (int j = 0; j < D; ++j) {
            const double diff = data.actions(t, j) - means(i, j);
            dmean(i, j) = g * diff / (sigma[j] * sigma[j]);
            r.log_std_grad[j] += g * (diff * diff / (sigma[j] * sigma[j]) - 1.0);
        }
    }
    r.loss = -obj / static_cast<double>(B) - h.entropy_coef * gaussian_entropy(head);
    r.log_std_grad.array() -= h.entropy_coef;
    r.mean_ratio = ratio_sum / static_cast<double>(B);
    r.approx_kl = kl / static_cast<double>(B);
    r.param_grad = actor.backward(cache, dmean).params;
    return r;
}

struct CriticLoss {
    double loss = 0.0;
    Eigen::VectorXd grad;
};

/// value_coef * mean squared error of V against return targets.
inline CriticLoss critic_loss(const DenseNet& critic, const RowMatrix& inputs, std::span<const double> targets,
                              double value_coef) {
    DenseNet::Cache cache;
    const RowMatrix v = critic.forward(inputs, &cache);
    const auto n = static_cast<double>(targets.size());
    RowMatrix dv(v.rows(), 1);
    CriticLoss out;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const double diff = v(i, 0) - targets[static_cast<std::size_t>(i)];
        out.loss += diff * diff;
        dv(i, 0) = 2.0 * value_coef * diff / n;
    }
    out.loss = value_coef * out.loss / n;
    out.grad = critic.backward(cache, dv).params;
    return out;
}

// ---- update ---------------------------------------------------------------

struct UpdateStats {
    std::vector<double> actor_loss;  // per agent, mean over the final epoch
    double critic_loss = 0.0;        // mean over the final epoch
    double approx_kl = 0.0;          // mean over the final epoch
    std::vector<double> epoch_critic_loss;
    double min_batch_ratio = 1.0;
    double max_batch_ratio = 1.0;
};

inline UpdateStats ppo_update(TrainerState& trainer, RolloutBuffer& buffer, const PPOHyper& h, std::mt19937_64& rng) {
    if (!buffer.advantages_ready()) throw ContractViolation("ppo_update: advantages have not been computed");
    if (!(buffer.spec() == trainer.spec)) throw ContractViolation("ppo_update: buffer does not match trainer");
    const int T = buffer.size();
    const int A = trainer.spec.agents;
    for (auto& a : buffer.agents()) normalize_advantages(a.advantages);

    AdamConfig adam;
    adam.lr = h.lr;
    UpdateStats stats;
    stats.actor_loss.assign(static_cast<std::size_t>(A), 0.0);
    stats.min_batch_ratio = std::numeric_limits<double>::infinity();
    stats.max_batch_ratio = -std::numeric_limits<double>::infinity();
    std::vector<int> order(static_cast<std::size_t>(T));
    std::iota(order.begin(), order.end(), 0);
    const int mb = std::min(h.minibatch, T);

    for (int epoch = 0; epoch < h.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const bool last = epoch + 1 == h.epochs;
        double critic_sum = 0.0;
        double kl_sum = 0.0;
        int batches = 0;
        if (last) std::fill(stats.actor_loss.begin(), stats.actor_loss.end(), 0.0);
        for (int start = 0; start < T; start += mb) {
            const std::span<const int> idx(order.data() + start, static_cast<std::size_t>(std::min(mb, T - start)));
            for (int a = 0; a < A; ++a) {
                const auto ai = static_cast<std::size_t>(a);
                auto sr = actor_surrogate(trainer.actors[ai], trainer.heads[ai], buffer.agent(a), idx, h);
                stats.min_batch_ratio = std::min(stats.min_batch_ratio, sr.mean_ratio);
                stats.max_batch_ratio = std::max(stats.max_batch_ratio, sr.mean_ratio);
                if (last) stats.actor_loss[ai] += sr.loss;
                kl_sum += sr.approx_kl / A;
                adam_step(trainer.actors[ai], sr.param_grad, trainer.actor_adam[ai], adam);
                adam_step(trainer.heads[ai].log_std, sr.log_std_grad, trainer.head_adam[ai], adam);
                trainer.heads[ai].clamp();
            }
            RowMatrix inputs(static_cast<Eigen::Index>(idx.size()) * A, trainer.spec.critic_dim);
            std::vector<double> targets;
            targets.reserve(idx.size() * static_cast<std::size_t>(A));
            Eigen::Index row = 0;
            for (int a = 0; a < A; ++a)
                for (int t : idx) {
                    inputs.row(row++) = buffer.agent(a).critic_inputs.row(t);
                    targets.push_back(buffer.agent(a).returns[static_cast<std::size_t>(t)]);
                }
            auto cl = critic_loss(trainer.critic, inputs, targets, h.value_coef);
            adam_step(trainer.critic, cl.grad, trainer.critic_adam, adam);
            critic_sum += cl.loss;
            ++batches;
        }
        stats.epoch_critic_loss.push_back(critic_sum / batches);
        if (last) {
            for (auto& l : stats.actor_loss) l /= batches;
            stats.critic_loss = critic_sum / batches;
            stats.approx_kl = kl_sum / batches;
        }
    }
    return stats;
}

// ---- evaluation -----------------------------------------------------------

struct EvalOptions {
    int steps = 300;
    double noise_sigma = 0.0;
    std::uint64_t seed = 1;
};

struct EvalLog {
    std::vector<std::vector<double>> user_rssi;  // [step][user]
    std::vector<double> mean_rssi;               // [step]
    std::vector<std::vector<Vec3>> users;        // true positions used at each step

    double mean() const {
        return mean_rssi.empty() ? 0.0
                                 : std::accumulate(mean_rssi.begin(), mean_rssi.end(), 0.0) /
                                       static_cast<double>(mean_rssi.size());
    }
    double stddev() const {
        if (mean_rssi.empty()) return 0.0;
        const double m = mean();
        double v = 0.0;
        for (double x : mean_rssi) v += (x - m) * (x - m);
        return std::sqrt(v / static_cast<double>(mean_rssi.size()));
    }
};

namespace detail {

inline double average(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline EnvConfig eval_config(EnvConfig cfg, const EvalOptions& opts) {
    if (opts.steps < 1) throw InvalidArgument("evaluate: steps must be >= 1");
    cfg.episode_length = opts.steps;
    cfg.noise_sigma = opts.noise_sigma;
    return cfg;
}

inline void record(EvalLog& log, std::vector<Vec3> users, std::vector<double> rssi) {
    log.mean_rssi.push_back(average(rssi));
    log.user_rssi.push_back(std::move(rssi));
    log.users.push_back(std::move(users));
}

}  // namespace detail

/// Deterministic decentralised rollout of a trained controller. Users move on
/// the seed's trajectory; actors observe positions with noise_sigma error.
inline EvalLog evaluate(const TrainerState& ckpt, const World& world, const EnvConfig& cfg, const EvalOptions& opts) {
    if (!is_learned(ckpt.algo)) throw InvalidArgument("evaluate: checkpoint algorithm is not a learned controller");
    auto task = make_task(ckpt.algo, world, detail::eval_config(cfg, opts));
    if (!(task->spec() == ckpt.spec))
        throw IncompatibleCheckpoint("evaluate: checkpoint dimensions do not match the configuration");
    TaskFrame frame = task->reset(opts.seed);
    EvalLog log;
    std::vector<std::vector<double>> actions(static_cast<std::size_t>(ckpt.spec.agents));
    for (int t = 0; t < opts.steps; ++t) {
        for (int a = 0; a < ckpt.spec.agents; ++a)
            actions[static_cast<std::size_t>(a)] = ckpt.act_deterministic(a, frame.observations[static_cast<std::size_t>(a)]);
        auto users = task->environment().state().user_positions;
        TaskStep s = task->step(actions);
        detail::record(log, std::move(users), std::move(s.rssi_dbm));
        frame = std::move(s.next);
    }
    return log;
}

/// Flat or absent reflector along the same user trajectory as `evaluate`.
inline EvalLog evaluate_static(BaselineKind kind, const World& world, const EnvConfig& cfg, const EvalOptions& opts) {
    Environment env(world, detail::eval_config(cfg, opts));
    env.reset(opts.seed);
    const auto lit = illuminate(static_tiles(kind, world.layout), world.scene, world.radiation);
    const std::vector<ActionVec> zero(static_cast<std::size_t>(cfg.num_agents));
    EvalLog log;
    for (int t = 0; t < opts.steps; ++t) {
        auto users = env.state().user_positions;
        std::vector<double> rssi;
        for (const auto& u : users) rssi.push_back(power_to_rssi(received_watts(world.scene, lit, u, world.radiation), world.radiation));
        detail::record(log, std::move(users), std::move(rssi));
        env.step(zero);
    }
    return log;
}

/// Each segment focused on its assigned user's true position: the reference
/// a perfect focal-point controller would reach.
inline EvalLog evaluate_analytic(const World& world, const EnvConfig& cfg, const EvalOptions& opts) {
    Environment env(world, detail::eval_config(cfg, opts));
    env.reset(opts.seed);
    const std::vector<ActionVec> zero(static_cast<std::size_t>(cfg.num_agents));
    EvalLog log;
    for (int t = 0; t < opts.steps; ++t) {
        auto users = env.state().user_positions;
        std::vector<Vec3> focal;
        for (int k : cfg.assignment) focal.push_back(users[static_cast<std::size_t>(k)]);
        auto rssi = env.user_rssi(env.tile_normals(focal), users);
        detail::record(log, std::move(users), std::move(rssi));
        env.step(zero);
    }
    return log;
}

// ---- training -------------------------------------------------------------

struct EpisodeLog {
    std::int64_t episode = 0;
    std::vector<double> cumulative_reward;  // per agent, shaped units
    std::vector<double> actor_loss;         // latest update; NaN before the first
    double critic_loss = std::numeric_limits<double>::quiet_NaN();
};

struct EvalSnapshot {
    std::int64_t episode = 0;
    double mean_rssi_dbm = 0.0;
};

struct TrainOptions {
    BaselineKind algo = BaselineKind::beam_focusing_ma;
    PPOHyper hyper;
    std::uint64_t seed = 1;
    int eval_every = 50;  // 0 disables snapshots
    int eval_steps = 300;
    std::string config_text;
    std::function<void(const EpisodeLog&)> on_episode;
};

struct TrainResult {
    TrainerState state;
    std::vector<EpisodeLog> episodes;
    std::vector<EvalSnapshot> snapshots;
    std::vector<UpdateStats> updates;
};

inline TrainResult train(const World& world, const EnvConfig& cfg, const TrainOptions& opts) {
    opts.hyper.validate();
    auto task = make_task(opts.algo, world, cfg);
    TrainResult result;
    result.state = TrainerState::create(opts.algo, task->spec(), cfg.delta_max, opts.seed, opts.hyper.hidden);
    result.state.config_text = opts.config_text;

    RolloutCollector collector(*task, derive_seed(opts.seed, 20));
    std::mt19937_64 update_rng(derive_seed(opts.seed, 11));
    const std::int64_t budget = opts.hyper.episodes;
    const auto A = static_cast<std::size_t>(task->spec().agents);
    std::vector<double> last_actor_loss(A, std::numeric_limits<double>::quiet_NaN());
    double last_critic_loss = std::numeric_limits<double>::quiet_NaN();
    std::int64_t next_snapshot = opts.eval_every;

    while (collector.episodes_completed() < budget) {
        const std::int64_t remaining =
            (budget - collector.episodes_completed()) * cfg.episode_length - (collector.episode_open() ? collector.steps_into_episode() : 0);
        const int horizon = static_cast<int>(std::min<std::int64_t>(opts.hyper.rollout_size, remaining));
        RolloutBuffer buffer = collector.collect(result.state, horizon);
        compute_advantages(buffer, opts.hyper);
        auto stats = ppo_update(result.state, buffer, opts.hyper, update_rng);
        last_actor_loss = stats.actor_loss;
        last_critic_loss = stats.critic_loss;
        result.updates.push_back(std::move(stats));

        for (auto& rec : collector.take_finished()) {
            EpisodeLog e{rec.episode, std::move(rec.cumulative_reward), last_actor_loss, last_critic_loss};
            if (opts.on_episode) opts.on_episode(e);
            result.episodes.push_back(std::move(e));
        }
        result.state.episodes = collector.episodes_completed();
        if (opts.eval_every > 0 && result.state.episodes >= next_snapshot) {
            EvalOptions eo;
            eo.steps = opts.eval_steps;
            eo.seed = derive_seed(opts.seed, 99);
            result.snapshots.push_back({result.state.episodes, evaluate(result.state, world, cfg, eo).mean()});
            while (next_snapshot <= result.state.episodes) next_snapshot += opts.eval_every;
        }
    }
    return result;
}

// ---- checkpoints ----------------------------------------------------------

inline constexpr const char* kCheckpointMagic = "reflectsim-ckpt v1";

inline void save_checkpoint(std::ostream& os, const TrainerState& s) {
    os << kCheckpointMagic << '\n';
    os << "algo " << to_string(s.algo) << '\n';
    os << "seed " << s.seed << '\n';
    os << "episodes " << s.episodes << '\n';
    os << "spec " << s.spec.agents << ' ' << s.spec.obs_dim << ' ' << s.spec.action_dim << ' ' << s.spec.critic_dim << '\n';
    os << "delta_max ";
    detail::write_doubles(os, std::span<const double>(&s.delta_max, 1));
    os << "config " << s.config_text.size() << '\n' << s.config_text << '\n';
    for (std::size_t a = 0; a < s.actors.size(); ++a) {
        os << "actor " << a << '\n';
        save_network(os, s.actors[a]);
        os << "log_std " << s.heads[a].dim() << '\n';
        detail::write_doubles(os, {s.heads[a].log_std.data(), static_cast<std::size_t>(s.heads[a].dim())});
        save_adam(os, "adam", s.actor_adam[a]);
        save_adam(os, "head_adam", s.head_adam[a]);
    }
    os << "critic\n";
    save_network(os, s.critic);
    save_adam(os, "adam", s.critic_adam);
    os << "end\n";
}

inline TrainerState load_checkpoint(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kCheckpointMagic)
        throw IncompatibleCheckpoint("checkpoint: missing '" + std::string(kCheckpointMagic) + "' header");
    TrainerState s;
    std::string tok;
    detail::expect_token(is, "algo");
    is >> tok;
    s.algo = baseline_from_string(tok);
    detail::expect_token(is, "seed");
    is >> s.seed;
    detail::expect_token(is, "episodes");
    is >> s.episodes;
    detail::expect_token(is, "spec");
    is >> s.spec.agents >> s.spec.obs_dim >> s.spec.action_dim >> s.spec.critic_dim;
    detail::expect_token(is, "delta_max");
    is >> tok;
    s.delta_max = detail::parse_double(tok);
    detail::expect_token(is, "config");
    std::size_t n = 0;
    is >> n;
    is.get();  // newline
    s.config_text.resize(n);
    is.read(s.config_text.data(), static_cast<std::streamsize>(n));
    if (!is || s.spec.agents < 1) throw InvalidConfiguration("checkpoint: truncated header");
    for (int a = 0; a < s.spec.agents; ++a) {
        detail::expect_token(is, "actor");
        int idx = -1;
        is >> idx;
        if (idx != a) throw InvalidConfiguration("checkpoint: actors out of order");
        s.actors.push_back(load_network(is));
        detail::expect_token(is, "log_std");
        int d = 0;
        is >> d;
        GaussianPolicyHead head;
        const auto ls = detail::read_doubles(is, static_cast<std::size_t>(d));
        head.log_std = Eigen::Map<const Eigen::VectorXd>(ls.data(), d);
        s.heads.push_back(std::move(head));
        s.actor_adam.push_back(load_adam(is, "adam", s.actors.back().num_params()));
        s.head_adam.push_back(load_adam(is, "head_adam", d));
        if (s.actors.back().input_dim() != s.spec.obs_dim || s.actors.back().output_dim() != s.spec.action_dim)
            throw IncompatibleCheckpoint("checkpoint: actor dimensions disagree with spec line");
    }
    detail::expect_token(is, "critic");
    s.critic = load_network(is);
    s.critic_adam = load_adam(is, "adam", s.critic.num_params());
    detail::expect_token(is, "end");
    if (s.critic.input_dim() != s.spec.critic_dim) throw IncompatibleCheckpoint("checkpoint: critic dimension mismatch");
    return s;
}

}  // namespace reflectsim
