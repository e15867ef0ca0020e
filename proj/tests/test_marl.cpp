#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "reflectsim/harness/config.hpp"
#include "reflectsim/marl.hpp"

using namespace reflectsim;

namespace {

struct Rig {
    harness::ExperimentConfig cfg = harness::default_config();
    World world = harness::build_world(cfg);
};

const Rig& rig() {
    static const Rig r;
    return r;
}

EnvConfig short_env(int episode_length = 20) {
    EnvConfig e = rig().cfg.env;
    e.episode_length = episode_length;
    return e;
}

std::string checkpoint_text(const TrainerState& s) {
    std::ostringstream os;
    save_checkpoint(os, s);
    return os.str();
}

AgentRollout single_sample(const DenseNet& actor, const GaussianPolicyHead& head, std::vector<double> obs,
                           std::vector<double> action, double advantage, double log_prob_offset) {
    AgentRollout d;
    d.observations = Eigen::Map<const RowMatrix>(obs.data(), 1, static_cast<Eigen::Index>(obs.size()));
    d.actions = Eigen::Map<const RowMatrix>(action.data(), 1, static_cast<Eigen::Index>(action.size()));
    d.log_probs = {log_prob_of(head, actor.forward(obs), action) + log_prob_offset};
    d.advantages = {advantage};
    return d;
}

}  // namespace

TEST(Hyper, TableDefaults) {
    PPOHyper h;
    EXPECT_EQ(h.lr, 2.0e-4);
    EXPECT_EQ(h.gamma, 0.985);
    EXPECT_EQ(h.gae_lambda, 0.9);
    EXPECT_EQ(h.clip_eps, 0.2);
    EXPECT_EQ(h.value_coef, 0.5);
    EXPECT_EQ(h.entropy_coef, 1.0e-4);
    EXPECT_EQ(h.rollout_size, 1000);
    EXPECT_EQ(h.minibatch, 200);
    EXPECT_EQ(h.epochs, 10);
    EXPECT_EQ(h.episodes, 3000);
    EXPECT_NO_THROW(h.validate());
    h.minibatch = 2000;
    EXPECT_THROW(h.validate(), InvalidConfiguration);
}

TEST(Gae, SingleStep) {
    const std::vector<double> r{1}, v{0}, d{1};
    const auto g = gae(r, v, d, 0.0, 0.985, 0.9);
    EXPECT_EQ(g.advantages[0], 1.0);
    EXPECT_EQ(g.returns[0], 1.0);
}

TEST(Gae, TwoStepHandRecursion) {
    const std::vector<double> r{1, 1}, v{0, 0}, d{0, 1};
    const auto g = gae(r, v, d, 0.0, 0.5, 0.5);
    EXPECT_EQ(g.advantages[0], 1.25);
    EXPECT_EQ(g.advantages[1], 1.0);
}

TEST(Gae, LambdaZeroIsTdResidual) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2, 2);
    std::bernoulli_distribution done(0.1);
    const int n = 200;
    std::vector<double> r(n), v(n), d(n);
    for (int i = 0; i < n; ++i) {
        r[i] = u(rng);
        v[i] = u(rng);
        d[i] = done(rng) ? 1.0 : 0.0;
    }
    const double boot = u(rng), gamma = 0.985;
    const auto g = gae(r, v, d, boot, gamma, 0.0);
    for (int i = 0; i < n; ++i) {
        const double next = i + 1 < n ? v[i + 1] : boot;
        EXPECT_EQ(g.advantages[i], r[i] + gamma * next * (1.0 - d[i]) - v[i]);
        EXPECT_EQ(g.returns[i], g.advantages[i] + v[i]);
    }
}

TEST(Gae, UndiscountedZeroValueGivesSuffixSums) {
    const std::vector<double> r{0.5, -1.0, 2.0, 0.25}, v(4, 0.0), d{0, 0, 0, 1};
    const auto g = gae(r, v, d, 0.0, 1.0, 1.0);
    EXPECT_EQ(g.advantages, (std::vector<double>{1.75, 1.25, 2.25, 0.25}));
}

TEST(Gae, DoneMasksBootstrapAcrossEpisodes) {
    const std::vector<double> r{1, 1, 1}, v{0, 0, 0}, d{0, 1, 0};
    const auto g = gae(r, v, d, 10.0, 0.5, 1.0);
    EXPECT_EQ(g.advantages[2], 6.0);
    EXPECT_EQ(g.advantages[1], 1.0);
    EXPECT_EQ(g.advantages[0], 1.5);
}

TEST(Gae, LengthMismatchThrows) {
    const std::vector<double> r{1, 1}, v{0}, d{0, 0};
    EXPECT_THROW(gae(r, v, d, 0.0, 0.9, 0.9), InvalidArgument);
}

TEST(Advantages, NormalisationMoments) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(3.0, 7.0);
    std::vector<double> a(1000);
    for (auto& x : a) x = n(rng);
    normalize_advantages(a);
    double mean = 0, var = 0;
    for (double x : a) mean += x;
    mean /= 1000;
    for (double x : a) var += (x - mean) * (x - mean);
    EXPECT_LT(std::abs(mean), 1e-10);
    EXPECT_NEAR(std::sqrt(var / 1000), 1.0, 1e-6);
}

TEST(Collect, HorizonShapeAndDeterminism) {
    const auto env = short_env();
    auto run = [&] {
        auto task = make_task(BaselineKind::beam_focusing_ma, rig().world, env);
        const auto trainer = TrainerState::create(BaselineKind::beam_focusing_ma, task->spec(), env.delta_max, 5, {32, 32});
        RolloutCollector c(*task, 9);
        return std::pair{c.collect(trainer, 1000), trainer};
    };
    const auto [a, trainer] = run();
    const auto b = run().first;
    ASSERT_EQ(a.size(), 1000);
    for (int l = 0; l < 3; ++l) {
        const auto& x = a.agent(l);
        EXPECT_EQ(x.observations.rows(), 1000);
        EXPECT_EQ(x.actions.rows(), 1000);
        EXPECT_EQ(x.critic_inputs.rows(), 1000);
        EXPECT_EQ(x.rewards.size(), 1000u);
        EXPECT_EQ(x.values.size(), 1000u);
        EXPECT_EQ(x.dones.size(), 1000u);
        EXPECT_EQ(x.log_probs.size(), 1000u);
        EXPECT_EQ(x.observations, b.agent(l).observations);
        EXPECT_EQ(x.actions, b.agent(l).actions);
        EXPECT_EQ(x.rewards, b.agent(l).rewards);
        double dones = 0;
        for (double v : x.dones) dones += v;
        EXPECT_EQ(dones, 50.0);  // 1000 steps of 20-step episodes
        for (int t = 0; t < 1000; t += 37) {
            const std::vector<double> obs(x.observations.row(t).data(), x.observations.row(t).data() + 9);
            const std::vector<double> act(x.actions.row(t).data(), x.actions.row(t).data() + 3);
            EXPECT_EQ(x.log_probs[static_cast<std::size_t>(t)],
                      log_prob_of(trainer.heads[static_cast<std::size_t>(l)], trainer.actors[static_cast<std::size_t>(l)].forward(obs), act));
        }
    }
}

TEST(Collect, ActorsSeeOnlyTheirOwnObservation) {
    const auto env = short_env();
    auto task = make_task(BaselineKind::beam_focusing_ma, rig().world, env);
    const auto trainer = TrainerState::create(BaselineKind::beam_focusing_ma, task->spec(), env.delta_max, 5, {16});
    RolloutCollector c(*task, 9);
    const auto buf = c.collect(trainer, 10);
    EXPECT_EQ(buf.agent(0).observations.cols(), kObservationSize);
    EXPECT_EQ(buf.agent(0).critic_inputs.cols(), 27);
}

TEST(Collect, EpisodesSpanRollouts) {
    const auto env = short_env(30);
    auto task = make_task(BaselineKind::beam_focusing_ma, rig().world, env);
    const auto trainer = TrainerState::create(BaselineKind::beam_focusing_ma, task->spec(), env.delta_max, 5, {16});
    RolloutCollector c(*task, 9);
    const auto first = c.collect(trainer, 45);
    EXPECT_EQ(c.episodes_completed(), 1);
    EXPECT_EQ(c.steps_into_episode(), 15);
    EXPECT_NE(first.agent(0).bootstrap_value, 0.0);
    c.collect(trainer, 15);
    EXPECT_EQ(c.episodes_completed(), 2);
    EXPECT_EQ(c.take_finished().size(), 2u);
}

TEST(Surrogate, RatioOneOnFirstPass) {
    const auto env = short_env();
    auto task = make_task(BaselineKind::beam_focusing_ma, rig().world, env);
    const auto trainer = TrainerState::create(BaselineKind::beam_focusing_ma, task->spec(), env.delta_max, 5, {64, 64});
    RolloutCollector c(*task, 9);
    auto buf = c.collect(trainer, 200);
    PPOHyper h;
    compute_advantages(buf, h);
    std::vector<int> idx(200);
    std::iota(idx.begin(), idx.end(), 0);
    for (int l = 0; l < 3; ++l) {
        auto& data = buf.agent(l);
        normalize_advantages(data.advantages);
        const auto r = actor_surrogate(trainer.actors[static_cast<std::size_t>(l)], trainer.heads[static_cast<std::size_t>(l)], data, idx, h);
        EXPECT_NEAR(r.mean_ratio, 1.0, 1e-12);
        EXPECT_NEAR(r.approx_kl, 0.0, 1e-12);
        // surrogate collapses to -mean(A) = 0, leaving only the entropy term
        EXPECT_NEAR(r.loss + h.entropy_coef * gaussian_entropy(trainer.heads[static_cast<std::size_t>(l)]), 0.0, 1e-12);
    }
}

TEST(Surrogate, ClipActiveGivesZeroGradient) {
    DenseNet actor({9, 16, 3});
    std::mt19937_64 rng(1);
    actor.initialize(rng, std::sqrt(2.0), 1.0);
    GaussianPolicyHead head(3, -1.0);
    PPOHyper h;
    h.entropy_coef = 0.0;
    const std::vector<double> obs{0.1, 0.2, 0.3, -0.4, 0.5, 0.6, -0.7, 0.8, 0.0}, act{0.3, -0.2, 0.1};
    const std::vector<int> idx{0};
    // stored log-prob one nat below current → ρ = e > 1 + ε, with A > 0
    auto up = single_sample(actor, head, obs, act, 1.0, -1.0);
    auto r = actor_surrogate(actor, head, up, idx, h);
    EXPECT_EQ(r.param_grad.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(r.log_std_grad.cwiseAbs().maxCoeff(), 0.0);
    // ρ = 1/e < 1 − ε with A < 0
    auto down = single_sample(actor, head, obs, act, -1.0, 1.0);
    r = actor_surrogate(actor, head, down, idx, h);
    EXPECT_EQ(r.param_grad.cwiseAbs().maxCoeff(), 0.0);
    // inside the clip band the gradient is live
    auto live = single_sample(actor, head, obs, act, 1.0, 0.0);
    r = actor_surrogate(actor, head, live, idx, h);
    EXPECT_GT(r.param_grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Surrogate, GradientMatchesFiniteDifferences) {
    DenseNet actor({9, 16, 3});
    std::mt19937_64 rng(2);
    actor.initialize(rng, std::sqrt(2.0), 1.0);
    GaussianPolicyHead head(3, -0.5);
    PPOHyper h;
    h.entropy_coef = 0.0;
    const std::vector<double> obs{0.1, 0.2, 0.3, -0.4, 0.5, 0.6, -0.7, 0.8, 0.0}, act{0.3, -0.2, 0.1};
    auto data = single_sample(actor, head, obs, act, 0.7, 0.05);
    const std::vector<int> idx{0};
    const auto r = actor_surrogate(actor, head, data, idx, h);
    const double eps = 1e-6;
    for (int j = 0; j < 3; ++j) {
        auto hp = head, hm = head;
        hp.log_std[j] += eps;
        hm.log_std[j] -= eps;
        const double fd = (actor_surrogate(actor, hp, data, idx, h).loss - actor_surrogate(actor, hm, data, idx, h).loss) / (2 * eps);
        EXPECT_NEAR(r.log_std_grad[j], fd, 1e-6);
    }
    for (Eigen::Index i = 0; i < actor.num_params(); i += 7) {
        auto ap = actor, am = actor;
        ap.mutable_params()[i] += eps;
        am.mutable_params()[i] -= eps;
        const double fd = (actor_surrogate(ap, head, data, idx, h).loss - actor_surrogate(am, head, data, idx, h).loss) / (2 * eps);
        EXPECT_NEAR(r.param_grad[i], fd, 1e-6);
    }
}

TEST(Surrogate, OneSampleConvergesTowardRewardedAction) {
    DenseNet actor({9, 32, 3});
    std::mt19937_64 rng(3);
    actor.initialize(rng, std::sqrt(2.0), 0.01);
    GaussianPolicyHead head(3, std::log(0.5));
    AdamState adam(actor.num_params()), head_adam(3);
    AdamConfig cfg;
    cfg.lr = 1e-3;
    PPOHyper h;
    const std::vector<double> obs{0.1, 0.2, 0.3, -0.4, 0.5, 0.6, -0.7, 0.8, 0.0}, act{0.8, -0.6, 0.4};
    auto distance = [&] {
        const auto m = actor.forward(obs);
        double s = 0;
        for (int j = 0; j < 3; ++j) s += (m[static_cast<std::size_t>(j)] - act[static_cast<std::size_t>(j)]) * (m[static_cast<std::size_t>(j)] - act[static_cast<std::size_t>(j)]);
        return std::sqrt(s);
    };
    const double start = distance();
    const std::vector<int> idx{0};
    for (int round = 0; round < 50; ++round) {
        auto data = single_sample(actor, head, obs, act, 1.0, 0.0);
        for (int k = 0; k < 10; ++k) {
            const auto r = actor_surrogate(actor, head, data, idx, h);
            adam_step(actor, r.param_grad, adam, cfg);
            adam_step(head.log_std, r.log_std_grad, head_adam, cfg);
            head.clamp();
        }
    }
    EXPECT_LT(distance(), 0.1 * start);
}

TEST(Update, RejectsUnpreparedBuffer) {
    const auto env = short_env();
    auto task = make_task(BaselineKind::beam_focusing_ma, rig().world, env);
    auto trainer = TrainerState::create(BaselineKind::beam_focusing_ma, task->spec(), env.delta_max, 5, {16});
    RolloutCollector c(*task, 9);
    auto buf = c.collect(trainer, 50);
    std::mt19937_64 rng(1);
    EXPECT_THROW(ppo_update(trainer, buf, PPOHyper{}, rng), ContractViolation);
}

TEST(Update, RatioBandAndValueDescent) {
    const auto env = short_env();
    auto task = make_task(BaselineKind::beam_focusing_ma, rig().world, env);
    auto trainer = TrainerState::create(BaselineKind::beam_focusing_ma, task->spec(), env.delta_max, 5, {64, 64});
    RolloutCollector c(*task, 9);
    PPOHyper h;
    std::mt19937_64 rng(1);
    int checks = 0, descents = 0;
    for (int u = 0; u < 4; ++u) {
        auto buf = c.collect(trainer, 1000);
        compute_advantages(buf, h);
        const auto stats = ppo_update(trainer, buf, h, rng);
        EXPECT_GE(stats.min_batch_ratio, 1.0 - 2 * h.clip_eps);
        EXPECT_LE(stats.max_batch_ratio, 1.0 + 2 * h.clip_eps);
        ASSERT_EQ(stats.epoch_critic_loss.size(), 10u);
        EXPECT_EQ(stats.actor_loss.size(), 3u);
        for (std::size_t e = 1; e < stats.epoch_critic_loss.size(); ++e) {
            ++checks;
            descents += stats.epoch_critic_loss[e] <= stats.epoch_critic_loss[e - 1];
        }
    }
    EXPECT_GE(descents, 0.9 * checks);
}

TEST(Train, ZeroEpisodesReturnsInitialisation) {
    const auto env = short_env();
    TrainOptions o;
    o.hyper.episodes = 0;
    o.seed = 42;
    o.hyper.hidden = {16, 16};
    const auto r = train(rig().world, env, o);
    auto task = make_task(BaselineKind::beam_focusing_ma, rig().world, env);
    const auto init = TrainerState::create(BaselineKind::beam_focusing_ma, task->spec(), env.delta_max, 42, {16, 16});
    EXPECT_EQ(checkpoint_text(r.state), checkpoint_text(init));
    EXPECT_TRUE(r.episodes.empty());
}

TEST(Train, LogRowPerEpisodeAndExactBudget) {
    const auto env = short_env(20);
    TrainOptions o;
    o.hyper.episodes = 7;
    o.hyper.rollout_size = 50;
    o.hyper.minibatch = 25;
    o.hyper.epochs = 2;
    o.hyper.hidden = {16};
    o.eval_every = 3;
    o.eval_steps = 10;
    int callbacks = 0;
    o.on_episode = [&](const EpisodeLog&) { ++callbacks; };
    const auto r = train(rig().world, env, o);
    EXPECT_EQ(r.episodes.size(), 7u);
    EXPECT_EQ(callbacks, 7);
    EXPECT_EQ(r.state.episodes, 7);
    for (std::size_t i = 0; i < r.episodes.size(); ++i) EXPECT_EQ(r.episodes[i].episode, static_cast<std::int64_t>(i));
    EXPECT_EQ(r.snapshots.size(), 2u);
}

TEST(Train, Deterministic) {
    const auto env = short_env(20);
    TrainOptions o;
    o.hyper.episodes = 5;
    o.hyper.rollout_size = 40;
    o.hyper.minibatch = 20;
    o.hyper.epochs = 2;
    o.hyper.hidden = {16};
    o.eval_every = 0;
    EXPECT_EQ(checkpoint_text(train(rig().world, env, o).state), checkpoint_text(train(rig().world, env, o).state));
}

TEST(Checkpoint, RoundTripIsExact) {
    const auto env = short_env(20);
    TrainOptions o;
    o.hyper.episodes = 3;
    o.hyper.rollout_size = 30;
    o.hyper.minibatch = 10;
    o.hyper.epochs = 1;
    o.hyper.hidden = {8, 8};
    o.config_text = "[run]\nalgo = beam_focusing_ma\n";
    const auto s = train(rig().world, env, o).state;
    const auto text = checkpoint_text(s);
    std::istringstream is(text);
    const auto back = load_checkpoint(is);
    EXPECT_EQ(checkpoint_text(back), text);
    EXPECT_EQ(back.config_text, o.config_text);
    EXPECT_EQ(back.episodes, 3);
}

TEST(Checkpoint, BadHeaderAndMismatchRejected) {
    std::istringstream junk("not a checkpoint\n");
    EXPECT_THROW(load_checkpoint(junk), IncompatibleCheckpoint);

    const auto env = short_env(20);
    auto ma = make_task(BaselineKind::beam_focusing_ma, rig().world, env);
    auto s = TrainerState::create(BaselineKind::beam_focusing_ma, ma->spec(), env.delta_max, 1, {8});
    auto more_users = env;
    more_users.num_users = 4;
    more_users.assignment = {0, 1, 2};
    EvalOptions eo;
    eo.steps = 5;
    EXPECT_THROW(evaluate(s, rig().world, more_users, eo), IncompatibleCheckpoint);

    // an actor block whose width disagrees with the spec line
    auto text = checkpoint_text(s);
    text.replace(text.find("spec 3 9 3 27"), 13, "spec 3 8 3 27");
    std::istringstream bad(text);
    EXPECT_THROW(load_checkpoint(bad), IncompatibleCheckpoint);
}

TEST(Evaluate, RowsAndDeterminism) {
    const auto env = short_env();
    auto task = make_task(BaselineKind::beam_focusing_ma, rig().world, env);
    const auto s = TrainerState::create(BaselineKind::beam_focusing_ma, task->spec(), env.delta_max, 3, {16});
    EvalOptions eo;
    eo.steps = 300;
    eo.seed = 11;
    const auto a = evaluate(s, rig().world, env, eo);
    const auto b = evaluate(s, rig().world, env, eo);
    ASSERT_EQ(a.mean_rssi.size(), 300u);
    EXPECT_EQ(a.user_rssi.size(), 300u);
    EXPECT_EQ(a.user_rssi[0].size(), 3u);
    EXPECT_EQ(a.mean_rssi, b.mean_rssi);
    // every policy shares the static arms' user trajectory
    const auto flat = evaluate_static(BaselineKind::flat, rig().world, env, eo);
    const auto ref = evaluate_analytic(rig().world, env, eo);
    EXPECT_EQ(flat.users, a.users);
    EXPECT_EQ(ref.users, a.users);
    // users move only every fourth step
    for (std::size_t t = 1; t < a.users.size(); ++t)
        if (t % 4 != 0) EXPECT_EQ(a.users[t], a.users[t - 1]);
}

TEST(Evaluate, StaticKindRejected) {
    const auto env = short_env();
    auto task = make_task(BaselineKind::beam_focusing_ma, rig().world, env);
    auto s = TrainerState::create(BaselineKind::beam_focusing_ma, task->spec(), env.delta_max, 3, {16});
    s.algo = BaselineKind::flat;
    EXPECT_THROW(evaluate(s, rig().world, env, {}), InvalidArgument);
}

TEST(Evaluate, DeterministicActionIsClippedMean) {
    const auto env = short_env();
    auto task = make_task(BaselineKind::beam_focusing_ma, rig().world, env);
    auto s = TrainerState::create(BaselineKind::beam_focusing_ma, task->spec(), env.delta_max, 3, {16});
    s.actors[0].bias(1).setConstant(50.0);
    const std::vector<double> obs(9, 0.0);
    for (double a : s.act_deterministic(0, obs)) EXPECT_EQ(a, env.delta_max);
}
