#pragma once

// Learner-facing view of an environment: per-agent observation vectors,
// per-agent critic inputs and shaped rewards, independent of how many
// agents the underlying array is split into.

#include <cstdint>
#include <span>
#include <vector>

#include "reflectsim/environment.hpp"

namespace reflectsim {

struct TaskSpec {
    int agents = 0;
    int obs_dim = 0;
    int action_dim = 0;
    int critic_dim = 0;

    bool operator==(const TaskSpec&) const = default;
};

struct TaskFrame {
    std::vector<std::vector<double>> observations;  // one per agent
    std::vector<std::vector<double>> critic_inputs;  // one per agent
};

struct TaskStep {
    TaskFrame next;
    std::vector<double> rewards;  // shaped, one per agent
    std::vector<double> rssi_dbm;  // one per user
    bool done = false;
};

class ControlTask {
public:
    virtual ~ControlTask() = default;
    virtual TaskSpec spec() const = 0;
    virtual TaskFrame reset(std::uint64_t seed) = 0;
    virtual TaskStep step(std::span<const std::vector<double>> actions) = 0;
    virtual Environment& environment() = 0;
};

/// One learner per array segment. Actors see only their own Observation; the
/// critic sees the global state ordered from the agent's point of view.
class MultiAgentTask final : public ControlTask {
public:
    explicit MultiAgentTask(Environment env) : env_(std::move(env)) {}

    TaskSpec spec() const override {
        const auto& c = env_.config();
        return {c.num_agents, kObservationSize, kActionSize, 3 * c.num_users + 6 * c.num_agents};
    }

    TaskFrame reset(std::uint64_t seed) override {
        env_.reset(seed);
        return frame();
    }

    TaskStep step(std::span<const std::vector<double>> actions) override {
        std::vector<ActionVec> a;
        a.reserve(actions.size());
        for (const auto& v : actions) {
            if (v.size() != kActionSize) throw InvalidArgument("step: each agent action must have 3 components");
            a.push_back({v[0], v[1], v[2]});
        }
        auto r = env_.step(a);
        TaskStep out;
        out.next = frame();
        for (double raw : r.rewards) out.rewards.push_back(env_.shaped(raw));
        out.rssi_dbm = std::move(r.rssi_dbm);
        out.done = r.done;
        return out;
    }

    Environment& environment() override { return env_; }

private:
    TaskFrame frame() const {
        const auto& c = env_.config();
        TaskFrame f;
        for (const auto& o : env_.observations()) f.observations.emplace_back(o.begin(), o.end());
        const auto g = env_.global_state();
        for (int l = 0; l < c.num_agents; ++l)
            f.critic_inputs.push_back(agent_view(g, c.num_users, c.num_agents, c.assignment, l));
        return f;
    }

    Environment env_;
};

}  // namespace reflectsim
