#pragma once

// Comparison arms: single-agent control of the whole array, column-level
// azimuth sharing, a fixed flat reflector and no reflector at all.

#include <array>
#include <memory>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "reflectsim/environment.hpp"
#include "reflectsim/task.hpp"

namespace reflectsim {

enum class BaselineKind { beam_focusing_ma, beam_focusing_sa, column_based_ma, flat, none };

inline constexpr std::array<BaselineKind, 5> kAllBaselines{BaselineKind::beam_focusing_ma,
                                                           BaselineKind::beam_focusing_sa,
                                                           BaselineKind::column_based_ma, BaselineKind::flat,
                                                           BaselineKind::none};

inline std::string to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::beam_focusing_ma: return "beam_focusing_ma";
        case BaselineKind::beam_focusing_sa: return "beam_focusing_sa";
        case BaselineKind::column_based_ma: return "column_based_ma";
        case BaselineKind::flat: return "flat";
        case BaselineKind::none: return "none";
    }
    return "unknown";
}

inline BaselineKind baseline_from_string(std::string_view s) {
    for (auto k : kAllBaselines)
        if (to_string(k) == s) return k;
    throw InvalidConfiguration("unknown algorithm '" + std::string(s) +
                               "' (expected beam_focusing_ma|beam_focusing_sa|column_based_ma|flat|none)");
}

inline bool is_learned(BaselineKind k) {
    return k == BaselineKind::beam_focusing_ma || k == BaselineKind::beam_focusing_sa ||
           k == BaselineKind::column_based_ma;
}

/// Whole array driven by one learner: observation is the global state, the
/// action concatenates every segment's displacement, and the reward counts
/// the global mean twice so its scale matches the per-agent hybrid reward.
class SingleAgentTask final : public ControlTask {
public:
    explicit SingleAgentTask(Environment env) : env_(std::move(env)) {}

    TaskSpec spec() const override {
        const auto& c = env_.config();
        const int g = 3 * c.num_users + 6 * c.num_agents;
        return {1, g, kActionSize * c.num_agents, g};
    }

    TaskFrame reset(std::uint64_t seed) override {
        env_.reset(seed);
        return frame();
    }

    TaskStep step(std::span<const std::vector<double>> actions) override {
        const auto L = static_cast<std::size_t>(env_.config().num_agents);
        if (actions.size() != 1 || actions[0].size() != kActionSize * L)
            throw InvalidArgument("single-agent step: expected one joint action of size 3L");
        std::vector<ActionVec> split(L);
        for (std::size_t l = 0; l < L; ++l) split[l] = {actions[0][3 * l], actions[0][3 * l + 1], actions[0][3 * l + 2]};
        auto r = env_.step(split);
        const double mean = std::accumulate(r.rssi_dbm.begin(), r.rssi_dbm.end(), 0.0) /
                            static_cast<double>(r.rssi_dbm.size());
        TaskStep out;
        out.next = frame();
        out.rewards = {env_.shaped(2.0 * mean)};
        out.rssi_dbm = std::move(r.rssi_dbm);
        out.done = r.done;
        return out;
    }

    Environment& environment() override { return env_; }

private:
    TaskFrame frame() const {
        auto g = env_.global_state();
        return {{g}, {g}};
    }

    Environment env_;
};

inline std::unique_ptr<ControlTask> single_agent_adapter(Environment env) {
    return std::make_unique<SingleAgentTask>(std::move(env));
}

/// Column-level azimuth sharing applied after focal-point geometry.
inline std::vector<TileAngles> column_adapter(std::span<const TileAngles> tile_angles, const ArrayLayout& layout) {
    return column_constrain(tile_angles, layout);
}

/// Builds the learning task for a trainable arm.
inline std::unique_ptr<ControlTask> make_task(BaselineKind kind, const World& world, EnvConfig cfg) {
    switch (kind) {
        case BaselineKind::beam_focusing_ma:
            cfg.control = ControlMode::full;
            return std::make_unique<MultiAgentTask>(Environment(world, std::move(cfg)));
        case BaselineKind::column_based_ma:
            cfg.control = ControlMode::column;
            return std::make_unique<MultiAgentTask>(Environment(world, std::move(cfg)));
        case BaselineKind::beam_focusing_sa:
            cfg.control = ControlMode::full;
            return single_agent_adapter(Environment(world, std::move(cfg)));
        default:
            throw InvalidArgument("make_task: '" + to_string(kind) + "' is not a learned controller");
    }
}

/// Tile normals for a static arm, or an empty tile set for `none`.
inline std::vector<TileGeom> static_tiles(BaselineKind kind, const ArrayLayout& layout) {
    if (kind == BaselineKind::flat) return oriented_tiles(layout, flat_configuration(layout));
    if (kind == BaselineKind::none) return {};
    throw InvalidArgument("static_eval: kind must be flat or none");
}

inline std::vector<double> static_eval(BaselineKind kind, const Scene& scene, const ArrayLayout& layout,
                                       std::span<const Vec3> users, const RadiationModel& model) {
    const auto tiles = static_tiles(kind, layout);
    const auto lit = illuminate(tiles, scene, model);
    std::vector<double> out;
    for (const auto& u : users) out.push_back(power_to_rssi(received_watts(scene, lit, u, model), model));
    return out;
}

}  // namespace reflectsim
