#pragma once

// Cooperative focal-point control problem. Each agent owns one array segment
// and moves one virtual focal point; tile orientations follow from geometry.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "reflectsim/errors.hpp"
#include "reflectsim/geometry.hpp"
#include "reflectsim/propagation.hpp"
#include "reflectsim/vec3.hpp"

namespace reflectsim {

/// Immutable physical setup shared by environments, baselines and tools.
struct World {
    Scene scene;
    ArrayLayout layout;
    RadiationModel radiation;
    AngleLimits limits;
};

enum class ControlMode { full, column };

struct EnvConfig {
    int num_agents = 3;
    int num_users = 3;
    std::vector<int> assignment{0, 1, 2};  // agent -> user
    double delta_max = 2.0;
    int episode_length = 100;
    int mobility_period = 4;
    double mobility_radius = 1.5;
    Box user_region{{7.5, 5.5, 1.0}, {9.5, 10.0, 1.0}};
    double noise_sigma = 0.0;
    std::uint64_t seed = 1;
    double reward_offset = -220.0;
    double reward_scale = 100.0;
    ControlMode control = ControlMode::full;

    void validate() const {
        if (num_agents < 1) throw InvalidConfiguration("env: num_agents must be >= 1");
        if (num_users < 1) throw InvalidConfiguration("env: num_users must be >= 1");
        if (assignment.size() != static_cast<std::size_t>(num_agents))
            throw InvalidConfiguration("env: assignment must list one user per agent");
        for (int k : assignment)
            if (k < 0 || k >= num_users) throw InvalidConfiguration("env: assignment refers to an unknown user");
        if (!(delta_max > 0.0)) throw InvalidConfiguration("env: delta_max must be positive");
        if (episode_length < 1) throw InvalidConfiguration("env: episode_length must be >= 1");
        if (mobility_period < 1) throw InvalidConfiguration("env: mobility_period must be >= 1");
        if (mobility_radius < 0.0) throw InvalidConfiguration("env: mobility_radius must be >= 0");
        if (user_region.empty()) throw InvalidConfiguration("env: user region is empty");
        if (noise_sigma < 0.0) throw InvalidConfiguration("env: noise_sigma must be >= 0");
        if (!(reward_scale > 0.0)) throw InvalidConfiguration("env: reward_scale must be positive");
    }
};

struct EnvState {
    std::vector<Vec3> user_positions;
    std::vector<Vec3> focal_points;
    int step_index = 0;
};

inline constexpr int kObservationSize = 9;
inline constexpr int kActionSize = 3;

/// Assigned user, own segment centroid, own focal point; each in [-1, 1].
using Observation = std::array<double, kObservationSize>;
/// Focal displacement in metres.
using ActionVec = Vec3;

/// Maps a position into [-1, 1]^3 relative to `bounds`, saturating outside.
inline Vec3 normalize_position(const Vec3& p, const Box& bounds) {
    Vec3 out;
    for (int a = 0; a < 3; ++a) {
        const double span = bounds.max[a] - bounds.min[a];
        const double v = span > 0.0 ? 2.0 * (p[a] - bounds.min[a]) / span - 1.0 : 0.0;
        out[a] = std::clamp(v, -1.0, 1.0);
    }
    return out;
}

/// Hybrid reward: mean RSSI over all users plus the agent's own user's RSSI.
inline double reward(std::span<const double> rssi_per_user, std::span<const int> assignment, int agent) {
    const double mean = std::accumulate(rssi_per_user.begin(), rssi_per_user.end(), 0.0) /
                        static_cast<double>(rssi_per_user.size());
    return mean + rssi_per_user[static_cast<std::size_t>(assignment[static_cast<std::size_t>(agent)])];
}

/// Independent zero-mean Gaussian error on every coordinate.
inline std::vector<Vec3> perturb_positions(std::span<const Vec3> positions, double sigma, std::mt19937_64& rng) {
    std::vector<Vec3> out(positions.begin(), positions.end());
    if (sigma == 0.0) return out;
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& p : out) {
        p.x += noise(rng);
        p.y += noise(rng);
        p.z += noise(rng);
    }
    return out;
}

/// Users, then focal points, then segment centroids; 3K + 6L values.
inline std::vector<double> global_state(const EnvState& state, const ArrayLayout& layout, const Box& bounds) {
    std::vector<double> out;
    out.reserve(3 * (state.user_positions.size() + 2 * state.focal_points.size()));
    auto push = [&](const Vec3& p) {
        const Vec3 n = normalize_position(p, bounds);
        out.insert(out.end(), {n.x, n.y, n.z});
    };
    for (const auto& u : state.user_positions) push(u);
    for (const auto& f : state.focal_points) push(f);
    for (std::size_t l = 0; l < state.focal_points.size(); ++l) push(layout.segment_centroid(l));
    return out;
}

/// Global state re-ordered so the agent's own user, focal point and centroid
/// lead their blocks. One critic network then serves every agent.
inline std::vector<double> agent_view(std::span<const double> global, int num_users, int num_agents,
                                      std::span<const int> assignment, int agent) {
    std::vector<double> out;
    out.reserve(global.size());
    auto copy_block = [&](std::size_t base, std::size_t count, std::size_t lead) {
        auto put = [&](std::size_t i) {
            const auto* p = global.data() + base + 3 * i;
            out.insert(out.end(), p, p + 3);
        };
        put(lead);
        for (std::size_t i = 0; i < count; ++i)
            if (i != lead) put(i);
    };
    const auto K = static_cast<std::size_t>(num_users);
    const auto L = static_cast<std::size_t>(num_agents);
    const auto self = static_cast<std::size_t>(agent);
    copy_block(0, K, static_cast<std::size_t>(assignment[self]));
    copy_block(3 * K, L, self);
    copy_block(3 * K + 3 * L, L, self);
    return out;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finaliser
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class Environment {
public:
    struct ResetResult {
        EnvState state;
        std::vector<Observation> observations;
    };

    struct StepResult {
        EnvState state;
        std::vector<Observation> observations;
        std::vector<double> rewards;  // raw hybrid reward in dBm units
        std::vector<double> rssi_dbm;
        bool done = false;
    };

    Environment(const World& world, EnvConfig config) : world_(&world), config_(std::move(config)) {
        config_.validate();
        world.scene.validate();
        if (world.layout.num_segments() != static_cast<std::size_t>(config_.num_agents))
            throw InvalidConfiguration("env: array segment count must equal num_agents");
    }

    const World& world() const { return *world_; }
    const EnvConfig& config() const { return config_; }
    const EnvState& state() const { return state_; }
    /// State as the agents see it: user positions carry localisation noise.
    const EnvState& observed_state() const { return observed_; }

    void set_noise_sigma(double sigma) {
        if (sigma < 0.0) throw InvalidConfiguration("env: noise_sigma must be >= 0");
        config_.noise_sigma = sigma;
    }

    ResetResult reset(std::uint64_t seed) {
        std::mt19937_64 placement(derive_seed(seed, 0));
        mobility_rng_.seed(derive_seed(seed, 1));
        noise_rng_.seed(derive_seed(seed, 2));

        const Box& region = config_.user_region;
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        state_ = EnvState{};
        for (int k = 0; k < config_.num_users; ++k) {
            Vec3 p;
            for (int a = 0; a < 3; ++a) p[a] = region.min[a] + unit(placement) * (region.max[a] - region.min[a]);
            state_.user_positions.push_back(p);
        }
        homes_ = state_.user_positions;
        state_.focal_points = initial_focal_points();
        state_.step_index = 0;
        observe();
        return {state_, observations()};
    }

    /// Replaces the user positions (and their mobility homes) of the current episode.
    void place_users(std::span<const Vec3> users) {
        if (users.size() != static_cast<std::size_t>(config_.num_users))
            throw InvalidArgument("place_users: expected one position per user");
        state_.user_positions.assign(users.begin(), users.end());
        homes_ = state_.user_positions;
        observe();
    }

    StepResult step(std::span<const ActionVec> actions) {
        if (actions.size() != static_cast<std::size_t>(config_.num_agents))
            throw InvalidArgument("step: expected one action per agent");
        const double d = config_.delta_max;
        for (std::size_t l = 0; l < actions.size(); ++l) {
            const Vec3 a{std::clamp(actions[l].x, -d, d), std::clamp(actions[l].y, -d, d),
                         std::clamp(actions[l].z, -d, d)};
            state_.focal_points[l] = world_->scene.focal_region.clamp(state_.focal_points[l] + a);
        }

        StepResult out;
        out.rssi_dbm = user_rssi(tile_normals(state_.focal_points), state_.user_positions);
        out.rewards.resize(actions.size());
        for (int l = 0; l < config_.num_agents; ++l) out.rewards[static_cast<std::size_t>(l)] = reward(out.rssi_dbm, config_.assignment, l);

        ++state_.step_index;
        if (state_.step_index % config_.mobility_period == 0) move_users();
        out.done = state_.step_index >= config_.episode_length;
        observe();
        out.state = state_;
        out.observations = observations();
        return out;
    }

    /// Reward after the configured affine rescaling used for learning.
    double shaped(double raw) const { return (raw - config_.reward_offset) / config_.reward_scale; }

    std::vector<Vec3> tile_normals(std::span<const Vec3> focal_points) const {
        std::vector<FocalPoint> fps;
        fps.reserve(focal_points.size());
        for (std::size_t l = 0; l < focal_points.size(); ++l) fps.push_back({focal_points[l], static_cast<int>(l)});
        FocalAngles fa = focal_tile_angles(world_->layout, fps, world_->scene.ap_position, world_->limits);
        if (config_.control == ControlMode::column) fa.angles = column_constrain(fa.angles, world_->layout);
        return normals_from_angles(world_->layout, fa);
    }

    std::vector<double> user_rssi(std::span<const Vec3> normals, std::span<const Vec3> users) const {
        const auto tiles = oriented_tiles(world_->layout, normals);
        const auto lit = illuminate(tiles, world_->scene, world_->radiation);
        std::vector<double> out;
        out.reserve(users.size());
        for (const auto& u : users) out.push_back(power_to_rssi(received_watts(world_->scene, lit, u, world_->radiation), world_->radiation));
        return out;
    }

    std::vector<Observation> observations() const {
        std::vector<Observation> out;
        const Box& b = world_->scene.bounds;
        for (int l = 0; l < config_.num_agents; ++l) {
            const auto idx = static_cast<std::size_t>(l);
            const Vec3 u = normalize_position(observed_.user_positions[static_cast<std::size_t>(config_.assignment[idx])], b);
            const Vec3 c = normalize_position(world_->layout.segment_centroid(idx), b);
            const Vec3 f = normalize_position(observed_.focal_points[idx], b);
            out.push_back({u.x, u.y, u.z, c.x, c.y, c.z, f.x, f.y, f.z});
        }
        return out;
    }

    std::vector<double> global_state() const {
        return reflectsim::global_state(observed_, world_->layout, world_->scene.bounds);
    }

    /// Joint action dimensionality exposed to learners.
    std::size_t action_dimension() const { return static_cast<std::size_t>(kActionSize * config_.num_agents); }

private:
    // Each segment starts at the point its flat specular ray reaches at the
    // distance of the user-region centre.
    std::vector<Vec3> initial_focal_points() const {
        const auto& layout = world_->layout;
        const Vec3 target = config_.user_region.center();
        std::vector<Vec3> out;
        for (std::size_t l = 0; l < layout.num_segments(); ++l) {
            const Vec3 c = layout.segment_centroid(l);
            const Vec3 incident = normalized(c - world_->scene.ap_position);
            const Vec3 mirrored = reflect(incident, layout.plane.normal);
            out.push_back(world_->scene.focal_region.clamp(c + mirrored * distance(target, c)));
        }
        return out;
    }

    void move_users() {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (std::size_t k = 0; k < state_.user_positions.size(); ++k) {
            const double r = config_.mobility_radius * std::sqrt(unit(mobility_rng_));
            const double angle = 2.0 * kPi * unit(mobility_rng_);
            const Vec3 p = homes_[k] + Vec3{r * std::cos(angle), r * std::sin(angle), 0.0};
            state_.user_positions[k] = config_.user_region.clamp(p);
        }
    }

    void observe() {
        observed_ = state_;
        observed_.user_positions = perturb_positions(state_.user_positions, config_.noise_sigma, noise_rng_);
    }

    const World* world_;
    EnvConfig config_;
    EnvState state_;
    EnvState observed_;
    std::vector<Vec3> homes_;
    std::mt19937_64 mobility_rng_;
    std::mt19937_64 noise_rng_;
};

}  // namespace reflectsim
