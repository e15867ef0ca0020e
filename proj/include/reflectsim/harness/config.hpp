#pragma once

// Experiment configuration: an INI-style text file with one section per
// concern. Unknown keys are rejected so typos do not silently fall back to
// defaults.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "reflectsim/baselines.hpp"
#include "reflectsim/environment.hpp"
#include "reflectsim/marl.hpp"

namespace reflectsim::harness {

namespace pt = boost::property_tree;

struct ArrayConfig {
    int rows = 6;
    int cols = 12;
    double pitch = 0.05;
    Vec3 center{9.8, 3.4, 2.4};
    double azimuth_deg = 150.0;
    double elevation_deg = 0.0;
    SegmentShape segments = SegmentShape::rows;
    // servo limits in degrees; azimuth relative to the rest orientation
    double phi_min_deg = -60.0;
    double phi_max_deg = 60.0;
    double theta_min_deg = 30.0;
    double theta_max_deg = 150.0;

    AngleLimits limits() const {
        const double rad = kPi / 180.0;
        return {phi_min_deg * rad, phi_max_deg * rad, theta_min_deg * rad, theta_max_deg * rad};
    }
};

struct ExperimentConfig {
    Scene scene;
    RadiationModel radiation;
    ArrayConfig array;
    EnvConfig env;
    PPOHyper ppo;
    std::vector<Vec3> probe_users;
    int eval_steps = 300;
    std::vector<double> noise_sweep{0.0, 0.1, 0.3, 0.5, 1.0};
    BaselineKind algo = BaselineKind::beam_focusing_ma;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    int eval_every = 50;

    void validate() const {
        scene.validate();
        radiation.validate();
        array.limits().validate();
        env.validate();
        ppo.validate();
        if (array.rows < 1 || array.cols < 1 || !(array.pitch > 0.0))
            throw InvalidConfiguration("array: rows, cols and pitch must be positive");
        if (array.rows * array.cols < env.num_agents)
            throw InvalidConfiguration("array: fewer tiles than agents");
        if (seeds.empty()) throw InvalidConfiguration("run: seed list is empty");
        if (eval_steps < 1) throw InvalidConfiguration("env: eval_steps must be >= 1");
        if (eval_every < 0) throw InvalidConfiguration("run: eval_every must be >= 0");
        for (double s : noise_sweep)
            if (s < 0.0) throw InvalidConfiguration("env: noise_sweep values must be >= 0");
    }
};

/// L-shaped corridor, access point in one leg, users and array in the other.
inline ExperimentConfig default_config() {
    ExperimentConfig c;
    const Material plaster{"plasterboard", 0.2};
    const Material concrete{"concrete", 0.3};
    auto& s = c.scene;
    s.ap_position = {1.0, 1.5, 2.0};
    s.frequency_hz = 60e9;
    s.tx_power_mw = 5.0;
    s.rx_height = 1.0;
    s.walls = {
        {"inner_a", {{0.0, 3.0, 0.0}, {7.0, 3.2, 3.0}}, plaster},
        {"inner_b", {{6.8, 3.0, 0.0}, {7.0, 11.0, 3.0}}, plaster},
        {"south", {{-0.2, -0.2, 0.0}, {10.2, 0.0, 3.0}}, concrete},
        {"east", {{10.0, -0.2, 0.0}, {10.2, 11.2, 3.0}}, concrete},
        {"west", {{-0.2, -0.2, 0.0}, {0.0, 3.2, 3.0}}, concrete},
        {"north", {{6.8, 11.0, 0.0}, {10.2, 11.2, 3.0}}, concrete},
    };
    s.obstacles = {{"pillar", {8.5, 10.5, 0.0}, 0.3, 1.5, {"wood", 0.15}}};
    s.focal_region = {{7.0, 3.5, 0.75}, {10.0, 11.0, 1.25}};
    s.bounds = {{0.0, 0.0, 0.0}, {10.0, 11.0, 3.0}};
    c.probe_users = {{8.0, 6.0, 1.0}, {9.2, 7.5, 1.0}, {8.3, 9.5, 1.0}};
    return c;
}

/// The desk-scale profile the test suite targets.
inline void apply_profile(ExperimentConfig& c, const std::string& profile) {
    if (profile == "desk") {
        c.ppo.episodes = 300;
        c.seeds = {1, 2, 3};
        c.array.rows = 6;
        c.array.cols = 12;
    } else if (profile != "full") {
        throw InvalidConfiguration("unknown profile '" + profile + "' (expected desk|full)");
    }
}

inline World build_world(const ExperimentConfig& c) {
    c.validate();
    World w;
    w.scene = c.scene;
    w.radiation = c.radiation;
    w.limits = c.array.limits();
    const auto& a = c.array;
    const BasePlane plane = centered_plane(a.center, a.azimuth_deg * kPi / 180.0, a.elevation_deg * kPi / 180.0,
                                           a.rows, a.cols, a.pitch);
    w.layout = hex_layout(a.rows, a.cols, a.pitch, plane);
    partition_segments(w.layout, c.env.num_agents, a.segments);
    return w;
}

// ---- text form ------------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, r.ptr};
}

inline std::string fmt(const Vec3& v) { return fmt(v.x) + ' ' + fmt(v.y) + ' ' + fmt(v.z); }

template <class T>
std::string join(const std::vector<T>& xs) {
    std::string out;
    for (const auto& x : xs) {
        if (!out.empty()) out += ' ';
        if constexpr (std::is_floating_point_v<T>)
            out += fmt(x);
        else
            out += std::to_string(x);
    }
    return out;
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    for (std::string t; is >> t;) out.push_back(t);
    return out;
}

inline double to_double(const std::string& tok, const std::string& key) {
    double v = 0.0;
    auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
        throw InvalidConfiguration("config: '" + key + "' expects a number, got '" + tok + "'");
    return v;
}

inline long long to_int(const std::string& tok, const std::string& key) {
    long long v = 0;
    auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
        throw InvalidConfiguration("config: '" + key + "' expects an integer, got '" + tok + "'");
    return v;
}

/// One section being read; tracks which keys were consumed.
class Section {
public:
    Section(const pt::ptree& tree, std::string name) : tree_(&tree), name_(std::move(name)) {}

    bool has(const std::string& key) const { return tree_->find(key) != tree_->not_found(); }

    std::string text(const std::string& key) {
        auto it = tree_->find(key);
        if (it == tree_->not_found()) throw InvalidConfiguration("config: [" + name_ + "] is missing '" + key + "'");
        used_.insert(key);
        return it->second.data();
    }

    void read(const std::string& key, double& out) {
        if (has(key)) out = to_double(text(key), qualified(key));
    }
    void read(const std::string& key, int& out) {
        if (has(key)) out = static_cast<int>(to_int(text(key), qualified(key)));
    }
    void read(const std::string& key, std::string& out) {
        if (has(key)) out = text(key);
    }
    void read(const std::string& key, Vec3& out) {
        if (!has(key)) return;
        const auto toks = split_ws(text(key));
        if (toks.size() != 3) throw InvalidConfiguration("config: '" + qualified(key) + "' expects three numbers");
        out = {to_double(toks[0], key), to_double(toks[1], key), to_double(toks[2], key)};
    }
    void read(const std::string& key, std::vector<double>& out) {
        if (!has(key)) return;
        out.clear();
        for (const auto& t : split_ws(text(key))) out.push_back(to_double(t, qualified(key)));
    }
    void read(const std::string& key, std::vector<int>& out) {
        if (!has(key)) return;
        out.clear();
        for (const auto& t : split_ws(text(key))) out.push_back(static_cast<int>(to_int(t, qualified(key))));
    }
    void finish() const {
        for (const auto& kv : *tree_)
            if (!used_.count(kv.first)) throw InvalidConfiguration("config: unknown key '" + qualified(kv.first) + "'");
    }

private:
    std::string qualified(const std::string& key) const { return name_ + "." + key; }

    const pt::ptree* tree_;
    std::string name_;
    std::set<std::string> used_;
};

inline Material read_material(Section& s) {
    Material m;
    s.read("material", m.name);
    s.read("reflection", m.reflection_coefficient);
    return m;
}

}  // namespace detail

/// Reads a config. Missing keys keep their defaults; scene geometry
/// sections (wall:*, obstacle:*), when present, replace the default lists.
inline ExperimentConfig parse_config(std::istream& in) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw InvalidConfiguration(std::string("config: ") + e.what());
    }
    ExperimentConfig c = default_config();
    bool saw_wall = false;
    bool saw_obstacle = false;
    std::vector<Wall> walls;
    std::vector<Cylinder> obstacles;

    for (const auto& [name, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw InvalidConfiguration("config: key '" + name + "' outside any section");
        detail::Section s(body, name);
        if (name == "scene") {
            s.read("ap", c.scene.ap_position);
            s.read("frequency_hz", c.scene.frequency_hz);
            s.read("tx_power_mw", c.scene.tx_power_mw);
            s.read("rx_height", c.scene.rx_height);
            s.read("bounds_min", c.scene.bounds.min);
            s.read("bounds_max", c.scene.bounds.max);
            s.read("focal_min", c.scene.focal_region.min);
            s.read("focal_max", c.scene.focal_region.max);
        } else if (name.rfind("wall:", 0) == 0) {
            saw_wall = true;
            Wall w;
            w.name = name.substr(5);
            s.read("min", w.slab.min);
            s.read("max", w.slab.max);
            w.material = detail::read_material(s);
            walls.push_back(w);
        } else if (name.rfind("obstacle:", 0) == 0) {
            saw_obstacle = true;
            Cylinder cy;
            cy.name = name.substr(9);
            s.read("base", cy.base_center);
            s.read("radius", cy.radius);
            s.read("height", cy.height);
            cy.material = detail::read_material(s);
            obstacles.push_back(cy);
        } else if (name == "radiation") {
            s.read("lobe_exponent", c.radiation.lobe_exponent);
            s.read("tile_reflectivity", c.radiation.tile_reflectivity);
            s.read("noise_floor_dbm", c.radiation.noise_floor_dbm);
        } else if (name == "array") {
            s.read("rows", c.array.rows);
            s.read("cols", c.array.cols);
            s.read("pitch", c.array.pitch);
            s.read("center", c.array.center);
            s.read("azimuth_deg", c.array.azimuth_deg);
            s.read("elevation_deg", c.array.elevation_deg);
            if (s.has("segments")) c.array.segments = segment_shape_from_string(s.text("segments"));
            s.read("phi_min_deg", c.array.phi_min_deg);
            s.read("phi_max_deg", c.array.phi_max_deg);
            s.read("theta_min_deg", c.array.theta_min_deg);
            s.read("theta_max_deg", c.array.theta_max_deg);
        } else if (name == "env") {
            s.read("agents", c.env.num_agents);
            s.read("users", c.env.num_users);
            s.read("assignment", c.env.assignment);
            s.read("delta_max", c.env.delta_max);
            s.read("episode_length", c.env.episode_length);
            s.read("eval_steps", c.eval_steps);
            s.read("mobility_period", c.env.mobility_period);
            s.read("mobility_radius", c.env.mobility_radius);
            s.read("user_min", c.env.user_region.min);
            s.read("user_max", c.env.user_region.max);
            s.read("noise_sigma", c.env.noise_sigma);
            s.read("noise_sweep", c.noise_sweep);
            s.read("reward_offset", c.env.reward_offset);
            s.read("reward_scale", c.env.reward_scale);
            if (s.has("probe_users")) {
                std::vector<double> flat;
                s.read("probe_users", flat);
                if (flat.size() % 3 != 0) throw InvalidConfiguration("config: env.probe_users needs xyz triples");
                c.probe_users.clear();
                for (std::size_t i = 0; i < flat.size(); i += 3) c.probe_users.push_back({flat[i], flat[i + 1], flat[i + 2]});
            }
        } else if (name == "ppo") {
            s.read("lr", c.ppo.lr);
            s.read("gamma", c.ppo.gamma);
            s.read("gae_lambda", c.ppo.gae_lambda);
            s.read("clip_eps", c.ppo.clip_eps);
            s.read("value_coef", c.ppo.value_coef);
            s.read("entropy_coef", c.ppo.entropy_coef);
            s.read("rollout_size", c.ppo.rollout_size);
            s.read("minibatch", c.ppo.minibatch);
            s.read("epochs", c.ppo.epochs);
            s.read("episodes", c.ppo.episodes);
            s.read("hidden", c.ppo.hidden);
        } else if (name == "run") {
            if (s.has("algo")) c.algo = baseline_from_string(s.text("algo"));
            if (s.has("seeds")) {
                c.seeds.clear();
                for (const auto& t : detail::split_ws(s.text("seeds")))
                    c.seeds.push_back(static_cast<std::uint64_t>(detail::to_int(t, "run.seeds")));
            }
            s.read("eval_every", c.eval_every);
        } else {
            throw InvalidConfiguration("config: unknown section [" + name + "]");
        }
        s.finish();
    }
    if (saw_wall) c.scene.walls = std::move(walls);
    if (saw_obstacle) c.scene.obstacles = std::move(obstacles);
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfiguration("config: cannot open '" + path + "'");
    return parse_config(in);
}

/// Canonical text form; parse_config(render_config(c)) reproduces c.
inline std::string render_config(const ExperimentConfig& c) {
    using detail::fmt;
    using detail::join;
    std::ostringstream o;
    o << "[scene]\n"
      << "ap = " << fmt(c.scene.ap_position) << '\n'
      << "frequency_hz = " << fmt(c.scene.frequency_hz) << '\n'
      << "tx_power_mw = " << fmt(c.scene.tx_power_mw) << '\n'
      << "rx_height = " << fmt(c.scene.rx_height) << '\n'
      << "bounds_min = " << fmt(c.scene.bounds.min) << '\n'
      << "bounds_max = " << fmt(c.scene.bounds.max) << '\n'
      << "focal_min = " << fmt(c.scene.focal_region.min) << '\n'
      << "focal_max = " << fmt(c.scene.focal_region.max) << '\n';
    for (const auto& w : c.scene.walls)
        o << "\n[wall:" << w.name << "]\n"
          << "min = " << fmt(w.slab.min) << '\n'
          << "max = " << fmt(w.slab.max) << '\n'
          << "material = " << w.material.name << '\n'
          << "reflection = " << fmt(w.material.reflection_coefficient) << '\n';
    for (const auto& cy : c.scene.obstacles)
        o << "\n[obstacle:" << cy.name << "]\n"
          << "base = " << fmt(cy.base_center) << '\n'
          << "radius = " << fmt(cy.radius) << '\n'
          << "height = " << fmt(cy.height) << '\n'
          << "material = " << cy.material.name << '\n'
          << "reflection = " << fmt(cy.material.reflection_coefficient) << '\n';
    o << "\n[radiation]\n"
      << "lobe_exponent = " << fmt(c.radiation.lobe_exponent) << '\n'
      << "tile_reflectivity = " << fmt(c.radiation.tile_reflectivity) << '\n'
      << "noise_floor_dbm = " << fmt(c.radiation.noise_floor_dbm) << '\n';
    o << "\n[array]\n"
      << "rows = " << c.array.rows << '\n'
      << "cols = " << c.array.cols << '\n'
      << "pitch = " << fmt(c.array.pitch) << '\n'
      << "center = " << fmt(c.array.center) << '\n'
      << "azimuth_deg = " << fmt(c.array.azimuth_deg) << '\n'
      << "elevation_deg = " << fmt(c.array.elevation_deg) << '\n'
      << "segments = " << to_string(c.array.segments) << '\n'
      << "phi_min_deg = " << fmt(c.array.phi_min_deg) << '\n'
      << "phi_max_deg = " << fmt(c.array.phi_max_deg) << '\n'
      << "theta_min_deg = " << fmt(c.array.theta_min_deg) << '\n'
      << "theta_max_deg = " << fmt(c.array.theta_max_deg) << '\n';
    std::vector<double> probes;
    for (const auto& p : c.probe_users) probes.insert(probes.end(), {p.x, p.y, p.z});
    o << "\n[env]\n"
      << "agents = " << c.env.num_agents << '\n'
      << "users = " << c.env.num_users << '\n'
      << "assignment = " << join(c.env.assignment) << '\n'
      << "delta_max = " << fmt(c.env.delta_max) << '\n'
      << "episode_length = " << c.env.episode_length << '\n'
      << "eval_steps = " << c.eval_steps << '\n'
      << "mobility_period = " << c.env.mobility_period << '\n'
      << "mobility_radius = " << fmt(c.env.mobility_radius) << '\n'
      << "user_min = " << fmt(c.env.user_region.min) << '\n'
      << "user_max = " << fmt(c.env.user_region.max) << '\n'
      << "noise_sigma = " << fmt(c.env.noise_sigma) << '\n'
      << "noise_sweep = " << join(c.noise_sweep) << '\n'
      << "reward_offset = " << fmt(c.env.reward_offset) << '\n'
      << "reward_scale = " << fmt(c.env.reward_scale) << '\n'
      << "probe_users = " << join(probes) << '\n';
    o << "\n[ppo]\n"
      << "lr = " << fmt(c.ppo.lr) << '\n'
      << "gamma = " << fmt(c.ppo.gamma) << '\n'
      << "gae_lambda = " << fmt(c.ppo.gae_lambda) << '\n'
      << "clip_eps = " << fmt(c.ppo.clip_eps) << '\n'
      << "value_coef = " << fmt(c.ppo.value_coef) << '\n'
      << "entropy_coef = " << fmt(c.ppo.entropy_coef) << '\n'
      << "rollout_size = " << c.ppo.rollout_size << '\n'
      << "minibatch = " << c.ppo.minibatch << '\n'
      << "epochs = " << c.ppo.epochs << '\n'
      << "episodes = " << c.ppo.episodes << '\n'
      << "hidden = " << join(c.ppo.hidden) << '\n';
    o << "\n[run]\n"
      << "algo = " << to_string(c.algo) << '\n'
      << "seeds = " << join(c.seeds) << '\n'
      << "eval_every = " << c.eval_every << '\n';
    return o.str();
}

}  // namespace reflectsim::harness
