#pragma once

// Command implementations behind the reflectsim CLI. Each returns a process
// exit status: 0 success, 1 runtime failure, 2 bad configuration or
// arguments, 3 incompatible checkpoint.

#include <cstdlib>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "reflectsim/harness/config.hpp"
#include "reflectsim/harness/io.hpp"
#include "reflectsim/marl.hpp"

namespace reflectsim::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitCheckpoint = 3;

struct CommonArgs {
    std::optional<std::string> config;
    std::optional<std::string> profile;
    std::optional<std::string> out;
};

struct TrainArgs : CommonArgs {
    std::optional<std::string> algo;
    std::optional<int> episodes;
    std::optional<std::uint64_t> seed;
};

struct EvaluateArgs : CommonArgs {
    std::string checkpoint;
    std::optional<int> steps;
    double noise_sigma = 0.0;
    std::optional<std::uint64_t> seed;
};

struct HeatmapArgs : CommonArgs {
    std::optional<std::string> checkpoint;
    std::optional<std::string> static_kind;
    std::string resolution = "64";
    std::optional<std::vector<double>> region;  // x0 y0 x1 y1
    std::optional<std::uint64_t> seed;
    int settle_steps = 30;
};

struct CompareArgs : CommonArgs {
    std::optional<std::vector<std::uint64_t>> seeds;
    std::optional<int> episodes;
};

namespace detail {

inline fs::path output_dir(const std::optional<std::string>& out, const std::string& fallback) {
    if (out) return *out;
    const char* root = std::getenv("REFLECTSIM_OUT");
    return fs::path(root && *root ? root : "runs") / fallback;
}

inline ExperimentConfig resolve_config(const CommonArgs& a) {
    ExperimentConfig c = a.config ? load_config(*a.config) : default_config();
    if (a.profile) apply_profile(c, *a.profile);
    return c;
}


/// Mean over the last `window` episodes of the agent-averaged return.
inline double final_reward(const std::vector<EpisodeLog>& eps, std::size_t window = 50) {
    if (eps.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t from = eps.size() > window ? eps.size() - window : 0;
    double total = 0.0;
    for (std::size_t i = from; i < eps.size(); ++i) {
        const auto& r = eps[i].cumulative_reward;
        total += std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
    }
    return total / static_cast<double>(eps.size() - from);
}

inline std::string snapshots_csv(const std::vector<EvalSnapshot>& snaps) {
    std::ostringstream o;
    o << "episode,mean_rssi_dbm\n";
    for (const auto& s : snaps) o << s.episode << ',' << num(s.mean_rssi_dbm) << '\n';
    return o.str();
}

inline void save_checkpoint_file(const fs::path& p, const TrainerState& s) {
    auto os = open_out(p);
    save_checkpoint(os, s);
    if (!os) throw std::runtime_error("cannot write checkpoint '" + p.string() + "'");
}

inline TrainerState load_checkpoint_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InvalidConfiguration("cannot open checkpoint '" + p.string() + "'");
    try {
        return load_checkpoint(in);
    } catch (const InvalidConfiguration& e) {
        throw IncompatibleCheckpoint(e.what());
    }
}

/// Trains one arm into `dir`: config.ini, training.csv, eval_snapshots.csv,
/// checkpoint.ckpt.
inline TrainResult train_into(const fs::path& dir, const ExperimentConfig& cfg, const World& world,
                              std::uint64_t seed, const std::string& config_text) {
    fs::create_directories(dir);
    TrainingCsv csv(dir / "training.csv");
    TrainOptions o;
    o.algo = cfg.algo;
    o.hyper = cfg.ppo;
    o.seed = seed;
    o.eval_every = cfg.eval_every;
    o.eval_steps = cfg.eval_steps;
    o.config_text = config_text;
    o.on_episode = [&csv](const EpisodeLog& e) { csv.append(e); };
    TrainResult r = train(world, cfg.env, o);
    write_text(dir / "eval_snapshots.csv", snapshots_csv(r.snapshots));
    save_checkpoint_file(dir / "checkpoint.ckpt", r.state);
    return r;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const IncompatibleCheckpoint& e) {
        err << "error: incompatible checkpoint: " << e.what() << '\n';
        return kExitCheckpoint;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

inline std::pair<int, int> parse_resolution(const std::string& s) {
    const auto x = s.find('x');
    auto to_int = [&](const std::string& t) {
        return static_cast<int>(reflectsim::harness::detail::to_int(t, "resolution"));
    };
    if (x == std::string::npos) {
        const int r = to_int(s);
        return {r, r};
    }
    return {to_int(s.substr(0, x)), to_int(s.substr(x + 1))};
}

}  // namespace detail

// ---- train ----------------------------------------------------------------

inline int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        ExperimentConfig cfg = detail::resolve_config(a);
        if (a.algo) cfg.algo = baseline_from_string(*a.algo);
        if (a.episodes) cfg.ppo.episodes = *a.episodes;
        const std::uint64_t seed = a.seed ? *a.seed : cfg.seeds.front();
        cfg.seeds = {seed};
        if (!is_learned(cfg.algo))
            throw InvalidConfiguration("train: '" + to_string(cfg.algo) + "' has nothing to train");
        cfg.validate();
        const World world = build_world(cfg);
        const fs::path dir = detail::output_dir(a.out, "train_" + to_string(cfg.algo) + "_s" + std::to_string(seed));
        const std::string text = render_config(cfg);
        Stopwatch clock;
        fs::create_directories(dir);
        write_text(dir / "config.ini", text);
        TrainResult r = detail::train_into(dir, cfg, world, seed, text);
        const double fr = detail::final_reward(r.episodes);
        json results = {{"algo", to_string(cfg.algo)},
                        {"seed", seed},
                        {"episodes", r.state.episodes},
                        {"final_reward", std::isnan(fr) ? json(nullptr) : json(fr)}};
        if (!r.snapshots.empty()) results["last_eval_rssi_dbm"] = r.snapshots.back().mean_rssi_dbm;
        write_manifest(dir, "train", text, results, clock.seconds());
        out << "trained " << to_string(cfg.algo) << " seed=" << seed << " episodes=" << r.state.episodes
            << " final_reward=" << num(fr) << " out=" << dir.string() << '\n';
        return kExitOk;
    });
}

// ---- evaluate -------------------------------------------------------------

inline int run_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const TrainerState ckpt = detail::load_checkpoint_file(a.checkpoint);
        ExperimentConfig cfg;
        if (a.config) {
            cfg = load_config(*a.config);
        } else {
            std::istringstream in(ckpt.config_text);
            cfg = parse_config(in);
        }
        if (a.profile) apply_profile(cfg, *a.profile);
        const int steps = a.steps ? *a.steps : cfg.eval_steps;
        const std::uint64_t seed = a.seed ? *a.seed : ckpt.seed;
        if (steps < 1) throw InvalidConfiguration("evaluate: --steps must be >= 1");
        if (a.noise_sigma < 0.0) throw InvalidConfiguration("evaluate: --noise-sigma must be >= 0");
        const World world = build_world(cfg);
        const fs::path dir = detail::output_dir(a.out, "eval_" + to_string(ckpt.algo) + "_s" + std::to_string(seed));
        Stopwatch clock;
        const EvalLog log = evaluate(ckpt, world, cfg.env, {steps, a.noise_sigma, seed});

        fs::create_directories(dir);
        const std::string text = render_config(cfg);
        write_text(dir / "config.ini", text);
        const std::string name = "eval_sigma" + num(a.noise_sigma) + "_seed" + std::to_string(seed) + ".csv";
        write_text(dir / name, eval_csv(log));
        const fs::path summary = dir / "eval_summary.csv";
        const bool fresh = !fs::exists(summary);
        {
            std::ofstream os(summary, std::ios::app | std::ios::binary);
            if (fresh) os << "noise_sigma,seed,steps,mean_rssi_dbm,std_rssi_dbm\n";
            os << num(a.noise_sigma) << ',' << seed << ',' << steps << ',' << num(log.mean()) << ','
               << num(log.stddev()) << '\n';
        }
        json results = {{"algo", to_string(ckpt.algo)}, {"seed", seed},           {"steps", steps},
                        {"noise_sigma", a.noise_sigma}, {"mean_rssi_dbm", log.mean()}, {"std_rssi_dbm", log.stddev()},
                        {"csv", name}};
        write_manifest(dir, "evaluate", text, results, clock.seconds());
        out << "mean_rssi_dbm=" << num(log.mean()) << " std_rssi_dbm=" << num(log.stddev()) << " steps=" << steps
            << " noise_sigma=" << num(a.noise_sigma) << " seed=" << seed << " csv=" << (dir / name).string() << '\n';
        return kExitOk;
    });
}

// ---- heatmap --------------------------------------------------------------

inline int run_heatmap(const HeatmapArgs& a, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        if (a.checkpoint.has_value() == a.static_kind.has_value())
            throw InvalidConfiguration("heatmap: give exactly one of --checkpoint or --static");
        std::optional<TrainerState> ckpt;
        ExperimentConfig cfg;
        if (a.checkpoint) {
            ckpt = detail::load_checkpoint_file(*a.checkpoint);
            if (a.config) {
                cfg = load_config(*a.config);
            } else {
                std::istringstream in(ckpt->config_text);
                cfg = parse_config(in);
            }
            if (a.profile) apply_profile(cfg, *a.profile);
        } else {
            cfg = detail::resolve_config(a);
        }
        const auto [nx, ny] = detail::parse_resolution(a.resolution);
        GridSpec grid{cfg.scene.focal_region.min.x, cfg.scene.focal_region.min.y, cfg.scene.focal_region.max.x,
                      cfg.scene.focal_region.max.y, nx, ny};
        if (a.region) {
            if (a.region->size() != 4) throw InvalidConfiguration("heatmap: --region needs x0,y0,x1,y1");
            grid.x0 = (*a.region)[0];
            grid.y0 = (*a.region)[1];
            grid.x1 = (*a.region)[2];
            grid.y1 = (*a.region)[3];
        }
        const World world = build_world(cfg);
        if (cfg.probe_users.size() != static_cast<std::size_t>(cfg.env.num_users))
            throw InvalidConfiguration("heatmap: env.probe_users must list one position per user");

        Stopwatch clock;
        std::vector<TileGeom> tiles;
        std::vector<Vec3> focal;
        std::string source;
        if (ckpt) {
            source = "checkpoint:" + to_string(ckpt->algo);
            EnvConfig ec = cfg.env;
            ec.mobility_radius = 0.0;
            ec.noise_sigma = 0.0;
            ec.episode_length = a.settle_steps + 1;
            auto task = make_task(ckpt->algo, world, ec);
            if (!(task->spec() == ckpt->spec))
                throw IncompatibleCheckpoint("heatmap: checkpoint dimensions do not match the configuration");
            task->reset(a.seed ? *a.seed : ckpt->seed);
            Environment& env = task->environment();
            env.place_users(cfg.probe_users);
            // Zero step to obtain a frame that reflects the placed users.
            std::vector<std::vector<double>> zero(static_cast<std::size_t>(ckpt->spec.agents),
                                                  std::vector<double>(static_cast<std::size_t>(ckpt->spec.action_dim), 0.0));
            TaskFrame frame = task->step(zero).next;
            std::vector<std::vector<double>> act(zero.size());
            for (int t = 0; t < a.settle_steps; ++t) {
                for (int l = 0; l < ckpt->spec.agents; ++l)
                    act[static_cast<std::size_t>(l)] = ckpt->act_deterministic(l, frame.observations[static_cast<std::size_t>(l)]);
                frame = task->step(act).next;
            }
            focal = env.state().focal_points;
            tiles = oriented_tiles(world.layout, env.tile_normals(focal));
        } else {
            const BaselineKind kind = baseline_from_string(*a.static_kind);
            if (is_learned(kind)) throw InvalidConfiguration("heatmap: --static expects flat or none");
            source = "static:" + to_string(kind);
            tiles = static_tiles(kind, world.layout);
        }
        const Heatmap h = heatmap(world.scene, tiles, grid, world.radiation);

        const fs::path dir = detail::output_dir(a.out, "heatmap");
        fs::create_directories(dir);
        const std::string text = render_config(cfg);
        write_text(dir / "config.ini", text);
        write_text(dir / "heatmap.csv", heatmap_csv(h));
        write_text(dir / "heatmap.ppm", heatmap_ppm(h));

        json meta;
        meta["source"] = source;
        meta["grid"] = {{"x0", grid.x0}, {"y0", grid.y0}, {"x1", grid.x1}, {"y1", grid.y1},
                        {"nx", grid.nx}, {"ny", grid.ny}, {"z", h.z}};
        meta["ramp_dbm"] = {kRampLowDbm, kRampHighDbm};
        meta["ap"] = vec_json(world.scene.ap_position);
        meta["array_centroid"] = vec_json(world.layout.centroid());
        const auto lit = illuminate(tiles, world.scene, world.radiation);
        json users = json::array();
        for (const auto& u : cfg.probe_users)
            users.push_back({{"position", vec_json(u)},
                             {"rssi_dbm", power_to_rssi(received_watts(world.scene, lit, u, world.radiation), world.radiation)}});
        meta["users"] = users;
        json fj = json::array();
        for (const auto& f : focal) fj.push_back(vec_json(f));
        meta["focal_points"] = fj;
        json obstacles = json::array();
        for (const auto& c : world.scene.obstacles)
            obstacles.push_back({{"name", c.name}, {"center_xy", {c.base_center.x, c.base_center.y}}, {"radius", c.radius}});
        meta["obstacles"] = obstacles;
        json walls = json::array();
        for (const auto& w : world.scene.walls)
            walls.push_back({{"name", w.name}, {"min_xy", {w.slab.min.x, w.slab.min.y}}, {"max_xy", {w.slab.max.x, w.slab.max.y}}});
        meta["walls"] = walls;
        const auto peak = std::max_element(h.dbm.begin(), h.dbm.end()) - h.dbm.begin();
        meta["peak"] = {{"x", h.x_at(static_cast<int>(peak % nx))}, {"y", h.y_at(static_cast<int>(peak / nx))},
                        {"rssi_dbm", h.dbm[static_cast<std::size_t>(peak)]}};
        write_text(dir / "heatmap.json", meta.dump(2) + "\n");

        write_manifest(dir, "heatmap", text, {{"source", source}, {"nx", nx}, {"ny", ny}}, clock.seconds());
        out << "heatmap " << source << ' ' << nx << 'x' << ny << " out=" << dir.string() << '\n';
        return kExitOk;
    });
}

// ---- compare --------------------------------------------------------------

inline int run_compare(const CompareArgs& a, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        ExperimentConfig cfg = detail::resolve_config(a);
        if (a.seeds) cfg.seeds = *a.seeds;
        if (a.episodes) cfg.ppo.episodes = *a.episodes;
        cfg.validate();
        const World world = build_world(cfg);
        const fs::path dir = detail::output_dir(a.out, "compare");
        fs::create_directories(dir);
        const std::string text = render_config(cfg);
        write_text(dir / "config.ini", text);
        Stopwatch clock;

        std::vector<SummaryRow> rows;
        std::map<std::uint64_t, double> analytic;
        bool any_failed = false;
        for (std::uint64_t seed : cfg.seeds) {
            const EvalOptions eo{cfg.eval_steps, 0.0, seed};
            analytic[seed] = evaluate_analytic(world, cfg.env, eo).mean();
            for (BaselineKind kind : kAllBaselines) {
                SummaryRow row;
                row.algo = to_string(kind);
                row.seed = seed;
                const fs::path arm = dir / "arms" / (row.algo + "_s" + std::to_string(seed));
                try {
                    EvalLog log;
                    if (is_learned(kind)) {
                        ExperimentConfig ac = cfg;
                        ac.algo = kind;
                        ac.seeds = {seed};
                        const std::string arm_text = render_config(ac);
                        TrainResult r = detail::train_into(arm, ac, world, seed, arm_text);
                        write_text(arm / "config.ini", arm_text);
                        row.final_reward = detail::final_reward(r.episodes);
                        log = evaluate(r.state, world, cfg.env, eo);
                    } else {
                        log = evaluate_static(kind, world, cfg.env, eo);
                    }
                    write_text(arm / "eval.csv", eval_csv(log));
                    row.mean_rssi_dbm = log.mean();
                    row.std_rssi_dbm = log.stddev();
                    out << row.algo << " seed=" << seed << " mean_rssi_dbm=" << num(row.mean_rssi_dbm) << '\n';
                } catch (const std::exception& e) {
                    row.failed = true;
                    row.error = e.what();
                    any_failed = true;
                    err << "arm " << row.algo << " seed " << seed << " failed: " << e.what() << '\n';
                }
                rows.push_back(row);
            }
        }
        write_text(dir / "summary.csv", summary_csv(rows));

        std::map<std::string, std::pair<double, int>> means;
        for (const auto& r : rows)
            if (!r.failed) {
                means[r.algo].first += r.mean_rssi_dbm;
                means[r.algo].second += 1;
            }
        auto avg = [&](BaselineKind k) {
            const auto it = means.find(to_string(k));
            return it == means.end() || it->second.second == 0 ? std::numeric_limits<double>::quiet_NaN()
                                                                 : it->second.first / it->second.second;
        };
        double analytic_mean = 0.0;
        for (const auto& [s, v] : analytic) analytic_mean += v / static_cast<double>(analytic.size());
        std::ostringstream md;
        md << "# Comparison\n\n"
           << "Seeds: " << detail::join(cfg.seeds) << ". Episodes per learned arm: " << cfg.ppo.episodes
           << ". Evaluation: " << cfg.eval_steps << " steps per seed.\n\n"
           << "| algo | mean RSSI (dBm) | seeds ok |\n|---|---|---|\n";
        for (BaselineKind k : kAllBaselines) {
            const auto it = means.find(to_string(k));
            md << "| " << to_string(k) << " | " << num(avg(k)) << " | " << (it == means.end() ? 0 : it->second.second)
               << " |\n";
        }
        md << "| focusing reference | " << num(analytic_mean) << " | " << analytic.size() << " |\n\n";
        const double ma = avg(BaselineKind::beam_focusing_ma);
        const double sa = avg(BaselineKind::beam_focusing_sa);
        const double col = avg(BaselineKind::column_based_ma);
        const double flat = avg(BaselineKind::flat);
        const double none = avg(BaselineKind::none);
        const bool ordered = ma >= sa && ma >= col && std::min(sa, col) >= flat && flat >= none;
        md << "Ordering ma >= {sa, column} >= flat >= none: " << (ordered ? "holds" : "does not hold") << "\n";
        write_text(dir / "summary.md", md.str());

        json results = json::array();
        for (const auto& r : rows) {
            json j = {{"algo", r.algo}, {"seed", r.seed}, {"failed", r.failed}};
            if (r.failed)
                j["error"] = r.error;
            else
                j["mean_rssi_dbm"] = r.mean_rssi_dbm;
            results.push_back(j);
        }
        write_manifest(dir, "compare", text, results, clock.seconds());
        out << "summary " << (dir / "summary.csv").string() << " ordering " << (ordered ? "holds" : "does not hold")
            << '\n';
        return any_failed ? kExitRuntime : kExitOk;
    });
}

}  // namespace reflectsim::harness
