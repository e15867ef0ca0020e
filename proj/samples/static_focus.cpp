// Compares no reflector, a flat reflector and focal-point steering for the
// shadowed probe users of the default scene.

#include <cstdio>

#include "reflectsim/baselines.hpp"
#include "reflectsim/harness/config.hpp"

int main() {
    using namespace reflectsim;
    const auto cfg = harness::default_config();
    const World w = harness::build_world(cfg);
    const auto& users = cfg.probe_users;

    const auto none = static_eval(BaselineKind::none, w.scene, w.layout, users, w.radiation);
    const auto flat = static_eval(BaselineKind::flat, w.scene, w.layout, users, w.radiation);

    // each segment aims at its assigned user
    std::vector<FocalPoint> focal;
    for (int l = 0; l < cfg.env.num_agents; ++l)
        focal.push_back({users[static_cast<std::size_t>(cfg.env.assignment[static_cast<std::size_t>(l)])], l});
    const auto mapped = apply_focal_points(w.layout, focal, w.scene.ap_position, w.limits);
    const auto tiles = oriented_tiles(w.layout, mapped.normals);

    std::printf("%d tiles, %zu segments, %zu servo angles driven by %d focal coordinates\n",
                static_cast<int>(w.layout.size()), w.layout.num_segments(), w.layout.angle_parameter_count(),
                3 * cfg.env.num_agents);
    std::printf("%-22s %10s %10s %10s\n", "user", "none", "flat", "focused");
    for (std::size_t k = 0; k < users.size(); ++k) {
        char label[64];
        std::snprintf(label, sizeof label, "(%.1f, %.1f, %.1f)", users[k].x, users[k].y, users[k].z);
        std::printf("%-22s %10.2f %10.2f %10.2f\n", label, none[k], flat[k], rssi(w.scene, tiles, users[k], w.radiation));
    }
}
