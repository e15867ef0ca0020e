#pragma once

// Single-bounce specular propagation: direct free-space path plus an
// incoherent sum over tiles, each re-radiating a cos^q lobe around its
// specular direction. Walls and cylinders only block; they do not reflect.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "reflectsim/errors.hpp"
#include "reflectsim/geometry.hpp"
#include "reflectsim/vec3.hpp"

namespace reflectsim {

inline constexpr double kSpeedOfLight = 299792458.0;

struct Material {
    std::string name;
    double reflection_coefficient = 0.0;
};

struct Box {
    Vec3 min;
    Vec3 max;

    bool empty() const { return min.x > max.x || min.y > max.y || min.z > max.z; }
    bool contains(const Vec3& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z;
    }
    Vec3 clamp(const Vec3& p) const {
        return {std::clamp(p.x, min.x, max.x), std::clamp(p.y, min.y, max.y), std::clamp(p.z, min.z, max.z)};
    }
    Vec3 center() const { return (min + max) * 0.5; }
    Vec3 extent() const { return max - min; }
};

struct Wall {
    std::string name;
    Box slab;
    Material material;
};

/// Vertical cylinder standing on `base_center`.
struct Cylinder {
    std::string name;
    Vec3 base_center;
    double radius = 0.0;
    double height = 0.0;
    Material material;
};

struct Scene {
    std::vector<Wall> walls;
    std::vector<Cylinder> obstacles;
    Vec3 ap_position;
    double frequency_hz = 60e9;
    double tx_power_mw = 5.0;
    double rx_height = 1.0;
    Box focal_region;
    /// Extent used to normalise positions into [-1, 1].
    Box bounds;

    double wavelength() const { return kSpeedOfLight / frequency_hz; }
    double tx_power_w() const { return tx_power_mw * 1e-3; }

    void validate() const {
        if (!(frequency_hz > 0.0)) throw InvalidConfiguration("scene: frequency must be positive");
        if (!(tx_power_mw > 0.0)) throw InvalidConfiguration("scene: transmit power must be positive");
        if (focal_region.empty()) throw InvalidConfiguration("scene: focal region is empty");
        if (bounds.empty()) throw InvalidConfiguration("scene: bounds are empty");
        for (const auto& w : walls) {
            if (w.slab.empty()) throw InvalidConfiguration("scene: wall '" + w.name + "' has an empty slab");
            if (w.material.reflection_coefficient < 0.0 || w.material.reflection_coefficient > 1.0)
                throw InvalidConfiguration("scene: material reflection coefficient outside [0,1]");
        }
        for (const auto& c : obstacles)
            if (!(c.radius > 0.0) || !(c.height > 0.0))
                throw InvalidConfiguration("scene: cylinder '" + c.name + "' needs positive radius and height");
    }
};

struct RadiationModel {
    double lobe_exponent = 140.0;
    double tile_reflectivity = 0.95;
    double noise_floor_dbm = -150.0;

    void validate() const {
        if (!(lobe_exponent > 0.0)) throw InvalidConfiguration("radiation: lobe exponent must be positive");
        if (tile_reflectivity < 0.0 || tile_reflectivity > 1.0)
            throw InvalidConfiguration("radiation: tile reflectivity outside [0,1]");
    }
};

namespace detail {

// Open parameter interval (lo, hi) of the line p + t*d inside the open slab.
inline bool clip_open_slab(double p, double d, double lo, double hi, double& t0, double& t1) {
    if (d == 0.0) return p > lo && p < hi;
    double a = (lo - p) / d;
    double b = (hi - p) / d;
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    return t0 < t1;
}

inline bool segment_hits_box(const Vec3& p, const Vec3& q, const Box& box) {
    const Vec3 d = q - p;
    double t0 = 0.0;
    double t1 = 1.0;
    for (int axis = 0; axis < 3; ++axis)
        if (!clip_open_slab(p[axis], d[axis], box.min[axis], box.max[axis], t0, t1)) return false;
    return true;
}

inline bool segment_hits_cylinder(const Vec3& p, const Vec3& q, const Cylinder& c) {
    const Vec3 d = q - p;
    double t0 = 0.0;
    double t1 = 1.0;
    if (!clip_open_slab(p.z, d.z, c.base_center.z, c.base_center.z + c.height, t0, t1)) return false;
    const double ox = p.x - c.base_center.x;
    const double oy = p.y - c.base_center.y;
    const double a = d.x * d.x + d.y * d.y;
    const double r2 = c.radius * c.radius;
    if (a == 0.0) return ox * ox + oy * oy < r2;
    const double b = 2.0 * (ox * d.x + oy * d.y);
    const double cc = ox * ox + oy * oy - r2;
    const double disc = b * b - 4.0 * a * cc;
    if (disc <= 0.0) return false;
    const double sq = std::sqrt(disc);
    t0 = std::max(t0, (-b - sq) / (2.0 * a));
    t1 = std::min(t1, (-b + sq) / (2.0 * a));
    return t0 < t1;
}

}  // namespace detail

/// True iff the open segment p->q passes through the interior of any wall
/// slab or cylinder. Touching a boundary does not block.
inline bool segment_blocked(const Vec3& p, const Vec3& q, const Scene& scene) {
    for (const auto& w : scene.walls)
        if (detail::segment_hits_box(p, q, w.slab)) return true;
    for (const auto& c : scene.obstacles)
        if (detail::segment_hits_cylinder(p, q, c)) return true;
    return false;
}

inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts / 1e-3); }
inline double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }

/// Tile state that does not depend on the receiver: power captured from the
/// AP after reflection loss and the specular outgoing direction.
struct IlluminatedTile {
    Vec3 position;
    Vec3 specular;
    double reflected_w = 0.0;  // 0 when shadowed or back-lit
};

inline IlluminatedTile illuminate(const TileGeom& tile, const Scene& scene, const RadiationModel& model) {
    IlluminatedTile out;
    out.position = tile.position;
    const Vec3 to_source = scene.ap_position - tile.position;
    const double d1 = norm(to_source);
    const double cos_i = dot(to_source, tile.normal) / d1;
    if (cos_i <= 0.0 || segment_blocked(scene.ap_position, tile.position, scene)) return out;
    out.specular = reflect(-to_source / d1, tile.normal);
    out.reflected_w = scene.tx_power_w() / (4.0 * kPi * d1 * d1) * tile.area * cos_i * model.tile_reflectivity;
    return out;
}

inline std::vector<IlluminatedTile> illuminate(std::span<const TileGeom> tiles, const Scene& scene,
                                               const RadiationModel& model) {
    std::vector<IlluminatedTile> out;
    out.reserve(tiles.size());
    for (const auto& t : tiles) out.push_back(illuminate(t, scene, model));
    return out;
}

/// Power delivered to `user` by one illuminated tile.
inline double received_from(const IlluminatedTile& tile, const Scene& scene, const Vec3& user,
                            const RadiationModel& model) {
    if (tile.reflected_w == 0.0) return 0.0;
    const Vec3 out_dir = user - tile.position;
    const double d2 = norm(out_dir);
    if (d2 == 0.0) throw InvalidArgument("tile_contribution: user coincides with tile centre");
    const double cos_a = dot(tile.specular, out_dir) / d2;
    if (cos_a <= 0.0) return 0.0;
    const double lobe = cos_a >= 1.0 ? 1.0 : std::pow(cos_a, model.lobe_exponent);
    if (lobe < 1e-300) return 0.0;
    if (segment_blocked(tile.position, user, scene)) return 0.0;
    const double lambda = scene.wavelength();
    const double q = model.lobe_exponent;
    return tile.reflected_w * ((q + 1.0) / (2.0 * kPi)) * lobe / (d2 * d2) * (lambda * lambda / (4.0 * kPi));
}

inline double tile_contribution(const TileGeom& tile, const Scene& scene, const Vec3& user,
                                const RadiationModel& model) {
    if (distance(user, tile.position) == 0.0)
        throw InvalidArgument("tile_contribution: user coincides with tile centre");
    return received_from(illuminate(tile, scene, model), scene, user, model);
}

inline double direct_watts(const Scene& scene, const Vec3& user) {
    const double d = distance(scene.ap_position, user);
    if (d == 0.0 || segment_blocked(scene.ap_position, user, scene)) return 0.0;
    const double k = scene.wavelength() / (4.0 * kPi * d);
    return scene.tx_power_w() * k * k;
}

inline double received_watts(const Scene& scene, std::span<const IlluminatedTile> tiles, const Vec3& user,
                             const RadiationModel& model) {
    double total = direct_watts(scene, user);
    for (const auto& t : tiles) total += received_from(t, scene, user, model);
    return total;
}

inline double power_to_rssi(double watts, const RadiationModel& model) {
    if (!(watts > 0.0)) return model.noise_floor_dbm;
    return std::max(watts_to_dbm(watts), model.noise_floor_dbm);
}

inline double rssi(const Scene& scene, std::span<const TileGeom> tiles, const Vec3& user, const RadiationModel& model) {
    const auto lit = illuminate(tiles, scene, model);
    return power_to_rssi(received_watts(scene, lit, user, model), model);
}

/// Copies `layout` tiles with the given normals.
inline std::vector<TileGeom> oriented_tiles(const ArrayLayout& layout, std::span<const Vec3> normals) {
    if (normals.size() != layout.size()) throw InvalidArgument("oriented_tiles: normal count does not match layout");
    std::vector<TileGeom> tiles = layout.tiles;
    for (std::size_t i = 0; i < tiles.size(); ++i) tiles[i].normal = normals[i];
    return tiles;
}

inline std::vector<Vec3> flat_configuration(const ArrayLayout& layout) {
    return std::vector<Vec3>(layout.size(), layout.plane.normal);
}

struct GridSpec {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 1.0;
    double y1 = 1.0;
    int nx = 2;
    int ny = 2;
};

/// RSSI samples on a regular grid at receiver height. Row-major: row j spans
/// x for y = y0 + j*dy. Samples include the rectangle corners.
struct Heatmap {
    GridSpec spec;
    double z = 0.0;
    std::vector<double> dbm;

    double x_at(int i) const { return spec.x0 + (spec.x1 - spec.x0) * i / (spec.nx - 1); }
    double y_at(int j) const { return spec.y0 + (spec.y1 - spec.y0) * j / (spec.ny - 1); }
    double at(int i, int j) const { return dbm[static_cast<std::size_t>(j) * spec.nx + i]; }
};

inline Heatmap heatmap(const Scene& scene, std::span<const TileGeom> tiles, const GridSpec& grid,
                       const RadiationModel& model) {
    if (grid.nx < 2 || grid.ny < 2) throw InvalidArgument("heatmap: resolution must be at least 2 per axis");
    if (!(grid.x1 > grid.x0) || !(grid.y1 > grid.y0)) throw InvalidArgument("heatmap: degenerate rectangle");
    Heatmap h;
    h.spec = grid;
    h.z = scene.rx_height;
    h.dbm.resize(static_cast<std::size_t>(grid.nx) * grid.ny);
    const auto lit = illuminate(tiles, scene, model);
    for (int j = 0; j < grid.ny; ++j)
        for (int i = 0; i < grid.nx; ++i) {
            const Vec3 p{h.x_at(i), h.y_at(j), scene.rx_height};
            double w = direct_watts(scene, p);
            for (const auto& t : lit)
                if (distance(p, t.position) > 0.0) w += received_from(t, scene, p, model);
            h.dbm[static_cast<std::size_t>(j) * grid.nx + i] = power_to_rssi(w, model);
        }
    return h;
}

}  // namespace reflectsim
