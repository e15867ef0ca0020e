#pragma once

// Reflector-array kinematics: hexagonal layout, mirror normals from focal
// points, azimuth/elevation extraction and servo-limit clamping.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "reflectsim/errors.hpp"
#include "reflectsim/vec3.hpp"

namespace reflectsim {

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
    double w = std::remainder(a, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

struct AngleLimits {
    double phi_min = -kPi / 3.0;
    double phi_max = kPi / 3.0;
    double theta_min = kPi / 6.0;
    double theta_max = 5.0 * kPi / 6.0;

    void validate() const {
        if (!(phi_min <= phi_max) || !(theta_min <= theta_max))
            throw InvalidConfiguration("angle limits: min exceeds max");
        if (theta_min < 0.0 || theta_max > kPi)
            throw InvalidConfiguration("angle limits: theta bounds must lie in [0, pi]");
        if (phi_min <= -kPi || phi_max > kPi)
            throw InvalidConfiguration("angle limits: phi bounds must lie in (-pi, pi]");
    }
};

struct TileAngles {
    double phi = 0.0;
    double theta = 0.0;
};

struct TileGeom {
    Vec3 position;
    Vec3 normal;
    int row = 0;
    int col = 0;
    double area = 0.0;
};

/// Mounting plane of the array. `u` runs along rows (tile row index grows
/// along u), `v` along columns, `normal` is the rest orientation of every tile.
struct BasePlane {
    Vec3 origin;
    Vec3 u{0.0, 0.0, 1.0};
    Vec3 v{0.0, 1.0, 0.0};
    Vec3 normal{1.0, 0.0, 0.0};

    bool orthonormal(double tol = 1e-9) const {
        auto unit = [tol](const Vec3& a) { return std::abs(norm(a) - 1.0) <= tol; };
        return unit(u) && unit(v) && unit(normal) && std::abs(dot(u, v)) <= tol &&
               std::abs(dot(u, normal)) <= tol && std::abs(dot(v, normal)) <= tol;
    }
};

enum class SegmentShape { rows, columns };

inline std::string to_string(SegmentShape s) { return s == SegmentShape::rows ? "rows" : "columns"; }

inline SegmentShape segment_shape_from_string(const std::string& s) {
    if (s == "rows") return SegmentShape::rows;
    if (s == "columns") return SegmentShape::columns;
    throw InvalidConfiguration("unknown segment shape '" + s + "' (expected rows|columns)");
}

struct ArrayLayout {
    std::vector<TileGeom> tiles;
    int rows = 0;
    int cols = 0;
    double pitch = 0.0;
    BasePlane plane;
    std::vector<std::vector<std::size_t>> segments;

    std::size_t size() const { return tiles.size(); }
    std::size_t num_segments() const { return segments.size(); }

    /// Number of independent servo angles when every tile is driven directly.
    std::size_t angle_parameter_count() const { return 2 * tiles.size(); }

    Vec3 segment_centroid(std::size_t segment) const {
        Vec3 c;
        for (auto idx : segments.at(segment)) c += tiles[idx].position;
        return c / static_cast<double>(segments[segment].size());
    }

    Vec3 centroid() const {
        Vec3 c;
        for (const auto& t : tiles) c += t.position;
        return c / static_cast<double>(tiles.size());
    }
};

/// Slices the array into `count` contiguous bands of rows or columns. Bands
/// differ in size by at most one line when the split is uneven.
inline void partition_segments(ArrayLayout& layout, int count, SegmentShape shape) {
    const int lines = shape == SegmentShape::rows ? layout.rows : layout.cols;
    if (count < 1 || count > lines)
        throw InvalidConfiguration("segment count must be in [1, " + std::to_string(lines) + "]");
    std::vector<int> line_to_segment(static_cast<std::size_t>(lines));
    const int base = lines / count;
    const int extra = lines % count;
    int line = 0;
    for (int s = 0; s < count; ++s) {
        const int width = base + (s < extra ? 1 : 0);
        for (int k = 0; k < width; ++k) line_to_segment[static_cast<std::size_t>(line++)] = s;
    }
    layout.segments.assign(static_cast<std::size_t>(count), {});
    for (std::size_t i = 0; i < layout.tiles.size(); ++i) {
        const auto& t = layout.tiles[i];
        const int key = shape == SegmentShape::rows ? t.row : t.col;
        layout.segments[static_cast<std::size_t>(line_to_segment[static_cast<std::size_t>(key)])]
            .push_back(i);
    }
}

/// Offset-row hexagonal packing. Odd rows shift half a pitch along v; rows are
/// pitch*sqrt(3)/2 apart along u. The whole array starts as one segment.
inline ArrayLayout hex_layout(int rows, int cols, double pitch, const BasePlane& plane) {
    if (rows < 1 || cols < 1) throw InvalidConfiguration("hex_layout: rows and cols must be >= 1");
    if (!(pitch > 0.0)) throw InvalidConfiguration("hex_layout: pitch must be positive");
    if (!plane.orthonormal()) throw InvalidConfiguration("hex_layout: plane axes are not orthonormal");

    ArrayLayout layout;
    layout.rows = rows;
    layout.cols = cols;
    layout.pitch = pitch;
    layout.plane = plane;
    const double row_step = pitch * std::sqrt(3.0) / 2.0;
    const double area = std::sqrt(3.0) / 2.0 * pitch * pitch;
    layout.tiles.reserve(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double along_v = c * pitch + (r % 2) * pitch / 2.0;
            TileGeom t;
            t.position = plane.origin + plane.v * along_v + plane.u * (r * row_step);
            t.normal = plane.normal;
            t.row = r;
            t.col = c;
            t.area = area;
            layout.tiles.push_back(t);
        }
    }
    layout.segments.assign(1, {});
    for (std::size_t i = 0; i < layout.tiles.size(); ++i) layout.segments[0].push_back(i);
    return layout;
}

/// Plane whose rest normal points at (azimuth, elevation) and whose tile block
/// is centred on `center`. `u` is the in-plane upward axis, `v` is horizontal.
inline BasePlane centered_plane(const Vec3& center, double azimuth, double elevation, int rows, int cols,
                                double pitch) {
    BasePlane p;
    p.normal = {std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
                std::sin(elevation)};
    const Vec3 up{0.0, 0.0, 1.0};
    const Vec3 u_raw = up - p.normal * dot(up, p.normal);
    if (norm(u_raw) < 1e-9) throw InvalidConfiguration("centered_plane: vertical rest normal has no up axis");
    p.u = normalized(u_raw);
    p.v = normalized(cross(p.normal, p.u));
    const double width = (cols - 1) * pitch + (rows > 1 ? pitch / 2.0 : 0.0);
    const double height = (rows - 1) * pitch * std::sqrt(3.0) / 2.0;
    p.origin = center - p.v * (width / 2.0) - p.u * (height / 2.0);
    return p;
}

/// Mirror normal at `r` that reflects a ray from `s` through `f`.
inline Vec3 bisector_normal(const Vec3& s, const Vec3& r, const Vec3& f) {
    const double ds = distance(s, r);
    const double df = distance(f, r);
    if (ds == 0.0 || df == 0.0) throw InvalidArgument("bisector_normal: source or focal point coincides with tile");
    const Vec3 half = ((s - r) / ds + (f - r) / df) * 0.5;
    const double len = norm(half);
    if (len < 1e-12) throw DegenerateBisector("bisector_normal: source and focal directions are opposite");
    return half / len;
}

inline TileAngles normal_to_angles(const Vec3& n) {
    if (std::abs(norm(n) - 1.0) > 1e-9) throw InvalidArgument("normal_to_angles: normal is not unit length");
    TileAngles a;
    a.phi = (std::abs(n.x) < 1e-12 && std::abs(n.y) < 1e-12) ? 0.0 : std::atan2(n.y, n.x);
    a.theta = std::acos(std::clamp(n.z, -1.0, 1.0));
    return a;
}

inline Vec3 angles_to_normal(double phi, double theta) {
    const double st = std::sin(theta);
    return {st * std::cos(phi), st * std::sin(phi), std::cos(theta)};
}

inline Vec3 angles_to_normal(const TileAngles& a) { return angles_to_normal(a.phi, a.theta); }

inline TileAngles clamp_angles(double phi, double theta, const AngleLimits& limits) {
    return {std::clamp(phi, limits.phi_min, limits.phi_max), std::clamp(theta, limits.theta_min, limits.theta_max)};
}

/// Specular reflection of direction d about unit normal n.
inline Vec3 reflect(const Vec3& d, const Vec3& n) { return d - n * (2.0 * dot(d, n)); }

struct FocalPoint {
    Vec3 position;
    int agent_id = 0;
};

/// Per-tile angles for a focal configuration, before normals are rebuilt.
/// Azimuth limits are relative to the rest azimuth of the mounting plane.
struct FocalAngles {
    std::vector<TileAngles> angles;
    std::vector<std::size_t> degenerate_tiles;
};

inline double rest_azimuth(const ArrayLayout& layout) { return normal_to_angles(layout.plane.normal).phi; }

inline FocalAngles focal_tile_angles(const ArrayLayout& layout, std::span<const FocalPoint> focal, const Vec3& source,
                                     const AngleLimits& limits) {
    if (focal.size() != layout.num_segments())
        throw InvalidArgument("apply_focal_points: need exactly one focal point per segment");
    const double rest_phi = rest_azimuth(layout);
    const TileAngles rest = normal_to_angles(layout.plane.normal);

    FocalAngles out;
    out.angles.assign(layout.size(), rest);
    for (const auto& fp : focal) {
        if (fp.agent_id < 0 || static_cast<std::size_t>(fp.agent_id) >= layout.num_segments())
            throw InvalidArgument("apply_focal_points: focal point agent id out of range");
        for (auto idx : layout.segments[static_cast<std::size_t>(fp.agent_id)]) {
            Vec3 n;
            try {
                n = bisector_normal(source, layout.tiles[idx].position, fp.position);
            } catch (const DegenerateBisector&) {
                out.degenerate_tiles.push_back(idx);
                continue;
            }
            const TileAngles ideal = normal_to_angles(n);
            const TileAngles c = clamp_angles(wrap_angle(ideal.phi - rest_phi), ideal.theta, limits);
            out.angles[idx] = {wrap_angle(c.phi + rest_phi), c.theta};
        }
    }
    return out;
}

/// Normals for each tile. Degenerate tiles keep the rest normal exactly.
inline std::vector<Vec3> normals_from_angles(const ArrayLayout& layout, const FocalAngles& fa) {
    std::vector<Vec3> normals(fa.angles.size());
    for (std::size_t i = 0; i < fa.angles.size(); ++i) normals[i] = angles_to_normal(fa.angles[i]);
    for (auto idx : fa.degenerate_tiles) normals[idx] = layout.plane.normal;
    return normals;
}

struct FocalMapping {
    std::vector<Vec3> normals;
    std::vector<std::size_t> degenerate_tiles;
};

inline FocalMapping apply_focal_points(const ArrayLayout& layout, std::span<const FocalPoint> focal,
                                       const Vec3& source, const AngleLimits& limits) {
    FocalAngles fa = focal_tile_angles(layout, focal, source, limits);
    return {normals_from_angles(layout, fa), std::move(fa.degenerate_tiles)};
}

/// Column-level azimuth: each column takes the circular mean of its tiles'
/// azimuths. Elevations are left untouched.
inline std::vector<TileAngles> column_constrain(std::span<const TileAngles> angles, const ArrayLayout& layout) {
    if (angles.size() != layout.size()) throw InvalidArgument("column_constrain: angle count does not match layout");
    std::vector<double> sum_sin(static_cast<std::size_t>(layout.cols), 0.0);
    std::vector<double> sum_cos(static_cast<std::size_t>(layout.cols), 0.0);
    for (std::size_t i = 0; i < angles.size(); ++i) {
        const auto c = static_cast<std::size_t>(layout.tiles[i].col);
        sum_sin[c] += std::sin(angles[i].phi);
        sum_cos[c] += std::cos(angles[i].phi);
    }
    std::vector<TileAngles> out(angles.begin(), angles.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto c = static_cast<std::size_t>(layout.tiles[i].col);
        out[i].phi = std::atan2(sum_sin[c], sum_cos[c]);
    }
    return out;
}

}  // namespace reflectsim
