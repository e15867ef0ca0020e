// Independent scalar evaluation of the single-tile power formula, written
// without the library's vector helpers.

#include <cmath>

#include <gtest/gtest.h>

#include "reflectsim/propagation.hpp"

namespace {

double oracle_power(const double s[3], const double r[3], const double n[3], const double u[3], double area,
                    double gamma, double q, double pt_w, double freq) {
    const double pi = 3.14159265358979323846;
    double in[3], out[3];
    double d1 = 0, d2 = 0;
    for (int i = 0; i < 3; ++i) {
        in[i] = r[i] - s[i];
        out[i] = u[i] - r[i];
        d1 += in[i] * in[i];
        d2 += out[i] * out[i];
    }
    d1 = std::sqrt(d1);
    d2 = std::sqrt(d2);
    double cos_i = 0, dn = 0;
    for (int i = 0; i < 3; ++i) {
        cos_i += -in[i] / d1 * n[i];
        dn += in[i] / d1 * n[i];
    }
    double spec[3], cos_a = 0;
    for (int i = 0; i < 3; ++i) spec[i] = in[i] / d1 - 2 * dn * n[i];
    for (int i = 0; i < 3; ++i) cos_a += spec[i] * out[i] / d2;
    if (cos_i <= 0 || cos_a <= 0) return 0.0;
    const double lambda = 299792458.0 / freq;
    return pt_w / (4 * pi * d1 * d1) * area * cos_i * gamma * ((q + 1) / (2 * pi)) * std::pow(cos_a, q) / (d2 * d2) *
           (lambda * lambda / (4 * pi));
}

}  // namespace

TEST(PropagationOracle, FixedGeometryMatchesFormula) {
    using namespace reflectsim;
    Scene scene;
    scene.ap_position = {1.0, 1.5, 2.0};
    scene.focal_region = {{0, 0, 0}, {10, 10, 3}};
    scene.bounds = scene.focal_region;
    const double s[3] = {1.0, 1.5, 2.0};
    const double r[3] = {9.8, 3.4, 2.4};
    const double u[3] = {8.6, 6.9, 1.0};
    // normal bisecting the two legs, nudged so the lobe is off-peak
    double n[3];
    {
        double a[3], b[3], la = 0, lb = 0;
        for (int i = 0; i < 3; ++i) {
            a[i] = s[i] - r[i];
            b[i] = u[i] - r[i] + (i == 1 ? 0.15 : 0.0);
            la += a[i] * a[i];
            lb += b[i] * b[i];
        }
        double len = 0;
        for (int i = 0; i < 3; ++i) {
            n[i] = a[i] / std::sqrt(la) + b[i] / std::sqrt(lb);
            len += n[i] * n[i];
        }
        for (double& v : n) v /= std::sqrt(len);
    }
    const double area = std::sqrt(3.0) / 2.0 * 0.05 * 0.05;

    TileGeom tile;
    tile.position = {r[0], r[1], r[2]};
    tile.normal = {n[0], n[1], n[2]};
    tile.area = area;
    RadiationModel model;
    const double got = tile_contribution(tile, scene, {u[0], u[1], u[2]}, model);
    const double want = oracle_power(s, r, n, u, area, 0.95, 140.0, 5e-3, 60e9);
    ASSERT_GT(want, 0.0);
    EXPECT_NEAR(got / want, 1.0, 1e-12);

    model.lobe_exponent = 20.0;
    model.tile_reflectivity = 0.5;
    const double got2 = tile_contribution(tile, scene, {u[0], u[1], u[2]}, model);
    EXPECT_NEAR(got2 / oracle_power(s, r, n, u, area, 0.5, 20.0, 5e-3, 60e9), 1.0, 1e-12);
}
