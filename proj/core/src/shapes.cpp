#include "pcmae/shapes.hpp"

#include "pcmae/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcmae::data {

namespace {

using geometry::Vec3;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Range {
    double lo, hi;
};

double draw(Rng& rng, Range r, double jitter) {
    const double mid = 0.5 * (r.lo + r.hi), half = 0.5 * (r.hi - r.lo) * jitter;
    return rng.uniform(mid - half, mid + half);
}

Vec3 unit_vector(Rng& rng) {
    for (;;) {
        const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
        const double n = std::sqrt(geometry::squared_norm(v));
        if (n > 1e-12) return {v[0] / n, v[1] / n, v[2] / n};
    }
}

/// Index into `areas` drawn proportionally to area.
std::size_t pick(Rng& rng, const std::vector<double>& areas) {
    double total = 0;
    for (double a : areas) total += a;
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i + 1 < areas.size(); ++i) {
        if (u < areas[i]) return i;
        u -= areas[i];
    }
    return areas.size() - 1;
}

/// Uniform point on a disk of radius r in the xz-plane at height y.
Vec3 disk(Rng& rng, double r, double y) {
    const double rho = r * std::sqrt(rng.uniform()), t = kTwoPi * rng.uniform();
    return {rho * std::cos(t), y, rho * std::sin(t)};
}

Vec3 sphere_point(Rng& rng, double r, double cx) {
    const Vec3 u = unit_vector(rng);
    return {cx + r * u[0], r * u[1], r * u[2]};
}

Vec3 box_point(Rng& rng, double a, double b, double c) {
    // Faces normal to x, y, z; each pair has area 4*(other two extents).
    const std::size_t f = pick(rng, {b * c, b * c, a * c, a * c, a * b, a * b});
    const double sign = (f % 2 == 0) ? 1.0 : -1.0;
    const double u = rng.uniform(-1, 1), v = rng.uniform(-1, 1);
    switch (f / 2) {
        case 0: return {sign * a, u * b, v * c};
        case 1: return {u * a, sign * b, v * c};
        default: return {u * a, v * b, sign * c};
    }
}

Vec3 cylinder_point(Rng& rng, double r, double h) {
    const double side = kTwoPi * r * 2 * h, cap = std::numbers::pi * r * r;
    switch (pick(rng, {side, cap, cap})) {
        case 0: {
            const double t = kTwoPi * rng.uniform();
            return {r * std::cos(t), rng.uniform(-h, h), r * std::sin(t)};
        }
        case 1: return disk(rng, r, h);
        default: return disk(rng, r, -h);
    }
}

Vec3 torus_point(Rng& rng, double big, double small) {
    // The area element is proportional to (big + small cos v); rejection on v.
    const double u = kTwoPi * rng.uniform();
    double v = 0;
    for (;;) {
        v = kTwoPi * rng.uniform();
        if (rng.uniform() * (big + small) <= big + small * std::cos(v)) break;
    }
    const double ring = big + small * std::cos(v);
    return {ring * std::cos(u), small * std::sin(v), ring * std::sin(u)};
}

Vec3 cone_point(Rng& rng, double r, double h) {
    // Apex at y = h, base at y = 0. Lateral area grows linearly with the
    // distance from the apex, hence the square root.
    const double slant = std::sqrt(r * r + h * h);
    const double lateral = std::numbers::pi * r * slant, base = std::numbers::pi * r * r;
    if (pick(rng, {lateral, base}) == 1) return disk(rng, r, 0.0);
    const double s = std::sqrt(rng.uniform()), t = kTwoPi * rng.uniform();
    return {s * r * std::cos(t), h * (1 - s), s * r * std::sin(t)};
}

Vec3 two_spheres_point(Rng& rng, double r1, double r2, double gap) {
    const double c1 = -(r1 + 0.5 * gap), c2 = r2 + 0.5 * gap;
    return pick(rng, {r1 * r1, r2 * r2}) == 0 ? sphere_point(rng, r1, c1) : sphere_point(rng, r2, c2);
}

Vec3 l_bracket_point(Rng& rng, double a, double b, double w) {
    // Horizontal plate along +x (y = 0) and vertical plate along +y (x = 0),
    // sharing the edge x = y = 0; both span z in [-w/2, w/2].
    const double z = rng.uniform(-0.5 * w, 0.5 * w);
    if (pick(rng, {a, b}) == 0) return {a * rng.uniform(), 0.0, z};
    return {0.0, b * rng.uniform(), z};
}

Vec3 plane_point(Rng& rng, double a, double b) {
    return {rng.uniform(-0.5 * a, 0.5 * a), 0.0, rng.uniform(-0.5 * b, 0.5 * b)};
}

std::string canonical(std::string_view name) {
    std::string s;
    for (char ch : name) s.push_back(ch == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    return s;
}

}  // namespace

Family parse_family(std::string_view name) {
    const auto c = canonical(name);
    for (Family f : kAllFamilies)
        if (canonical(to_string(f)) == c) return f;
    throw std::invalid_argument("unknown shape family '" + std::string(name) +
                                "' (expected sphere, box, cylinder, torus, cone, two-spheres, L-bracket, plane)");
}

std::string_view to_string(Family family) {
    switch (family) {
        case Family::sphere: return "sphere";
        case Family::box: return "box";
        case Family::cylinder: return "cylinder";
        case Family::torus: return "torus";
        case Family::cone: return "cone";
        case Family::two_spheres: return "two-spheres";
        case Family::l_bracket: return "L-bracket";
        case Family::plane: return "plane";
    }
    throw std::invalid_argument("unknown shape family value");
}

RawShape generate_raw_shape(const ShapeSpec& spec, std::uint64_t seed) {
    if (spec.points == 0) throw std::invalid_argument("generate_shape: points must be >= 1");
    if (!(spec.jitter >= 0.0 && spec.jitter <= 1.0))
        throw std::invalid_argument("generate_shape: jitter must lie in [0, 1]");
    Rng rng(seed);
    const double j = spec.jitter;
    RawShape out;
    auto& p = out.params;
    switch (spec.family) {
        case Family::sphere: p = {draw(rng, {0.5, 1.0}, j), 0, 0}; break;
        case Family::box: p = {draw(rng, {0.3, 1.0}, j), draw(rng, {0.3, 1.0}, j), draw(rng, {0.3, 1.0}, j)}; break;
        case Family::cylinder: p = {draw(rng, {0.3, 0.6}, j), draw(rng, {0.5, 1.0}, j), 0}; break;
        case Family::torus: p = {draw(rng, {0.6, 0.9}, j), draw(rng, {0.15, 0.3}, j), 0}; break;
        case Family::cone: p = {draw(rng, {0.4, 0.8}, j), draw(rng, {0.8, 1.5}, j), 0}; break;
        case Family::two_spheres:
            p = {draw(rng, {0.3, 0.6}, j), draw(rng, {0.3, 0.6}, j), draw(rng, {0.1, 0.5}, j)};
            break;
        case Family::l_bracket:
            p = {draw(rng, {0.6, 1.2}, j), draw(rng, {0.6, 1.2}, j), draw(rng, {0.4, 1.0}, j)};
            break;
        case Family::plane: p = {draw(rng, {0.5, 1.5}, j), draw(rng, {0.5, 1.5}, j), 0}; break;
    }
    out.cloud.points.reserve(spec.points);
    for (std::size_t i = 0; i < spec.points; ++i) {
        Vec3 v{};
        switch (spec.family) {
            case Family::sphere: v = sphere_point(rng, p[0], 0.0); break;
            case Family::box: v = box_point(rng, p[0], p[1], p[2]); break;
            case Family::cylinder: v = cylinder_point(rng, p[0], p[1]); break;
            case Family::torus: v = torus_point(rng, p[0], p[1]); break;
            case Family::cone: v = cone_point(rng, p[0], p[1]); break;
            case Family::two_spheres: v = two_spheres_point(rng, p[0], p[1], p[2]); break;
            case Family::l_bracket: v = l_bracket_point(rng, p[0], p[1], p[2]); break;
            case Family::plane: v = plane_point(rng, p[0], p[1]); break;
        }
        out.cloud.points.push_back(v);
    }
    return out;
}

geometry::PointCloud generate_shape(const ShapeSpec& spec, std::uint64_t seed) {
    return geometry::normalize_cloud(generate_raw_shape(spec, seed).cloud);
}

}  // namespace pcmae::data
