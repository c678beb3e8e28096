#pragma once

#include "pcmae/geometry.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace pcmae::data {

/// Procedural surface families. Parameter ranges (before normalization):
///   sphere       radius a in [0.5, 1.0]
///   box          half-extents a, b, c in [0.3, 1.0]
///   cylinder     radius a in [0.3, 0.6], half-height b in [0.5, 1.0], capped
///   torus        major radius a in [0.6, 0.9], tube radius b in [0.15, 0.3]
///   cone         base radius a in [0.4, 0.8], height b in [0.8, 1.5], with base
///   two_spheres  radii a, b in [0.3, 0.6] along x with gap c in [0.1, 0.5]
///   l_bracket    plate lengths a, b in [0.6, 1.2], common width c in [0.4, 1.0]
///   plane        side lengths a, b in [0.5, 1.5]
enum class Family { sphere, box, cylinder, torus, cone, two_spheres, l_bracket, plane };

inline constexpr std::array<Family, 8> kAllFamilies = {Family::sphere,   Family::box,         Family::cylinder,
                                                       Family::torus,    Family::cone,        Family::two_spheres,
                                                       Family::l_bracket, Family::plane};

/// Accepts the names printed by `to_string` ("two-spheres", "L-bracket", ...),
/// case-insensitively and with '_' for '-'. Throws std::invalid_argument.
Family parse_family(std::string_view name);
std::string_view to_string(Family family);

struct ShapeSpec {
    Family family = Family::sphere;
    std::size_t points = 1024;
    /// Fraction of each documented parameter interval actually used, centered
    /// on its midpoint. 0 fixes every parameter at the midpoint.
    double jitter = 1.0;
};

struct RawShape {
    geometry::PointCloud cloud;   // not normalized
    std::array<double, 3> params{};  // a, b, c as documented on Family
};

/// Seeded area-uniform surface sample in the family's canonical frame.
RawShape generate_raw_shape(const ShapeSpec& spec, std::uint64_t seed);

/// generate_raw_shape followed by normalize_cloud.
geometry::PointCloud generate_shape(const ShapeSpec& spec, std::uint64_t seed);

}  // namespace pcmae::data
