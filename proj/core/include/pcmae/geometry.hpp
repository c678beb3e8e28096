#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace pcmae::geometry {

using Vec3 = std::array<double, 3>;

inline double squared_distance(const Vec3& a, const Vec3& b) noexcept {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

inline double squared_norm(const Vec3& a) noexcept { return a[0] * a[0] + a[1] * a[1] + a[2] * a[2]; }

struct PointCloud {
    std::vector<Vec3> points;
    std::optional<int> label;

    std::size_t size() const noexcept { return points.size(); }
};

/// n center points plus n x k center-relative neighbourhoods, row-major.
struct PatchSet {
    std::vector<Vec3> centers;              // n
    std::vector<std::size_t> neighbor_idx;  // n * k, indices into the source cloud
    std::vector<Vec3> patches;              // n * k, points[neighbor_idx] - center
    std::size_t k = 0;

    std::size_t n() const noexcept { return centers.size(); }
    std::span<const Vec3> patch(std::size_t i) const {
        return std::span<const Vec3>(patches).subspan(i * k, k);
    }
};

/// Throws std::invalid_argument for empty clouds or non-finite coordinates.
void validate(const PointCloud& cloud);

/// Greedy max-min farthest point sampling starting at `start`. Ties go to the
/// lowest index; the result never repeats an index.
std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t n, std::size_t start = 0);

/// For each center, the k nearest cloud points by squared distance (the center
/// itself included), ties by lowest index, ascending distance. Row-major n x k.
std::vector<std::size_t> knn(const PointCloud& cloud, std::span<const std::size_t> centers,
                             std::size_t k);

PatchSet group_and_center(const PointCloud& cloud, std::span<const std::size_t> centers,
                          std::span<const std::size_t> neighbor_idx, std::size_t k);

/// fps -> knn -> group_and_center.
PatchSet make_patches(const PointCloud& cloud, std::size_t n, std::size_t k, std::size_t start = 0);

/// Centroid to origin, then scale so the farthest point has unit norm. A cloud
/// of identical points maps to all zeros.
PointCloud normalize_cloud(PointCloud cloud);

struct Correspondences {
    std::vector<std::size_t> r_to_g;  // nearest g for each r
    std::vector<std::size_t> g_to_r;  // nearest r for each g
};

/// Nearest neighbour in the other set, both directions; ties to lowest index.
Correspondences chamfer_correspondences(std::span<const Vec3> r, std::span<const Vec3> g);

}  // namespace pcmae::geometry
