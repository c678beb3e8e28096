#include "pcmae/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pcmae::geometry {

void validate(const PointCloud& cloud) {
    if (cloud.points.empty()) throw std::invalid_argument("point cloud is empty");
    for (std::size_t i = 0; i < cloud.points.size(); ++i)
        for (double v : cloud.points[i])
            if (!std::isfinite(v))
                throw std::invalid_argument("point " + std::to_string(i) + " has a non-finite coordinate");
}

std::vector<std::size_t> fps(const PointCloud& cloud, std::size_t n, std::size_t start) {
    const std::size_t p = cloud.size();
    if (n == 0 || n > p)
        throw std::invalid_argument("fps: need 1 <= n <= " + std::to_string(p) + ", got " +
                                    std::to_string(n));
    if (start >= p) throw std::invalid_argument("fps: start index out of range");

    std::vector<double> min_dist(p, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> picked;
    picked.reserve(n);
    std::size_t current = start;
    for (std::size_t t = 0; t < n; ++t) {
        picked.push_back(current);
        min_dist[current] = -1.0;  // never re-selected
        const Vec3& c = cloud.points[current];
        std::size_t best = p;
        double best_d = -1.0;
        for (std::size_t i = 0; i < p; ++i) {
            if (min_dist[i] < 0.0) continue;
            min_dist[i] = std::min(min_dist[i], squared_distance(cloud.points[i], c));
            if (min_dist[i] > best_d) {
                best_d = min_dist[i];
                best = i;
            }
        }
        current = best;
    }
    return picked;
}

std::vector<std::size_t> knn(const PointCloud& cloud, std::span<const std::size_t> centers,
                             std::size_t k) {
    const std::size_t p = cloud.size();
    if (k == 0 || k > p)
        throw std::invalid_argument("knn: need 1 <= k <= " + std::to_string(p) + ", got " +
                                    std::to_string(k));
    std::vector<std::size_t> out;
    out.reserve(centers.size() * k);
    std::vector<std::pair<double, std::size_t>> cand(p);
    for (std::size_t c : centers) {
        if (c >= p) throw std::invalid_argument("knn: center index out of range");
        const Vec3& q = cloud.points[c];
        for (std::size_t i = 0; i < p; ++i) cand[i] = {squared_distance(cloud.points[i], q), i};
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
        for (std::size_t j = 0; j < k; ++j) out.push_back(cand[j].second);
    }
    return out;
}

PatchSet group_and_center(const PointCloud& cloud, std::span<const std::size_t> centers,
                          std::span<const std::size_t> neighbor_idx, std::size_t k) {
    if (k == 0 || neighbor_idx.size() != centers.size() * k)
        throw std::invalid_argument("group_and_center: neighbor table is not n x k");
    PatchSet ps;
    ps.k = k;
    ps.centers.reserve(centers.size());
    for (std::size_t c : centers) ps.centers.push_back(cloud.points.at(c));
    ps.neighbor_idx.assign(neighbor_idx.begin(), neighbor_idx.end());
    ps.patches.resize(neighbor_idx.size());
    for (std::size_t i = 0; i < centers.size(); ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const Vec3& pt = cloud.points.at(neighbor_idx[i * k + j]);
            const Vec3& c = ps.centers[i];
            ps.patches[i * k + j] = {pt[0] - c[0], pt[1] - c[1], pt[2] - c[2]};
        }
    return ps;
}

PatchSet make_patches(const PointCloud& cloud, std::size_t n, std::size_t k, std::size_t start) {
    const auto centers = fps(cloud, n, start);
    const auto neighbors = knn(cloud, centers, k);
    return group_and_center(cloud, centers, neighbors, k);
}

PointCloud normalize_cloud(PointCloud cloud) {
    validate(cloud);
    Vec3 centroid{0, 0, 0};
    for (const Vec3& p : cloud.points)
        for (int a = 0; a < 3; ++a) centroid[a] += p[a];
    for (double& v : centroid) v /= static_cast<double>(cloud.size());
    double max_norm = 0;
    for (Vec3& p : cloud.points) {
        for (int a = 0; a < 3; ++a) p[a] -= centroid[a];
        max_norm = std::max(max_norm, std::sqrt(squared_norm(p)));
    }
    const double scale = std::sqrt(squared_norm(centroid)) + 1.0;
    if (max_norm <= 1e-12 * scale) {
        for (Vec3& p : cloud.points) p = {0, 0, 0};
        return cloud;
    }
    for (Vec3& p : cloud.points)
        for (double& v : p) v /= max_norm;
    return cloud;
}

namespace {

std::vector<std::size_t> nearest_each(std::span<const Vec3> from, std::span<const Vec3> to) {
    std::vector<std::size_t> idx(from.size());
    for (std::size_t i = 0; i < from.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < to.size(); ++j) {
            const double d = squared_distance(from[i], to[j]);
            if (d < best) {
                best = d;
                idx[i] = j;
            }
        }
    }
    return idx;
}

}  // namespace

Correspondences chamfer_correspondences(std::span<const Vec3> r, std::span<const Vec3> g) {
    if (r.empty() || g.empty()) throw std::invalid_argument("chamfer_correspondences: empty point set");
    return {nearest_each(r, g), nearest_each(g, r)};
}

}  // namespace pcmae::geometry
