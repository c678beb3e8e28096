#include "test_util.hpp"

#include "pcmae/geometry.hpp"
#include "pcmae/oracles.hpp"

#include <doctest.h>

#include <numeric>
#include <set>

using namespace pcmae::geometry;

namespace {

PointCloud line_cloud(std::vector<double> xs) {
    PointCloud c;
    for (double x : xs) c.points.push_back({x, 0, 0});
    return c;
}

}  // namespace

TEST_CASE("fps picks greedy max-min points on a line") {
    const auto c = line_cloud({0, 1, 3, 7});
    CHECK(fps(c, 3) == std::vector<std::size_t>{0, 3, 2});
    CHECK(fps(c, 1, 2) == std::vector<std::size_t>{2});
    CHECK(fps(c, 4, 3) == std::vector<std::size_t>{3, 0, 2, 1});
}

TEST_CASE("fps breaks ties toward the lowest index") {
    const auto c = line_cloud({0, -1, 1});
    CHECK(fps(c, 2) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("fps rejects impossible requests") {
    const auto c = line_cloud({0, 1});
    CHECK_THROWS(fps(c, 3));
    CHECK_THROWS(fps(c, 1, 5));
    CHECK_THROWS(fps(PointCloud{}, 1));
}

TEST_CASE("knn orders by distance with index tie-break and includes the center") {
    const auto c = line_cloud({0, 1, -1, 2, 5});
    const std::size_t centers[] = {0, 4};
    const auto nn = knn(c, std::span<const std::size_t>(centers), 3);
    CHECK(nn == std::vector<std::size_t>{0, 1, 2, 4, 3, 1});
}

TEST_CASE("group_and_center subtracts the center point") {
    const auto c = line_cloud({0, 1, -1, 2, 5});
    const auto p = make_patches(c, 2, 2);
    REQUIRE(p.n() == 2);
    CHECK(p.k == 2);
    // fps from 0: 0 then 5 (index 4)
    CHECK(p.centers[1][0] == 5);
    CHECK(p.patch(1)[0][0] == 0);
    CHECK(p.patch(1)[1][0] == -3);
}

TEST_CASE("normalize_cloud centers and scales to the unit sphere") {
    PointCloud c;
    c.points = {{1, 1, 1}, {3, 1, 1}, {1, 5, 1}};
    const auto n = normalize_cloud(c);
    Vec3 mean{0, 0, 0};
    double far = 0;
    for (const auto& p : n.points) {
        for (int d = 0; d < 3; ++d) mean[d] += p[d] / 3;
        far = std::max(far, std::sqrt(squared_norm(p)));
    }
    CHECK(mean[0] == doctest::Approx(0).scale(1));
    CHECK(mean[1] == doctest::Approx(0).scale(1));
    CHECK(far == doctest::Approx(1.0));
    PointCloud same;
    same.points.assign(4, {2, 2, 2});
    for (const auto& p : normalize_cloud(same).points) CHECK(squared_norm(p) == 0);
}

TEST_CASE("validate rejects empty and non-finite clouds") {
    CHECK_THROWS_AS(validate(PointCloud{}), std::invalid_argument);
    PointCloud c;
    c.points = {{0, std::nan(""), 0}};
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
}

TEST_CASE("chamfer correspondences pick nearest neighbours both ways") {
    const std::vector<Vec3> r = {{0, 0, 0}, {1, 0, 0}, {0, 2, 0}};
    const std::vector<Vec3> g = {{0, 0, 1}, {1, 1, 0}};
    const auto c = chamfer_correspondences(r, g);
    CHECK(c.r_to_g == std::vector<std::size_t>{0, 1, 1});
    CHECK(c.g_to_r == std::vector<std::size_t>{0, 1});
    // oracle_gen.py: chamfer_single
    CHECK(pcmae::verify::brute_chamfer(r, g) == doctest::Approx(2.333333333333333));
}

TEST_CASE("property: fps and knn agree with brute force on random clouds") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto c = testutil::random_cloud(20 + seed % 50, seed);
        const std::size_t n = 2 + seed % 15;
        const std::size_t start = seed % c.size();
        const auto f = fps(c, n, start);
        CHECK(f == pcmae::verify::brute_fps(c, n, start));
        CHECK(std::set<std::size_t>(f.begin(), f.end()).size() == n);
        const std::size_t k = 1 + seed % 9;
        CHECK(knn(c, f, k) == pcmae::verify::brute_knn(c, f, k));
    }
}

TEST_CASE("property: fps min-distance sequence never increases") {
    const auto c = testutil::random_cloud(100, 99);
    const auto f = fps(c, 30);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < f.size(); ++i) {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < i; ++j) d = std::min(d, squared_distance(c.points[f[i]], c.points[f[j]]));
        CHECK(d <= prev);
        prev = d;
    }
}

TEST_CASE("property: patches are translation invariant") {
    auto c = testutil::random_cloud(64, 5);
    const auto a = make_patches(c, 8, 6);
    for (auto& p : c.points) p = {p[0] + 3, p[1] - 2, p[2] + 0.5};
    const auto b = make_patches(c, 8, 6);
    CHECK(a.neighbor_idx == b.neighbor_idx);
    for (std::size_t i = 0; i < a.patches.size(); ++i)
        for (int d = 0; d < 3; ++d) CHECK(a.patches[i][d] == doctest::Approx(b.patches[i][d]).epsilon(1e-12));
}
