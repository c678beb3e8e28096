#include "test_util.hpp"

#include "pcmae/masking.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numeric>
#include <set>

using namespace pcmae::masking;

TEST_CASE("mask_count floors r * n robustly") {
    CHECK(mask_count(64, 0.6) == 38);
    CHECK(mask_count(100, 0.29) == 29);
    CHECK(mask_count(10, 0.7) == 7);
    CHECK(mask_count(32, 0.0) == 0);
    CHECK(mask_count(32, 1.0) == 32);
    CHECK_THROWS(mask_count(8, 1.5));
    CHECK_THROWS(mask_count(8, -0.1));
}

TEST_CASE("comask_probability closed form") {
    CHECK(comask_probability(4, 0.5) == doctest::Approx(1 - 0.31640625).epsilon(1e-15));
    // oracle_gen.py
    CHECK(comask_probability(16, 0.25) == doctest::Approx(0.6439258695482072).epsilon(1e-14));
    CHECK(1 - comask_probability(64, 0.6) == doctest::Approx(3.940200619639453e-13).epsilon(1e-3));
    CHECK(comask_probability(64, 0.0) == 0.0);
    CHECK(comask_probability(1, 1.0) == 1.0);
}

TEST_CASE("dual mask at n=64, r=0.6 always co-masks") {
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto m = generate_dual_mask(64, 0.6, s);
        CHECK(m.m1.size() == 38);
        CHECK(m.comask.size() >= 12);  // |m1 ∩ m2| >= 2K - n
    }
}

TEST_CASE("property: dual masks are well formed") {
    for (std::uint64_t s = 0; s < 100; ++s) {
        const std::size_t n = 4 + s % 60;
        const double r = 0.1 + 0.8 * static_cast<double>(s % 9) / 8.0;
        const auto m = generate_dual_mask(n, r, s);
        const std::size_t k = mask_count(n, r);
        CHECK(m.n == n);
        CHECK(m.m1.size() == k);
        CHECK(m.m2.size() == k);
        CHECK(m.visible1.size() == n - k);
        CHECK(std::is_sorted(m.m1.begin(), m.m1.end()));
        CHECK(std::is_sorted(m.visible2.begin(), m.visible2.end()));
        std::vector<std::size_t> all;
        std::merge(m.m1.begin(), m.m1.end(), m.visible1.begin(), m.visible1.end(), std::back_inserter(all));
        std::vector<std::size_t> iota(n);
        std::iota(iota.begin(), iota.end(), std::size_t{0});
        CHECK(all == iota);
        std::vector<std::size_t> inter;
        std::set_intersection(m.m1.begin(), m.m1.end(), m.m2.begin(), m.m2.end(), std::back_inserter(inter));
        CHECK(inter == m.comask);
        if (k > 0 && k < n) CHECK(m.m1 != m.m2);
        const auto o1 = m.order1();
        CHECK(o1.size() == n);
        CHECK(std::equal(m.visible1.begin(), m.visible1.end(), o1.begin()));
    }
}

TEST_CASE("masks are deterministic per seed and differ across seeds") {
    const auto a = generate_dual_mask(32, 0.6, 5);
    const auto b = generate_dual_mask(32, 0.6, 5);
    const auto c = generate_dual_mask(32, 0.6, 6);
    CHECK(a.m1 == b.m1);
    CHECK(a.m2 == b.m2);
    CHECK((a.m1 != c.m1 || a.m2 != c.m2));
}

TEST_CASE("single mask duplicates the first draw") {
    const auto m = generate_single_mask(32, 0.5, 3);
    CHECK(m.m1 == m.m2);
    CHECK(m.comask == m.m1);
}

TEST_CASE("Monte-Carlo estimates agree with the closed form") {
    const auto est = comask_probability_mc(16, 0.25, 20000, 1, MaskModel::bernoulli);
    const double p = comask_probability(16, 0.25);
    CHECK(std::abs(est.probability - p) <= 3 * std::sqrt(p * (1 - p) / 20000));
    const auto fixed = comask_probability_mc(64, 0.6, 20000, 1, MaskModel::fixed_count);
    CHECK(fixed.probability == 1.0);
    // hypergeometric mean K^2/n = 38^2/64
    CHECK(std::abs(fixed.mean_comask - 22.5625) < 0.1);
    CHECK(comask_probability_mc(16, 0.0, 1000, 1, MaskModel::bernoulli).probability == 0.0);
    CHECK(parse_mask_model("fixed") == MaskModel::fixed_count);
    CHECK(parse_mask_model("bernoulli") == MaskModel::bernoulli);
    CHECK_THROWS(parse_mask_model("poisson"));
}

TEST_CASE("inverse_permutation round-trips and validates") {
    const std::size_t p[] = {2, 0, 3, 1};
    const auto inv = inverse_permutation(std::span<const std::size_t>(p));
    CHECK(inv == std::vector<std::size_t>{1, 3, 0, 2});
    const std::size_t bad[] = {0, 0, 1};
    CHECK_THROWS_AS(inverse_permutation(std::span<const std::size_t>(bad)), std::invalid_argument);
}

TEST_CASE("reorder restores original token order and its gradient is a permutation") {
    const auto m = generate_dual_mask(6, 0.5, 9);
    const auto order = m.order1();
    // Row j of the decoder layout holds token order[j]; fill it with that id.
    std::vector<double> v(6 * 2);
    for (std::size_t j = 0; j < 6; ++j) v[j * 2] = v[j * 2 + 1] = static_cast<double>(order[j]);
    pcmae::ad::Tape<double> tape;
    pcmae::ad::Tensor<double> h({6, 2}, v, true);
    auto r = reorder(tape, std::span<const std::size_t>(order), h);
    for (std::size_t t = 0; t < 6; ++t) CHECK(r[t * 2] == static_cast<double>(t));
    auto w = testutil::random_tensor({6, 2}, 1, false);
    tape.backward(pcmae::ad::sum(tape, pcmae::ad::mul(tape, r, w)));
    for (std::size_t j = 0; j < 6; ++j) CHECK(h.grad()[j * 2] == w[order[j] * 2]);
}

TEST_CASE("reorder_batched handles stacked sequences") {
    const std::vector<std::vector<std::size_t>> orders = {{1, 0, 2}, {2, 1, 0}};
    pcmae::ad::Tape<double> tape(pcmae::ad::Tape<double>::Mode::inference);
    pcmae::ad::Tensor<double> h({6, 1}, {10, 11, 12, 20, 21, 22});
    auto r = reorder_batched(tape, orders, h);
    const std::vector<double> got(r.values().begin(), r.values().end());
    CHECK(got == std::vector<double>{11, 10, 12, 22, 21, 20});
}
