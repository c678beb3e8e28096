#include "test_util.hpp"

#include "pcmae/losses.hpp"
#include "pcmae/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace pcmae;
using namespace pcmae::losses;
using ad::Tape;
using ad::Tensor;

// Reference values: tests/unit/oracle_gen.py.

TEST_CASE("chamfer_l2 matches the reference value and gradient") {
    Tape<double> tape;
    Tensor<double> pred({1, 3, 3}, {0, 0, 0, 1, 0, 0, 0, 2, 0}, true);
    Tensor<double> gt({1, 2, 3}, {0, 0, 1, 1, 1, 0});
    auto d = chamfer_l2(tape, pred, gt);
    CHECK(d.item() == doctest::Approx(2.333333333333333).epsilon(1e-14));
    tape.backward(d);
    const double g[] = {0.0, 0.0, -1.666667, 0.0, -1.666667, 0.0, -0.666667, 0.666667, 0.0};
    for (int i = 0; i < 9; ++i) CHECK(pred.grad()[static_cast<std::size_t>(i)] == doctest::Approx(g[i]).epsilon(1e-5));
}

TEST_CASE("chamfer_l2 averages over patches with differing point counts") {
    Tape<double> tape(Tape<double>::Mode::inference);
    Tensor<double> pred({2, 3, 3}, {0, 0, 0, 1, 0, 0, 0, 2, 0, 0.5, -0.5, 0.25, 0, 0, 0, -1, 0, 1});
    Tensor<double> gt({2, 2, 3}, {0, 0, 1, 1, 1, 0, 0.5, -0.5, 0, -1, 0.5, 1});
    CHECK(chamfer_l2(tape, pred, gt).item() == doctest::Approx(1.3802083333333333).epsilon(1e-14));
}

TEST_CASE("chamfer_l2 edge cases") {
    Tape<double> tape;
    CHECK(chamfer_l2(tape, Tensor<double>::zeros({0, 4, 3}), Tensor<double>::zeros({0, 4, 3})).item() == 0.0);
    Tensor<double> a({1, 2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(chamfer_l2(tape, a, a).item() == 0.0);
    CHECK_THROWS_AS(chamfer_l2(tape, Tensor<double>::zeros({2, 4, 3}), Tensor<double>::zeros({1, 4, 3})),
                    ad::DimensionError);
    CHECK_THROWS_AS(chamfer_l2(tape, Tensor<double>::zeros({1, 4, 2}), Tensor<double>::zeros({1, 4, 2})),
                    ad::DimensionError);
}

TEST_CASE("property: chamfer_l2 equals the brute-force scan and is symmetric") {
    for (std::uint64_t s = 0; s < 30; ++s) {
        const std::size_t kp = 1 + s % 7, kg = 1 + (s * 3) % 9;
        auto p = testutil::random_tensor({1, kp, 3}, 100 + s, false);
        auto g = testutil::random_tensor({1, kg, 3}, 200 + s, false);
        std::vector<geometry::Vec3> pv(kp), gv(kg);
        for (std::size_t i = 0; i < kp; ++i) pv[i] = {p[i * 3], p[i * 3 + 1], p[i * 3 + 2]};
        for (std::size_t i = 0; i < kg; ++i) gv[i] = {g[i * 3], g[i * 3 + 1], g[i * 3 + 2]};
        Tape<double> tape(Tape<double>::Mode::inference);
        const double d = chamfer_l2(tape, p, g).item();
        CHECK(d == doctest::Approx(verify::brute_chamfer(pv, gv)).epsilon(1e-12));
        CHECK(d == doctest::Approx(chamfer_l2(tape, g, p).item()).epsilon(1e-12));
        CHECK(d >= 0);
    }
}

TEST_CASE("chamfer_l2 gradients agree with central differences") {
    auto p = testutil::random_tensor({3, 5, 3}, 1);
    auto g = testutil::random_tensor({3, 4, 3}, 2);
    const double err = testutil::max_grad_error([&](Tape<double>& t) { return chamfer_l2(t, p, g); }, {p, g});
    CHECK(err < 1e-6);
}

TEST_CASE("contrastive_loss matches reference over the co-mask only") {
    Tape<double> tape;
    Tensor<double> h1({3, 2}, {1, 0, 0.3, 0.4, 1, 2}, true);
    Tensor<double> h2({3, 2}, {1, 1, 9, 9, -2, 1}, true);
    const std::size_t cm[] = {0, 2};
    auto l = contrastive_loss(tape, h1, h2, std::span<const std::size_t>(cm));
    CHECK(l.item() == doctest::Approx(0.6464466094067263).epsilon(1e-14));
    tape.backward(l);
    CHECK(h1.grad()[2] == 0.0);
    CHECK(h2.grad()[3] == 0.0);
}

TEST_CASE("contrastive_loss bounds and degenerate inputs") {
    Tape<double> tape;
    Tensor<double> h({2, 2}, {1, 2, 3, 4});
    Tensor<double> neg({2, 2}, {-1, -2, -3, -4});
    const std::size_t all[] = {0, 1};
    CHECK(contrastive_loss(tape, h, h, std::span<const std::size_t>(all)).item() == doctest::Approx(0.0).scale(1));
    CHECK(contrastive_loss(tape, h, neg, std::span<const std::size_t>(all)).item() == doctest::Approx(2.0));
    CHECK(contrastive_loss(tape, h, neg, std::span<const std::size_t>()).item() == 0.0);
    const auto z = Tensor<double>::zeros({2, 2});
    const double v = contrastive_loss(tape, z, h, std::span<const std::size_t>(all)).item();
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("contrastive gradients agree with central differences") {
    auto h1 = testutil::random_tensor({6, 4}, 11);
    auto h2 = testutil::random_tensor({6, 4}, 12);
    const std::size_t cm[] = {0, 3, 5};
    CHECK(testutil::max_grad_error(
              [&](Tape<double>& t) { return contrastive_loss(t, h1, h2, std::span<const std::size_t>(cm)); },
              {h1, h2}) < 1e-6);
}

TEST_CASE("batched contrastive averages per-sample means in original token order") {
    const auto m0 = masking::generate_dual_mask(6, 0.5, 1);
    const auto m1 = masking::generate_dual_mask(6, 0.5, 2);
    const std::vector<masking::DualMask> masks{m0, m1};
    auto h1 = testutil::random_tensor({12, 3}, 5, false);
    auto h2 = testutil::random_tensor({12, 3}, 6, false);
    Tape<double> tape(Tape<double>::Mode::inference);
    const double got = contrastive_loss_batched(tape, h1, h2, masks).item();
    // Reference: undo each layout by hand, then average per-sample means.
    double want = 0;
    for (std::size_t b = 0; b < 2; ++b) {
        const auto o1 = masks[b].order1(), o2 = masks[b].order2();
        double s = 0;
        for (std::size_t tok : masks[b].comask) {
            const std::size_t r1 = b * 6 + static_cast<std::size_t>(std::find(o1.begin(), o1.end(), tok) - o1.begin());
            const std::size_t r2 = b * 6 + static_cast<std::size_t>(std::find(o2.begin(), o2.end(), tok) - o2.begin());
            double dot = 0, n1 = 0, n2 = 0;
            for (std::size_t d = 0; d < 3; ++d) {
                dot += h1[r1 * 3 + d] * h2[r2 * 3 + d];
                n1 += h1[r1 * 3 + d] * h1[r1 * 3 + d];
                n2 += h2[r2 * 3 + d] * h2[r2 * 3 + d];
            }
            s += 1 - dot / (std::sqrt(n1) * std::sqrt(n2));
        }
        want += masks[b].comask.empty() ? 0 : s / static_cast<double>(masks[b].comask.size()) / 2;
    }
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("total_loss composes enabled terms") {
    auto r = total_loss(1.0, 2.0, 0.5, 1.0, true, true, 7);
    CHECK(r.total == doctest::Approx(3.5));
    CHECK(r.comask_count == 7);
    r = total_loss(1.0, 2.0, 0.5, 0.0, true, true);
    CHECK(r.total == doctest::Approx(3.0));
    r = total_loss(1.0, 2.0, 0.5, 2.0, true, false);
    CHECK(r.total == doctest::Approx(3.0));
    CHECK_FALSE(r.has_contras);
    r = total_loss(1.0, 2.0, 0.5, 1.0, false, false);
    CHECK(r.total == doctest::Approx(1.0));
    CHECK_FALSE(r.has_recon2);
    CHECK(r.recon2 == 0);
    CHECK_THROWS_AS(total_loss(1, 1, 1, -0.5, true, true), std::invalid_argument);
    CHECK_THROWS_AS(total_loss(1, 1, 1, std::nan(""), true, true), std::invalid_argument);
}

TEST_CASE("pretrain_loss report agrees with its differentiable total") {
    const auto cfg = ModelConfig::gradcheck();
    const auto params = model::ModelParams<double>::init(cfg, 3);
    std::vector<geometry::PointCloud> clouds{testutil::random_cloud(cfg.points_per_cloud, 1),
                                             testutil::random_cloud(cfg.points_per_cloud, 2)};
    Tape<double> tape;
    const auto out = model::forward_pretrain(tape, params, cfg, std::span<const geometry::PointCloud>(clouds), 4);
    const auto loss = pretrain_loss(tape, out, cfg);
    CHECK(loss.total.item() == doctest::Approx(loss.report.total).epsilon(1e-12));
    CHECK(loss.report.total ==
          doctest::Approx(loss.report.recon1 + loss.report.recon2 + cfg.lambda * loss.report.contras).epsilon(1e-12));
    std::size_t cm = 0;
    for (const auto& m : out.masks) cm += m.comask.size();
    CHECK(loss.report.comask_count == cm);
}
