#include "test_util.hpp"

#include "pcmae/tensor.hpp"

#include <doctest.h>

#include <vector>

using namespace pcmae::ad;
using testutil::max_grad_error;
using testutil::random_tensor;

// Expected values below come from tests/unit/oracle_gen.py (numpy / math.erf).

TEST_CASE("matmul and linear match hand-computed products") {
    Tape<double> tape;
    Tensor<double> a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor<double> b({3, 2}, {7, 8, 9, 10, 11, 12});
    auto c = matmul(tape, a, b);
    CHECK(c.shape() == Shape{2, 2});
    CHECK(std::vector<double>(c.values().begin(), c.values().end()) == std::vector<double>{58, 64, 139, 154});
    Tensor<double> bias({2}, {1, -1});
    auto l = linear(tape, a, b, bias);
    CHECK(l[0] == 59);
    CHECK(l[3] == 153);
}

TEST_CASE("gelu is exact x * Phi(x)") {
    Tape<double> tape;
    Tensor<double> x({5}, {-2.0, -0.5, 0.0, 0.5, 2.0}, true);
    auto y = gelu(tape, x);
    const double expect[] = {-0.04550026389635842, -0.15426876936299344, 0.0, 0.34573123063700656,
                             1.9544997361036416};
    for (int i = 0; i < 5; ++i) CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-14));
    tape.backward(sum(tape, y));
    const double dexpect[] = {-0.08523180107819692, 0.13250487534383712, 0.5, 0.8674951246561629,
                              1.085231801078197};
    for (int i = 0; i < 5; ++i) CHECK(x.grad()[i] == doctest::Approx(dexpect[i]).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and match reference") {
    Tape<double> tape;
    Tensor<double> z({2, 3}, {1, 2, 3, 0, 0, 0});
    auto s = softmax(tape, z, 1);
    const double expect[] = {0.09003057317038046, 0.24472847105479764, 0.6652409557748218, 1.0 / 3, 1.0 / 3, 1.0 / 3};
    for (int i = 0; i < 6; ++i) CHECK(s[i] == doctest::Approx(expect[i]).epsilon(1e-14));
}

TEST_CASE("softmax is shift invariant and stable for large logits") {
    Tape<double> tape;
    Tensor<double> z({1, 3}, {1000, 1001, 1002});
    auto s = softmax(tape, z, 1);
    CHECK(s[2] == doctest::Approx(0.6652409557748218).epsilon(1e-12));
}

TEST_CASE("layer_norm matches reference with gain and bias") {
    Tape<double> tape;
    Tensor<double> x({1, 4}, {1, 2, 3, 4});
    Tensor<double> g({4}, {2.0, -1.0, 0.5, 0.25});
    Tensor<double> b({4}, {0.1, 0.2, 0.3, 0.4});
    auto y = layer_norm(tape, x, g, b);
    const double expect[] = {-2.5832708399378537, 0.6472118066563091, 0.5236059033281545, 0.7354088549922317};
    for (int i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("cross_entropy matches reference") {
    Tape<double> tape;
    Tensor<double> logits({2, 3}, {1, 2, 3, 1, 0, -1});
    const int labels[] = {2, 0};
    auto l = cross_entropy(tape, logits, std::span<const int>(labels));
    CHECK(l.item() == doctest::Approx(0.40760596444438024).epsilon(1e-13));
    const int bad[] = {3, 0};
    CHECK_THROWS_AS(cross_entropy(tape, logits, std::span<const int>(bad)), IndexError);
}

TEST_CASE("attention matches a per-head reference over groups") {
    std::vector<double> v(48);
    for (int i = 0; i < 48; ++i) v[static_cast<std::size_t>(i)] = std::sin(i * 0.37) * 1.5;
    Tape<double> tape;
    Tensor<double> qkv({4, 12}, v);
    auto out = attention(tape, qkv, 2, 2);
    CHECK(out.shape() == Shape{4, 4});
    const double expect[] = {0.6652100444543037,  0.36906698635245344, 0.18956417035697282, -0.1480186364789253,
                             1.3188978025666975,  1.4466375112320997,  0.5657875275047092,  0.25444895545167734,
                             -0.8399462906807547, -1.1085604894370429, -0.3909692359001289, -0.012713481264250216,
                             -0.8158435280528868, -1.1988135687644481, -1.3727978888396049, -1.3829027048361948};
    for (int i = 0; i < 16; ++i) CHECK(out[static_cast<std::size_t>(i)] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("group_max routes gradient to the first maximal row") {
    Tape<double> tape;
    Tensor<double> x({4, 2}, {1, 5, 3, 5, 2, 0, 2, -1}, true);
    auto m = group_max(tape, x, 2);
    CHECK(m.shape() == Shape{2, 2});
    CHECK(m[0] == 3);
    CHECK(m[1] == 5);
    CHECK(m[2] == 2);
    CHECK(m[3] == 0);
    tape.backward(sum(tape, m));
    const std::vector<double> g(x.grad().begin(), x.grad().end());
    CHECK(g == std::vector<double>{0, 1, 1, 0, 1, 1, 0, 0});
}

TEST_CASE("gather_rows scatters duplicate indices additively") {
    Tape<double> tape;
    Tensor<double> x({3, 2}, {1, 2, 3, 4, 5, 6}, true);
    const std::size_t idx[] = {2, 0, 2};
    auto g = gather_rows(tape, x, std::span<const std::size_t>(idx));
    CHECK(g[0] == 5);
    CHECK(g[3] == 2);
    tape.backward(sum(tape, g));
    const std::vector<double> grad(x.grad().begin(), x.grad().end());
    CHECK(grad == std::vector<double>{1, 1, 0, 0, 2, 2});
    const std::size_t bad[] = {3};
    Tape<double> t2;
    CHECK_THROWS_AS(gather_rows(t2, x, std::span<const std::size_t>(bad)), IndexError);
}

TEST_CASE("shape errors are reported, not silently broadcast") {
    Tape<double> tape;
    auto a = Tensor<double>::zeros({2, 3});
    auto b = Tensor<double>::zeros({2, 3});
    CHECK_THROWS_AS(matmul(tape, a, b), DimensionError);
    CHECK_THROWS_AS(add(tape, a, Tensor<double>::zeros({3, 2})), DimensionError);
    CHECK_THROWS_AS(group_max(tape, Tensor<double>::zeros({3, 2}), 2), DimensionError);
    CHECK_THROWS_AS(Tensor<double>({2, 2}, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor<double>::zeros({2}).item(), ContractError);
}

TEST_CASE("a tape replays once") {
    Tape<double> tape;
    Tensor<double> x({2}, {1, 2}, true);
    auto s = sum(tape, mul(tape, x, x));
    tape.backward(s);
    CHECK(x.grad()[0] == 2);
    CHECK(x.grad()[1] == 4);
    CHECK_THROWS_AS(tape.backward(s), StateError);
}

TEST_CASE("inference tape records nothing") {
    Tape<double> tape(Tape<double>::Mode::inference);
    Tensor<double> x({2}, {1, 2}, true);
    auto y = mul(tape, x, x);
    CHECK(tape.size() == 0);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("shared tensors accumulate gradient from every use") {
    Tape<double> tape;
    Tensor<double> w({2, 2}, {1, 2, 3, 4}, true);
    Tensor<double> x({1, 2}, {1, 1});
    auto h = matmul(tape, matmul(tape, x, w), w);
    tape.backward(sum(tape, h));
    // d/dW sum(x W W): analytic reference by hand: x^T (1 W^T) + (x W)^T 1
    // x W = [4, 6]; 1 W^T = [3, 7]
    const std::vector<double> g(w.grad().begin(), w.grad().end());
    CHECK(g == std::vector<double>{3 + 4, 7 + 4, 3 + 6, 7 + 6});
}

TEST_CASE("every differentiable op agrees with central differences") {
    auto a = random_tensor({4, 6}, 1);
    auto b = random_tensor({6, 3}, 2);
    auto c = random_tensor({4, 6}, 3);
    auto row = random_tensor({6}, 4);
    auto bias = random_tensor({3}, 5);
    auto gain = random_tensor({6}, 6);
    auto qkv = random_tensor({6, 12}, 7);
    const double tol = 1e-6;

    SUBCASE("matmul") {
        CHECK(max_grad_error([&](Tape<double>& t) { return sum(t, matmul(t, a, b)); }, {a, b}) < tol);
    }
    SUBCASE("linear + gelu") {
        CHECK(max_grad_error([&](Tape<double>& t) { return mean(t, gelu(t, linear(t, a, b, bias))); }, {a, b, bias}) <
              tol);
    }
    SUBCASE("add, mul, scale, add_row") {
        CHECK(max_grad_error(
                  [&](Tape<double>& t) { return sum(t, mul(t, add_row(t, add(t, a, c), row), scale(t, c, 0.7))); },
                  {a, c, row}) < tol);
    }
    SUBCASE("softmax along both axes") {
        CHECK(max_grad_error([&](Tape<double>& t) { return sum(t, mul(t, softmax(t, a, 1), c)); }, {a}) < tol);
        CHECK(max_grad_error([&](Tape<double>& t) { return sum(t, mul(t, softmax(t, a, 0), c)); }, {a}) < tol);
    }
    SUBCASE("layer_norm") {
        CHECK(max_grad_error([&](Tape<double>& t) { return sum(t, mul(t, layer_norm(t, a, gain, row), c)); },
                             {a, gain, row}) < tol);
    }
    SUBCASE("gather, concat, reshape") {
        const std::size_t idx[] = {3, 1, 1, 0};
        CHECK(max_grad_error(
                  [&](Tape<double>& t) {
                      auto g = gather_rows(t, a, std::span<const std::size_t>(idx));
                      auto r = concat_rows(t, g, c);
                      auto q = concat_cols(t, r, r);
                      return sum(t, mul(t, q, q));
                  },
                  {a, c}) < tol);
        CHECK(max_grad_error([&](Tape<double>& t) { return sum(t, mul(t, reshape(t, a, {2, 12}), reshape(t, c, {2, 12}))); },
                             {a, c}) < tol);
    }
    SUBCASE("group pooling") {
        CHECK(max_grad_error([&](Tape<double>& t) { return sum(t, mul(t, group_max(t, a, 2), group_mean(t, c, 2))); },
                             {a, c}) < tol);
    }
    SUBCASE("attention") {
        auto w = random_tensor({6, 4}, 8, false);
        CHECK(max_grad_error([&](Tape<double>& t) { return sum(t, mul(t, attention(t, qkv, 3, 2), w)); }, {qkv}) <
              tol);
    }
    SUBCASE("cross_entropy") {
        const int labels[] = {0, 2, 1, 1};
        CHECK(max_grad_error(
                  [&](Tape<double>& t) { return cross_entropy(t, matmul(t, a, b), std::span<const int>(labels)); },
                  {a, b}) < tol);
    }
}

TEST_CASE("float and double instantiations agree") {
    Tape<float> tf;
    Tape<double> td;
    Tensor<float> xf({2, 3}, {0.5f, -1.f, 2.f, 0.25f, 1.5f, -0.75f});
    Tensor<double> xd({2, 3}, {0.5, -1., 2., 0.25, 1.5, -0.75});
    const float yf = mean(tf, gelu(tf, softmax(tf, xf, 1))).item();
    const double yd = mean(td, gelu(td, softmax(td, xd, 1))).item();
    CHECK(yf == doctest::Approx(yd).epsilon(1e-6));
}
