#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "rissc/gradcheck.hpp"
#include "rissc/ops.hpp"

using namespace rissc::ad;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool grad = true, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, scale);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = nd(rng);
    return Tensor::from_data(std::move(shape), std::move(v), grad);
}

Tensor identity(std::size_t n) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return Tensor::from_data({n, n}, std::move(v));
}

// Weighted sum so that every output coordinate gets a distinct upstream gradient.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
    auto w = random_tensor(y.shape(), seed, false);
    return sum(mul(y, w));
}

double check(const std::function<Tensor()>& f, std::vector<NamedTensor> params) {
    GradCheckOptions opts;
    opts.samples_per_tensor = 64;
    return finite_diff_check(f, std::move(params), opts).max_rel_error;
}

}  // namespace

TEST_CASE("matmul against identity, zeros and a triple-loop oracle") {
    auto b = random_tensor({3, 2}, 1, false);
    auto ib = matmul(identity(3), b);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(ib[i] == b[i]);

    auto z = matmul(Tensor::zeros({2, 2}), random_tensor({2, 2}, 2, false));
    for (double v : z.data()) CHECK(v == 0.0);

    auto a = random_tensor({4, 5}, 3, false), c = random_tensor({5, 3}, 4, false);
    auto p = matmul(a, c);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 5; ++k) s += a[i * 5 + k] * c[k * 3 + j];
            CHECK(std::abs(p[i * 3 + j] - s) <= 1e-12);
        }
}

TEST_CASE("matmul shape error names both shapes") {
    try {
        matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x2]") != std::string::npos);
    }
    CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError);
    CHECK_THROWS_AS(mul(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
    CHECK_THROWS_AS(bmm(Tensor::zeros({2, 3, 4}), Tensor::zeros({2, 3, 4})), ShapeError);
}

TEST_CASE("softmax cases") {
    auto u = softmax(Tensor::zeros({3}), 0);
    for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    auto big = softmax(Tensor::from_data({2}, {1000.0, 0.0}), 0);
    CHECK(std::isfinite(big[0]));
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] < 1e-300);

    auto x = random_tensor({7}, 5, false, 3.0);
    auto s = softmax(x, 0);
    long double z = 0.0L;
    for (std::size_t i = 0; i < 7; ++i) z += std::exp(static_cast<long double>(x[i]));
    double total = 0.0;
    for (std::size_t i = 0; i < 7; ++i) {
        const auto ref = static_cast<double>(std::exp(static_cast<long double>(x[i])) / z);
        CHECK(std::abs(s[i] - ref) <= 1e-12);
        CHECK(s[i] > 0.0);
        total += s[i];
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);

    // non-trailing axis
    auto m = random_tensor({3, 4}, 6, false);
    auto sm = softmax(m, 0);
    for (std::size_t j = 0; j < 4; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < 3; ++i) col += sm[i * 4 + j];
        CHECK(std::abs(col - 1.0) <= 1e-12);
    }
}

TEST_CASE("layer_norm cases") {
    auto g = Tensor::full({4}, 1.0), b = Tensor::zeros({4});
    auto c = layer_norm(Tensor::full({1, 4}, 3.5), g, b);
    for (double v : c.data()) CHECK(v == 0.0);

    // mean 0, variance 1 already
    auto n = Tensor::from_data({1, 4}, {1.0, -1.0, 1.0, -1.0});
    auto out = layer_norm(n, g, b, 1e-12);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(out[i] - n[i]) <= 1e-9);

    auto r = layer_norm(random_tensor({1, 32}, 7, false, 5.0), Tensor::full({32}, 1.0), Tensor::zeros({32}), 1e-12);
    double mu = 0.0, var = 0.0;
    for (double v : r.data()) mu += v;
    mu /= 32.0;
    for (double v : r.data()) var += (v - mu) * (v - mu);
    var /= 32.0;
    CHECK(std::abs(mu) <= 1e-12);
    CHECK(std::abs(var - 1.0) <= 1e-6);
}

TEST_CASE("backward trivial gradients") {
    auto x = random_tensor({2, 3, 4}, 8);
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);

    auto v = random_tensor({5}, 9);
    backward(sum(mul(v, v)));
    for (std::size_t i = 0; i < 5; ++i) CHECK(v.grad()[i] == doctest::Approx(2.0 * v[i]));

    CHECK_THROWS_AS(backward(mul(v, v)), ContractError);
}

TEST_CASE("reverse order is topological and visits each node once") {
    auto x = random_tensor({3}, 10);
    auto y = mul(x, x);
    auto z = add(y, x);
    auto loss = sum(add(z, y));
    auto order = reverse_topological_order(loss);
    std::set<const Node*> seen;
    for (std::size_t i = 0; i < order.size(); ++i) {
        CHECK(seen.insert(order[i].get()).second);
        for (const auto& p : order[i]->parents)
            for (std::size_t j = 0; j < i; ++j) CHECK(order[j] != p);
    }
    backward(loss);
    for (std::size_t i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(4.0 * x[i] + 1.0));
}

TEST_CASE("finite_diff_check on a quadratic") {
    auto x = random_tensor({6}, 11);
    auto f = [&] { return sum(square(x)); };
    CHECK(check(f, {{"x", x}}) <= 1e-8);
}

TEST_CASE("gradients of every operation match central differences") {
    SUBCASE("matmul") {
        auto a = random_tensor({3, 4}, 20), b = random_tensor({4, 2}, 21);
        CHECK(check([&] { return probe(matmul(a, b)); }, {{"a", a}, {"b", b}}) <= 1e-4);
    }
    SUBCASE("linear") {
        auto x = random_tensor({2, 3, 4}, 22), w = random_tensor({4, 5}, 23), b = random_tensor({5}, 24);
        CHECK(check([&] { return probe(linear(x, w, b)); }, {{"x", x}, {"w", w}, {"b", b}}) <= 1e-4);
    }
    SUBCASE("bmm") {
        auto a = random_tensor({2, 3, 4}, 25), b = random_tensor({2, 4, 5}, 26), bt = random_tensor({2, 5, 4}, 27);
        CHECK(check([&] { return probe(bmm(a, b)); }, {{"a", a}, {"b", b}}) <= 1e-4);
        CHECK(check([&] { return probe(bmm(a, bt, true)); }, {{"a", a}, {"bt", bt}}) <= 1e-4);
    }
    SUBCASE("add with broadcast, mul, scale, square") {
        auto a = random_tensor({3, 4}, 28), b = random_tensor({4}, 29), c = random_tensor({3, 4}, 30);
        auto s = random_tensor({1}, 31);
        CHECK(check([&] { return probe(add(a, b)); }, {{"a", a}, {"b", b}}) <= 1e-4);
        CHECK(check([&] { return probe(add(a, s)); }, {{"a", a}, {"s", s}}) <= 1e-4);
        CHECK(check([&] { return probe(scale(mul(a, c), 0.7)); }, {{"a", a}, {"c", c}}) <= 1e-4);
        CHECK(check([&] { return probe(square(a)); }, {{"a", a}}) <= 1e-4);
    }
    SUBCASE("relu away from the kink") {
        auto a = random_tensor({10}, 32);
        CHECK(check([&] { return probe(relu(a)); }, {{"a", a}}) <= 1e-4);
    }
    SUBCASE("softmax on both axes") {
        auto a = random_tensor({3, 5}, 33);
        CHECK(check([&] { return probe(softmax(a, 1)); }, {{"a", a}}) <= 1e-4);
        CHECK(check([&] { return probe(softmax(a, 0)); }, {{"a", a}}) <= 1e-4);
    }
    SUBCASE("layer_norm") {
        auto x = random_tensor({3, 6}, 34), g = random_tensor({6}, 35), b = random_tensor({6}, 36);
        CHECK(check([&] { return probe(layer_norm(x, g, b)); }, {{"x", x}, {"g", g}, {"b", b}}) <= 1e-4);
    }
    SUBCASE("embedding with repeated ids") {
        auto w = random_tensor({5, 3}, 37);
        std::vector<std::int64_t> ids{1, 4, 1, 0, 2, 1};
        CHECK(check([&] { return probe(embedding(w, ids, {2, 3})); }, {{"w", w}}) <= 1e-4);
    }
    SUBCASE("reshape and swap_axes12") {
        auto x = random_tensor({2, 3, 4, 2}, 38);
        CHECK(check([&] { return probe(reshape(swap_axes12(x), {2, 24})); }, {{"x", x}}) <= 1e-4);
    }
    SUBCASE("complex ops") {
        auto a = random_tensor({2, 3, 2}, 39), b = random_tensor({2, 3, 2}, 40), c = random_tensor({2, 2}, 41);
        CHECK(check([&] { return probe(complex_mul(a, b)); }, {{"a", a}, {"b", b}}) <= 1e-4);
        CHECK(check([&] { return probe(complex_scale(a, c)); }, {{"a", a}, {"c", c}}) <= 1e-4);
        CHECK(check([&] { return probe(normalize_mean_power(a, 1e-12)); }, {{"a", a}}) <= 1e-4);
    }
}

TEST_CASE("complex arithmetic conventions") {
    auto x = Tensor::from_data({1, 2, 2}, {1.0, 2.0, -3.0, 0.5});
    auto j = Tensor::from_data({1, 2}, {0.0, 1.0});
    auto y = complex_scale(x, j);
    CHECK(y[0] == -2.0);
    CHECK(y[1] == 1.0);
    CHECK(y[2] == -0.5);
    CHECK(y[3] == -3.0);
    auto m = complex_mul(x, x);
    CHECK(m[0] == doctest::Approx(1.0 - 4.0));
    CHECK(m[1] == doctest::Approx(4.0));
}

TEST_CASE("determinism: identical inputs give bit-identical values and gradients") {
    auto run = [] {
        auto a = random_tensor({4, 8}, 50), w = random_tensor({8, 8}, 51), g = random_tensor({8}, 52);
        auto loss = probe(softmax(layer_norm(matmul(a, w), g, Tensor::zeros({8})), 1));
        backward(loss);
        std::vector<double> out{loss.item()};
        out.insert(out.end(), w.grad().begin(), w.grad().end());
        out.insert(out.end(), a.grad().begin(), a.grad().end());
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("no history is recorded under NoGradGuard") {
    auto a = random_tensor({2, 2}, 60);
    Tensor y;
    {
        NoGradGuard g;
        y = matmul(a, a);
    }
    CHECK_FALSE(y.requires_grad());
    CHECK(matmul(a, a).requires_grad());
}
