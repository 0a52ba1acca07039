#include <cmath>
#include <cstring>

#include "doctest.h"
#include "revdeq/rng.hpp"
#include "revdeq/tape.hpp"

using namespace revdeq;

namespace {
Tensor vec(std::vector<double> v) { return Tensor::vector(std::move(v)); }

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) &&
           std::memcmp(a.data().data(), b.data().data(),
                       a.size() * sizeof(double)) == 0;
}
}  // namespace

TEST_CASE("vjp of a linear map returns the coefficient") {
    Tape t;
    auto w = t.leaf(vec({5.0}));
    auto out = t.scale(w, 3.0);
    auto cots = t.vjp(out, vec({1.0}));
    CHECK(cots[static_cast<std::size_t>(w)][0] == 3.0);
}

TEST_CASE("vjp of tanh at zero is one") {
    Tape t;
    auto w = t.leaf(vec({0.0}));
    auto out = t.tanh(w);
    auto cots = t.vjp(out, vec({1.0}));
    CHECK(cots[static_cast<std::size_t>(w)][0] == 1.0);
}

TEST_CASE("vjp of a product routes each factor to the other") {
    Tape t;
    auto a = t.leaf(vec({0.5}));
    auto z = t.leaf(vec({2.0}));
    auto out = t.mul(a, z);
    auto cots = t.vjp(out, vec({1.0}));
    CHECK(cots[static_cast<std::size_t>(a)][0] == 2.0);
    CHECK(cots[static_cast<std::size_t>(z)][0] == 0.5);
}

TEST_CASE("matmul vjp: outer product for the matrix, transpose for the vector") {
    Tape t;
    Tensor A({2, 2}, {1.0, 2.0, 3.0, 4.0});
    auto a = t.leaf(A);
    auto v = t.leaf(vec({5.0, 6.0}));
    auto out = t.matmul(a, v);
    auto cots = t.vjp(out, vec({1.0, 1.0}));
    const Tensor& Abar = cots[static_cast<std::size_t>(a)];
    CHECK(Abar.at(0, 0) == 5.0);  // ct_0 * v_0
    CHECK(Abar.at(1, 1) == 6.0);  // ct_1 * v_1
    const Tensor& vbar = cots[static_cast<std::size_t>(v)];
    CHECK(vbar[0] == 4.0);  // column sums of A
    CHECK(vbar[1] == 6.0);
}

TEST_CASE("dot vjp is symmetric in its operands") {
    Tape t;
    auto a = t.leaf(vec({1.0, 2.0}));
    auto b = t.leaf(vec({3.0, 4.0}));
    auto out = t.dot(a, b);
    auto cots = t.vjp(out, Tensor::scalar(1.0));
    CHECK(cots[static_cast<std::size_t>(a)][1] == 4.0);
    CHECK(cots[static_cast<std::size_t>(b)][0] == 1.0);
}

TEST_CASE("tape length counts primitives, not leaves") {
    Tape t;
    auto a = t.leaf(vec({1.0}));
    auto b = t.leaf(vec({2.0}));
    CHECK(t.length() == 0);
    auto c = t.add(a, b);
    t.tanh(c);
    CHECK(t.length() == 2);
    CHECK(t.num_vars() == 4);
}

TEST_CASE("cotangent shape mismatch is a structured error") {
    Tape t;
    auto a = t.leaf(vec({1.0, 2.0}));
    auto out = t.scale(a, 2.0);
    CHECK_THROWS_AS(t.vjp(out, vec({1.0, 2.0, 3.0})), shape_error);
}

TEST_CASE("tape vjp agrees with finite differences on a composite chain") {
    // s = dot(y, y) with y = tanh(A v + b): checks matmul/add/tanh/dot rules
    // against the central-difference oracle for every leaf, shapes up to 16x16.
    Rng rng(7);
    Tensor A = rng.normal_tensor({16, 16}, 0.3);
    Tensor v = rng.normal_tensor({16});
    Tensor b = rng.normal_tensor({16}, 0.5);

    auto run = [&](const Tensor& At, const Tensor& vt, const Tensor& bt,
                   std::vector<Tensor>* grads) {
        Tape t;
        auto a_ = t.leaf(At);
        auto v_ = t.leaf(vt);
        auto b_ = t.leaf(bt);
        auto y = t.tanh(t.add(t.matmul(a_, v_), b_));
        auto s = t.dot(y, y);
        if (grads) {
            auto cots = t.vjp(s, Tensor::scalar(1.0));
            *grads = {cots[static_cast<std::size_t>(a_)],
                      cots[static_cast<std::size_t>(v_)],
                      cots[static_cast<std::size_t>(b_)]};
        }
        return t.value(s)[0];
    };

    std::vector<Tensor> grads;
    run(A, v, b, &grads);

    Tensor fdA = finite_diff_grad([&](const Tensor& p) { return run(p, v, b, nullptr); }, A);
    Tensor fdv = finite_diff_grad([&](const Tensor& p) { return run(A, p, b, nullptr); }, v);
    Tensor fdb = finite_diff_grad([&](const Tensor& p) { return run(A, v, p, nullptr); }, b);

    auto max_rel = [](const Tensor& g, const Tensor& fd) {
        double m = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            double denom = std::max({std::fabs(g[i]), std::fabs(fd[i]), 1.0});
            m = std::max(m, std::fabs(g[i] - fd[i]) / denom);
        }
        return m;
    };
    CHECK(max_rel(grads[0], fdA) <= 1e-6);
    CHECK(max_rel(grads[1], fdv) <= 1e-6);
    CHECK(max_rel(grads[2], fdb) <= 1e-6);
}

TEST_CASE("relu and subtract vjp rules agree with finite differences") {
    Rng rng(11);
    Tensor a = rng.normal_tensor({9});
    Tensor b = rng.normal_tensor({9});
    auto run = [&](const Tensor& at, std::vector<Tensor>* grads) {
        Tape t;
        auto a_ = t.leaf(at);
        auto b_ = t.leaf(b);
        auto s = t.dot(t.relu(t.subtract(a_, b_)), t.leaf(Tensor::vector(
                           std::vector<double>(9, 1.0))));
        if (grads) {
            auto cots = t.vjp(s, Tensor::scalar(1.0));
            *grads = {cots[static_cast<std::size_t>(a_)]};
        }
        return t.value(s)[0];
    };
    std::vector<Tensor> grads;
    run(a, &grads);
    Tensor fd = finite_diff_grad([&](const Tensor& p) { return run(p, nullptr); }, a);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(std::fabs(grads[0][i] - fd[i]) <=
              1e-6 * std::max({std::fabs(grads[0][i]), std::fabs(fd[i]), 1.0}));
}

TEST_CASE("tape replay is deterministic bit for bit") {
    Rng rng(3);
    Tape t;
    auto A = t.leaf(rng.normal_tensor({8, 8}));
    auto v = t.leaf(rng.normal_tensor({8}));
    auto out = t.tanh(t.matmul(A, v));
    Tensor ct = rng.normal_tensor({8});
    auto c1 = t.vjp(out, ct);
    auto c2 = t.vjp(out, ct);
    REQUIRE(c1.size() == c2.size());
    for (std::size_t i = 0; i < c1.size(); ++i) CHECK(bit_equal(c1[i], c2[i]));
}

TEST_CASE("finite_diff_grad oracle behavior") {
    // quadratic: d(p^2)/dp at 3 is 6
    Tensor p3 = Tensor::vector({3.0});
    Tensor g = finite_diff_grad([](const Tensor& p) { return p[0] * p[0]; }, p3, 1e-5);
    CHECK(std::fabs(g[0] - 6.0) <= 1e-8);

    // symmetric function at the kink: central difference cancels to 0
    Tensor p0 = Tensor::vector({0.0});
    Tensor ga = finite_diff_grad([](const Tensor& p) { return std::fabs(p[0]); }, p0, 1e-5);
    CHECK(ga[0] == 0.0);

    CHECK_THROWS_AS(
        finite_diff_grad([](const Tensor& p) { return p[0]; }, p0, 0.0),
        domain_error);
    try {
        finite_diff_grad([](const Tensor&) { return std::nan(""); }, p3, 1e-5);
        FAIL("expected domain_error");
    } catch (const domain_error& e) {
        CHECK(std::string(e.what()).find("0") != std::string::npos);
    }
}
