#include <doctest.h>

#include <cmath>

#include "mow/errors.hpp"
#include "mow/finite_diff.hpp"
#include "mow/rng.hpp"
#include "mow/tape.hpp"

using namespace mow;

namespace {

ParamVector two_layer_params(int in, int hidden, int out, uint64_t seed) {
    ParamVector pv;
    pv.add("W0", hidden, in);
    pv.add("b0", hidden, 1);
    pv.add("W1", out, hidden);
    pv.add("b1", out, 1);
    Rng rng(seed);
    for (Eigen::Index i = 0; i < pv.size(); ++i) pv.values[i] = rng.next_gaussian() * 0.5;
    return pv;
}

// scalar cost: |relu(W0 x + b0) . W1 + b1|^2 summed, built from tape ops
Var mlp_cost(Tape& t, const ParamVector& pv, const Vector& x, bool use_tanh = false) {
    Var h = t.affine(t.constant(Matrix(x)), t.param(pv, "W0"), t.param(pv, "b0"));
    h = use_tanh ? t.tanh(h) : t.relu(h);
    Var y = t.affine(h, t.param(pv, "W1"), t.param(pv, "b1"));
    return t.squared_norm(y);
}

}  // namespace

TEST_CASE("tape: identity program returns its input") {
    Tape t;
    Var c = t.constant(3.0);
    CHECK(t.scalar_value(c) == 3.0);
}

TEST_CASE("tape: squared norm of (3,4) is 25") {
    Tape t;
    Matrix v(2, 1);
    v << 3.0, 4.0;
    CHECK(t.scalar_value(t.squared_norm(t.constant(v))) == doctest::Approx(25.0).epsilon(1e-15));
}

TEST_CASE("tape: two-layer relu forward matches a hand-rolled pass") {
    Rng rng(11);
    const int in = 4, hidden = 5, out = 3;
    ParamVector pv = two_layer_params(in, hidden, out, 11);
    Vector x(in);
    for (int i = 0; i < in; ++i) x[i] = rng.next_gaussian();

    Tape t;
    Var h = t.relu(t.affine(t.constant(Matrix(x)), t.param(pv, "W0"), t.param(pv, "b0")));
    Var y = t.affine(h, t.param(pv, "W1"), t.param(pv, "b1"));

    // straight-line oracle with index loops
    std::vector<double> hx(hidden), yx(out);
    auto W0 = pv.matrix("W0");
    auto b0 = pv.matrix("b0");
    auto W1 = pv.matrix("W1");
    auto b1 = pv.matrix("b1");
    for (int r = 0; r < hidden; ++r) {
        double acc = b0(r, 0);
        for (int c = 0; c < in; ++c) acc += W0(r, c) * x[c];
        hx[static_cast<std::size_t>(r)] = acc > 0 ? acc : 0.0;
    }
    for (int r = 0; r < out; ++r) {
        double acc = b1(r, 0);
        for (int c = 0; c < hidden; ++c) acc += W1(r, c) * hx[static_cast<std::size_t>(c)];
        yx[static_cast<std::size_t>(r)] = acc;
    }
    for (int r = 0; r < out; ++r)
        CHECK(t.value(y)(r, 0) == doctest::Approx(yx[static_cast<std::size_t>(r)]).epsilon(1e-12));
}

TEST_CASE("tape: d(theta^2)/dtheta = 2 theta") {
    ParamVector pv;
    pv.add("t", 1, 1);
    pv.values[0] = 3.0;
    Tape t;
    Var th = t.param(pv, "t");
    Vector g = t.backward(t.mul(th, th));
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("tape: constant root yields an all-zero gradient") {
    ParamVector pv;
    pv.add("t", 3, 1);
    pv.values << 1.0, 2.0, 3.0;
    Tape t;
    t.param(pv, "t");  // bound but unused by the root
    Vector g = t.backward(t.constant(5.0));
    CHECK(g.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("tape: parameters unreachable from the root get exactly zero") {
    ParamVector pv = two_layer_params(3, 4, 2, 5);
    Vector x(3);
    x << 0.3, -0.2, 0.9;
    Tape t;
    // only the first layer participates
    Var h = t.relu(t.affine(t.constant(Matrix(x)), t.param(pv, "W0"), t.param(pv, "b0")));
    t.param(pv, "W1");
    Vector g = t.backward(t.squared_norm(h));
    const auto& seg = pv.segment("W1");
    for (Eigen::Index i = 0; i < seg.size(); ++i) CHECK(g[seg.offset + i] == 0.0);
    const auto& seg_b = pv.segment("b1");
    for (Eigen::Index i = 0; i < seg_b.size(); ++i) CHECK(g[seg_b.offset + i] == 0.0);
    CHECK(g.segment(pv.segment("W0").offset, pv.segment("W0").size()).norm() > 0.0);
}

TEST_CASE("tape: backward matches central finite differences on an MLP cost") {
    // tanh keeps the cost smooth so the finite-difference oracle is clean
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        ParamVector pv = two_layer_params(3, 4, 2, seed);
        Rng rng(seed * 77);
        Vector x(3);
        for (int i = 0; i < 3; ++i) x[i] = rng.next_gaussian();

        Tape t;
        Vector analytic = t.backward(mlp_cost(t, pv, x, true));
        Vector numeric = finite_diff_gradient(
            [&](const ParamVector& p) {
                Tape s;
                return s.scalar_value(mlp_cost(s, p, x, true));
            },
            pv, 1e-5);
        CHECK(max_relative_error(analytic, numeric) < 1e-5);
    }
}

TEST_CASE("tape: gradient of a sum equals the sum of gradients") {
    ParamVector pv = two_layer_params(3, 4, 2, 9);
    Vector xa(3), xb(3);
    xa << 0.1, -0.4, 0.7;
    xb << -0.3, 0.2, 0.5;

    Tape t;
    Vector g_sum = t.backward(t.add(mlp_cost(t, pv, xa), mlp_cost(t, pv, xb)));
    Tape ta, tb;
    Vector ga = ta.backward(mlp_cost(ta, pv, xa));
    Vector gb = tb.backward(mlp_cost(tb, pv, xb));
    CHECK((g_sum - (ga + gb)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("tape: relu gradient at zero is zero") {
    ParamVector pv;
    pv.add("t", 1, 1);
    pv.values[0] = 0.0;
    Tape t;
    Vector g = t.backward(t.sum(t.relu(t.param(pv, "t"))));
    CHECK(g[0] == 0.0);
}

TEST_CASE("tape: sort is stable and routes gradients through the permutation") {
    Tape t;
    Matrix x(5, 1);
    x << 3.0, 1.0, 2.0, 1.0, 0.5;
    Var in = t.input(x);
    Var sorted = t.sort_asc(in);
    Matrix expect(5, 1);
    expect << 0.5, 1.0, 1.0, 2.0, 3.0;
    CHECK(t.value(sorted) == expect);

    // weight the sorted entries, check the gradient lands on the right slots
    Matrix w(5, 1);
    w << 10.0, 20.0, 30.0, 40.0, 50.0;
    t.backward(t.sum(t.mul(sorted, t.constant(w))));
    Matrix g = t.grad_of(in);
    // 1.0 at index 1 precedes the tied 1.0 at index 3 (stable)
    CHECK(g(4, 0) == 10.0);
    CHECK(g(1, 0) == 20.0);
    CHECK(g(3, 0) == 30.0);
    CHECK(g(2, 0) == 40.0);
    CHECK(g(0, 0) == 50.0);
}

TEST_CASE("tape: concat splits gradients back to its parts") {
    Tape t;
    Matrix a(2, 1), b(3, 1);
    a << 1.0, 2.0;
    b << 3.0, 4.0, 5.0;
    Var va = t.input(a), vb = t.input(b);
    std::vector<Var> parts{va, vb};
    Var cat = t.concat(parts);
    Matrix w(5, 1);
    w << 1.0, 2.0, 3.0, 4.0, 5.0;
    t.backward(t.sum(t.mul(cat, t.constant(w))));
    CHECK(t.grad_of(va)(0, 0) == 1.0);
    CHECK(t.grad_of(va)(1, 0) == 2.0);
    CHECK(t.grad_of(vb)(2, 0) == 5.0);
}

TEST_CASE("tape: elementwise op gradients agree with finite differences") {
    // exp, log, sqrt, reciprocal, sigmoid, mul chains on positive inputs
    ParamVector pv;
    pv.add("t", 4, 1);
    pv.values << 0.7, 1.3, 2.1, 0.4;
    auto cost = [](Tape& t, const ParamVector& p) {
        Var x = t.param(p, "t");
        Var a = t.exp(t.scale(x, 0.3));
        Var b = t.log(t.scale_shift(t.mul(x, x), 1.0, 0.5));
        Var c = t.sqrt(t.scale_shift(x, 0.5, 2.0));
        Var d = t.reciprocal(t.scale_shift(x, 1.0, 3.0));
        Var e = t.sigmoid(x);
        return t.add(t.squared_norm(t.add(a, b)), t.mean(t.mul(t.add(c, d), e)));
    };
    Tape t;
    Vector analytic = t.backward(cost(t, pv));
    Vector numeric = finite_diff_gradient(
        [&](const ParamVector& p) {
            Tape s;
            return s.scalar_value(cost(s, p));
        },
        pv, 1e-6);
    CHECK(max_relative_error(analytic, numeric) < 1e-6);
}

TEST_CASE("tape: add_scalar broadcasts and accumulates the scalar gradient") {
    ParamVector pv;
    pv.add("s", 1, 1);
    pv.values[0] = 2.0;
    Tape t;
    Matrix x(3, 1);
    x << 1.0, 2.0, 3.0;
    Vector g = t.backward(t.sum(t.add_scalar(t.constant(x), t.param(pv, "s"))));
    CHECK(g[0] == 3.0);  // d/ds sum(x + s) = count
}

TEST_CASE("tape: finite_diff_gradient sanity and bounds") {
    ParamVector pv;
    pv.add("t", 1, 1);
    pv.values[0] = 1.0;
    auto quad = [](const ParamVector& p) { return p.values[0] * p.values[0]; };
    Vector g = finite_diff_gradient(quad, pv, 1e-5);
    CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-9));

    auto constant = [](const ParamVector&) { return 4.2; };
    Vector gz = finite_diff_gradient(constant, pv, 1e-5);
    CHECK(gz[0] == 0.0);

    CHECK_THROWS_AS(finite_diff_gradient(quad, pv, 1e-2), ConfigError);
    CHECK_THROWS_AS(finite_diff_gradient(quad, pv, 1e-9), ConfigError);
}

TEST_CASE("tape: error contracts") {
    Tape t;
    Matrix a(2, 1), b(3, 1);
    a.setOnes();
    b.setOnes();
    CHECK_THROWS_AS(t.add(t.constant(a), t.constant(b)), ShapeError);

    Tape t2;
    Matrix neg(1, 1);
    neg << -1.0;
    CHECK_THROWS_AS(t2.log(t2.constant(neg)), NumericError);

    Tape t3;
    Matrix vec(2, 1);
    vec << 1.0, 2.0;
    Var v = t3.constant(vec);
    CHECK_THROWS_AS(t3.backward(v), ShapeError);  // not scalar-rooted

    Tape t4;
    Matrix W(2, 3);
    W.setOnes();
    Matrix x(2, 1);
    x.setOnes();
    CHECK_THROWS_AS(t4.affine(t4.constant(x), t4.constant(W)), ShapeError);
}

TEST_CASE("tape: backward may only run once") {
    Tape t;
    Var c = t.mul(t.constant(2.0), t.constant(3.0));
    t.backward(c);
    CHECK_THROWS_AS(t.backward(c), ShapeError);
}
