// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "edvtg/autodiff.hpp"

namespace edvtg::ad {
namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), true);
}

Shape random_matrix_shape(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> d(1, 5);
    return {d(rng), d(rng)};
}

// Weighted sum so every output element gets a distinct upstream gradient.
Tensor weighted_sum(const Tensor& t) {
    std::vector<double> w(t.numel());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i % 7);
    return sum(mul(t, Tensor::from(t.shape(), w)));
}

void expect_passes(const std::function<Tensor()>& f, const std::vector<std::pair<std::string, Tensor>>& leaves,
                   const std::string& what) {
    const auto rep = grad_check(f, leaves, {.step = 1e-5, .tol = 1e-4});
    EXPECT_TRUE(rep.passed) << what << " max rel error " << rep.max_rel_error;
    EXPECT_FALSE(rep.non_finite) << what;
}

TEST(Primitives, SoftmaxOfZerosIsUniform) {
    const auto s = softmax(Tensor::zeros({1, 16}));
    for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 16.0);
}

TEST(Primitives, CrossEntropyOfUniformLogits) {
    const auto logits = Tensor::zeros({3, 16});
    const std::vector<int> t{0, 7, 15};
    EXPECT_NEAR(cross_entropy(logits, t).item(), std::log(16.0), 1e-12);
    EXPECT_NEAR(std::log(16.0), 2.77259, 1e-5);
}

TEST(Primitives, CrossEntropyIgnoresPadding) {
    std::mt19937_64 rng(1);
    const auto logits = random_tensor(rng, {3, 5});
    const std::vector<int> all{1, -1, 3};
    const std::vector<int> r0{1}, r2{3};
    const double a = cross_entropy(slice(logits, 0, 0, 1), r0).item();
    const double b = cross_entropy(slice(logits, 0, 2, 3), r2).item();
    EXPECT_NEAR(cross_entropy(logits, all).item(), 0.5 * (a + b), 1e-14);
    const std::vector<int> none{-1, -1, -1};
    EXPECT_THROW(cross_entropy(logits, none), std::invalid_argument);
}

TEST(Primitives, MatmulMatchesNaive) {
    std::mt19937_64 rng(42);
    const auto a = random_tensor(rng, {3, 4});
    const auto b = random_tensor(rng, {4, 2});
    const auto c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{3, 2}));
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            double ref = 0.0;
            for (std::size_t k = 0; k < 4; ++k) ref += a.at(i, k) * b.at(k, j);
            EXPECT_NEAR(c.at(i, j), ref, 1e-15);
        }
    }
}

TEST(Primitives, ShapeErrorsNameBothShapes) {
    const auto a = Tensor::zeros({3, 4});
    const auto b = Tensor::zeros({3, 2});
    try {
        matmul(a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find(shape_str(a.shape())), std::string::npos) << msg;
        EXPECT_NE(msg.find(shape_str(b.shape())), std::string::npos) << msg;
    }
    EXPECT_THROW(add(a, b), ShapeError);
    EXPECT_THROW(concat({a, b}, 0), ShapeError);
    EXPECT_THROW(slice(a, 1, 2, 5), ShapeError);
    EXPECT_THROW(reshape(a, {5}), ShapeError);
}

TEST(Primitives, LayerNormZeroMeanUnitVariance) {
    std::mt19937_64 rng(5);
    const auto x = random_tensor(rng, {4, 8}, -3.0, 3.0);
    const auto y = layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}));
    for (std::size_t r = 0; r < 4; ++r) {
        double m = 0.0, v = 0.0;
        for (std::size_t c = 0; c < 8; ++c) m += y.at(r, c);
        m /= 8.0;
        for (std::size_t c = 0; c < 8; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m);
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v / 8.0, 1.0, 1e-4);
    }
}

TEST(Backward, SumGivesOnes) {
    auto x = Tensor::from({5}, {1, -2, 3, 0.5, 9}, true);
    backward(sum(x));
    for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, HalfSquareGivesInput) {
    auto x = Tensor::from({5}, {1, -2, 3, 0.5, 9}, true);
    backward(scale(sum(mul(x, x)), 0.5));
    const auto g = x.grad();
    for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(g[i], x[i]);
}

TEST(Backward, NonScalarLossThrows) {
    auto x = Tensor::from({2}, {1, 2}, true);
    EXPECT_THROW(backward(mul(x, x)), ShapeError);
}

TEST(Backward, RepeatedCallsAccumulate) {
    auto x = Tensor::from({3}, {1, 2, 3}, true);
    const auto loss = sum(mul(x, x));
    backward(loss);
    backward(loss);
    const auto g = x.grad();
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g[i], 4.0 * x[i]);
    x.zero_grad();
    for (double v : x.grad()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
    auto x = Tensor::from({2}, {1, 2}, true);
    Tensor y;
    {
        NoGradGuard g;
        y = sum(mul(x, x));
    }
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(grad_enabled());
}

TEST(Backward, TapeVisitsEachNodeOnceInTopologicalOrder) {
    auto x = Tensor::from({2}, {1, 2}, true);
    const auto y = mul(x, x);
    const auto z = add(y, y);
    const auto loss = sum(z);
    const auto tape = ComputationTape::record(loss);
    std::set<Node*> seen;
    for (Node* n : tape.nodes()) {
        EXPECT_TRUE(seen.insert(n).second);
        for (const auto& p : n->parents) EXPECT_TRUE(seen.count(p.get())) << n->op;
    }
    EXPECT_EQ(tape.size(), 4u);
}

TEST(Backward, Linearity) {
    std::mt19937_64 rng(9);
    auto x = random_tensor(rng, {3, 4});
    auto w = random_tensor(rng, {4, 2});
    const auto f = [&] { return sum(sigmoid(matmul(x, w))); };
    const auto g = [&] { return mean(pow(matmul(x, w), 2.0)); };
    const double a = 0.7, b = -1.3;
    backward(f());
    const auto gf = x.grad();
    x.zero_grad();
    w.zero_grad();
    backward(g());
    const auto gg = x.grad();
    x.zero_grad();
    w.zero_grad();
    backward(add(scale(f(), a), scale(g(), b)));
    const auto gc = x.grad();
    for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(gc[i], a * gf[i] + b * gg[i], 1e-13);
}

TEST(Backward, Deterministic) {
    const auto once = [] {
        std::mt19937_64 rng(77);
        auto x = random_tensor(rng, {4, 6});
        auto w = random_tensor(rng, {6, 6});
        const auto h = layer_norm(gelu(matmul(x, w)), Tensor::full({6}, 1.0), Tensor::zeros({6}));
        const std::vector<int> t{0, 5, 2, 3};
        const auto loss = cross_entropy(matmul(h, w), t);
        backward(loss);
        auto out = w.grad();
        out.push_back(loss.item());
        return out;
    };
    EXPECT_EQ(once(), once());
}

TEST(GradCheck, SumIsExact) {
    std::mt19937_64 rng(3);
    auto x = random_tensor(rng, {4, 3});
    const auto rep = grad_check([&] { return sum(x); }, {{"x", x}});
    EXPECT_TRUE(rep.passed);
    EXPECT_LT(rep.max_rel_error, 1e-9);
}

TEST(GradCheck, TwoLayerMlp) {
    std::mt19937_64 rng(123);
    auto x = random_tensor(rng, {5, 4});
    auto w1 = random_tensor(rng, {4, 8});
    auto b1 = random_tensor(rng, {8});
    auto w2 = random_tensor(rng, {8, 3});
    auto b2 = random_tensor(rng, {3});
    const std::vector<int> t{0, 2, 1, 1, 0};
    const auto f = [&] { return cross_entropy(add(matmul(gelu(add(matmul(x, w1), b1)), w2), b2), t); };
    const auto rep = grad_check(f, {{"x", x}, {"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}},
                                {.step = 1e-5, .tol = 1e-5});
    EXPECT_TRUE(rep.passed) << rep.max_rel_error;
    EXPECT_LE(rep.max_rel_error, 1e-5);
    ASSERT_EQ(rep.leaves.size(), 5u);
    EXPECT_EQ(rep.leaves[1].name, "w1");
    EXPECT_EQ(rep.leaves[1].probed, 32u);
}

TEST(GradCheck, WrongBackwardRuleFails) {
    std::mt19937_64 rng(4);
    auto x = random_tensor(rng, {3, 3});
    const auto f = [&] {
        auto y = exp(x);
        // sabotage: pretend d exp(x)/dx = 2
        y.node()->backward = [](Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * self.grad[i];
        };
        return sum(y);
    };
    const auto rep = grad_check(f, {{"x", x}});
    EXPECT_FALSE(rep.passed);
    EXPECT_GT(rep.max_rel_error, 1e-2);
}

TEST(GradCheck, NonFiniteIsFlagged) {
    auto x = Tensor::from({2}, {0.0, 1.0}, true);
    const auto rep = grad_check([&] { return sum(log(x)); }, {{"x", x}});
    EXPECT_TRUE(rep.non_finite);
    EXPECT_FALSE(rep.passed);
}

TEST(GradCheck, EveryPrimitiveOnRandomShapes) {
    std::mt19937_64 rng(2026);
    for (int trial = 0; trial < 10; ++trial) {
        const Shape s = random_matrix_shape(rng);
        const std::size_t r = s[0], c = s[1];
        auto a = random_tensor(rng, s);
        auto b = random_tensor(rng, s);
        auto row = random_tensor(rng, {c});
        auto pos = random_tensor(rng, s, 0.5, 2.0);
        auto other = random_tensor(rng, {c, r + 1});
        auto gamma = random_tensor(rng, {c}, 0.5, 1.5);
        auto beta = random_tensor(rng, {c});
        auto table = random_tensor(rng, {6, c});
        // keep kinks of abs/relu/max/clamp away from the probe step
        auto away = [&](Tensor t) {
            for (auto& v : t.mutable_data()) v = (v < 0 ? -1.0 : 1.0) * (0.05 + std::abs(v));
            return t;
        };
        a = away(a);
        auto diff = away(random_tensor(rng, s));
        auto b2 = Tensor::from(s, std::vector<double>(a.numel()), true);
        for (std::size_t i = 0; i < a.numel(); ++i) b2.mutable_data()[i] = a[i] + diff[i];
        std::uniform_int_distribution<int> cls(0, static_cast<int>(c) - 1);
        std::vector<int> targets(r);
        for (auto& t : targets) t = cls(rng);
        std::uniform_int_distribution<int> tid(0, 5);
        std::vector<int> ids(r + 2);
        for (auto& t : ids) t = tid(rng);
        const std::size_t cut = r > 1 ? r / 2 : 1;

        const std::string tag = " trial " + std::to_string(trial) + " shape " + shape_str(s);
        expect_passes([&] { return weighted_sum(add(a, b)); }, {{"a", a}, {"b", b}}, "add" + tag);
        expect_passes([&] { return weighted_sum(add(a, row)); }, {{"a", a}, {"row", row}}, "add-row" + tag);
        expect_passes([&] { return weighted_sum(sub(a, b)); }, {{"a", a}, {"b", b}}, "sub" + tag);
        expect_passes([&] { return weighted_sum(mul(a, b)); }, {{"a", a}, {"b", b}}, "mul" + tag);
        expect_passes([&] { return weighted_sum(mul(a, row)); }, {{"a", a}, {"row", row}}, "mul-row" + tag);
        expect_passes([&] { return weighted_sum(maximum(a, b2)); }, {{"a", a}, {"b", b2}}, "maximum" + tag);
        expect_passes([&] { return weighted_sum(minimum(a, b2)); }, {{"a", a}, {"b", b2}}, "minimum" + tag);
        expect_passes([&] { return weighted_sum(scale(a, -1.7)); }, {{"a", a}}, "scale" + tag);
        expect_passes([&] { return weighted_sum(add_scalar(a, 0.4)); }, {{"a", a}}, "add_scalar" + tag);
        expect_passes([&] { return weighted_sum(clamp(a, -0.02, 0.02)); }, {{"a", a}}, "clamp" + tag);
        expect_passes([&] { return weighted_sum(exp(a)); }, {{"a", a}}, "exp" + tag);
        expect_passes([&] { return weighted_sum(log(pos)); }, {{"pos", pos}}, "log" + tag);
        expect_passes([&] { return weighted_sum(pow(pos, 1.5)); }, {{"pos", pos}}, "pow" + tag);
        expect_passes([&] { return weighted_sum(abs(a)); }, {{"a", a}}, "abs" + tag);
        expect_passes([&] { return weighted_sum(sigmoid(a)); }, {{"a", a}}, "sigmoid" + tag);
        expect_passes([&] { return weighted_sum(gelu(a)); }, {{"a", a}}, "gelu" + tag);
        expect_passes([&] { return weighted_sum(relu(a)); }, {{"a", a}}, "relu" + tag);
        expect_passes([&] { return weighted_sum(matmul(a, other)); }, {{"a", a}, {"other", other}}, "matmul" + tag);
        expect_passes([&] { return weighted_sum(transpose(a)); }, {{"a", a}}, "transpose" + tag);
        expect_passes([&] { return weighted_sum(reshape(a, {r * c})); }, {{"a", a}}, "reshape" + tag);
        expect_passes([&] { return weighted_sum(concat({a, b}, 0)); }, {{"a", a}, {"b", b}}, "concat0" + tag);
        expect_passes([&] { return weighted_sum(concat({a, b}, 1)); }, {{"a", a}, {"b", b}}, "concat1" + tag);
        expect_passes([&] { return weighted_sum(slice(a, 0, 0, cut)); }, {{"a", a}}, "slice0" + tag);
        expect_passes([&] { return weighted_sum(slice(a, 1, c - 1, c)); }, {{"a", a}}, "slice1" + tag);
        expect_passes([&] { return mul(sum(a), mean(b)); }, {{"a", a}, {"b", b}}, "sum-mean" + tag);
        expect_passes([&] { return weighted_sum(softmax(a)); }, {{"a", a}}, "softmax" + tag);
        if (c > 1) {
            expect_passes([&] { return weighted_sum(layer_norm(a, gamma, beta)); },
                          {{"a", a}, {"gamma", gamma}, {"beta", beta}}, "layer_norm" + tag);
        }
        expect_passes([&] { return weighted_sum(embedding(table, ids)); }, {{"table", table}}, "embedding" + tag);
        expect_passes([&] { return cross_entropy(a, targets); }, {{"a", a}}, "cross_entropy" + tag);
    }
}

}  // namespace
}  // namespace edvtg::ad
