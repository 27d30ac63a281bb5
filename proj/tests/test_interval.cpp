// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "edvtg/interval.hpp"
#include "oracles.hpp"

namespace edvtg {
namespace {

using oracle::grid_interval;

TEST(Conversion, ToStartEnd) {
    EXPECT_EQ(to_start_end({0.5, 1.0}), (TemporalInterval{0.0, 1.0}));
    const auto a = to_start_end({0.4, 0.4});
    EXPECT_NEAR(a.start, 0.2, 1e-15);
    EXPECT_NEAR(a.end, 0.6, 1e-15);
    const auto b = to_start_end({0.05, 0.2});
    EXPECT_EQ(b.start, 0.0);
    EXPECT_NEAR(b.end, 0.15, 1e-15);
}

TEST(Conversion, ToCenterWidth) {
    const auto a = to_center_width({0.2, 0.6});
    EXPECT_NEAR(a.center, 0.4, 1e-15);
    EXPECT_NEAR(a.width, 0.4, 1e-15);
    EXPECT_EQ(to_center_width({0.0, 1.0}).center, 0.5);
    EXPECT_EQ(to_center_width({0.3, 0.3}).width, 0.0);
}

TEST(Conversion, RoundTripWithoutClamping) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double c = u(rng);
        const double w = 2.0 * std::min(c, 1.0 - c) * u(rng);
        const auto back = to_center_width(to_start_end({c, w}));
        EXPECT_NEAR(back.center, c, 1e-15);
        EXPECT_NEAR(back.width, w, 1e-15);
    }
}

TEST(TemporalIntervalTest, MakeRejectsInvalid) {
    EXPECT_THROW(TemporalInterval::make(0.6, 0.2), std::invalid_argument);
    EXPECT_THROW(TemporalInterval::make(-0.1, 0.2), std::invalid_argument);
    EXPECT_NO_THROW(TemporalInterval::make(0.3, 0.3));
}

TEST(Overlap, Examples) {
    EXPECT_EQ(iou({0.25, 0.75}, {0.25, 0.75}), 1.0);
    EXPECT_EQ(iou({0.0, 0.2}, {0.5, 0.9}), 0.0);
    EXPECT_NEAR(iou({0.2, 0.6}, {0.4, 0.8}), 1.0 / 3.0, 1e-12);
    EXPECT_EQ(giou({0.3, 0.7}, {0.3, 0.7}), 1.0);
    EXPECT_NEAR(giou({0.0, 0.2}, {0.8, 1.0}), -0.6, 1e-12);
    EXPECT_NEAR(giou({0.2, 0.6}, {0.4, 0.8}), iou({0.2, 0.6}, {0.4, 0.8}), 1e-15);
    EXPECT_EQ(iop({0.3, 0.9}, {0.0, 1.0}).value(), 1.0);
    EXPECT_NEAR(iop({0.2, 0.6}, {0.3, 0.9}).value(), 0.75, 1e-12);
    EXPECT_EQ(iop({0.0, 0.1}, {0.5, 0.9}).value(), 0.0);
}

TEST(Overlap, Degenerate) {
    EXPECT_EQ(iou({0.3, 0.3}, {0.3, 0.3}), 1.0);
    EXPECT_EQ(iou({0.3, 0.3}, {0.4, 0.4}), 0.0);
    EXPECT_EQ(giou({0.3, 0.3}, {0.3, 0.3}), 1.0);
    EXPECT_NEAR(giou({0.2, 0.2}, {0.6, 0.6}), -1.0, 1e-15);
    EXPECT_FALSE(iop({0.4, 0.4}, {0.0, 1.0}).has_value());
}

TEST(Overlap, Properties) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 5000; ++i) {
        const auto a = grid_interval(rng);
        const auto b = grid_interval(rng);
        const double u = iou(a, b), g = giou(a, b);
        EXPECT_EQ(u, iou(b, a));
        EXPECT_EQ(g, giou(b, a));
        EXPECT_GE(u, 0.0);
        EXPECT_LE(u, 1.0);
        EXPECT_GT(g, -1.0);
        EXPECT_LE(g, 1.0);
        EXPECT_LE(g, u);
        if (intersection_length(a, b) > 0.0) {
            EXPECT_EQ(g, u);
        } else if (hull_length(a, b) > a.length() + b.length()) {
            EXPECT_LT(g, u);
        }
    }
}

TEST(Overlap, IouNonIncreasingUnderTranslation) {
    const TemporalInterval a{0.2, 0.4};
    double prev = 2.0;
    for (int k = 0; k <= 60; ++k) {
        const double s = 0.2 + 0.01 * k;
        const double cur = iou(a, {s, std::min(1.0, s + 0.2)});
        if (s + 0.2 <= 1.0) {
            EXPECT_LE(cur, prev + 1e-15);
        }
        prev = cur;
    }
}

TEST(Overlap, MatchesDiscretisation) {
    std::mt19937_64 rng(2026);
    for (int i = 0; i < 100; ++i) {
        const auto a = grid_interval(rng);
        const auto b = grid_interval(rng);
        const auto ref = oracle::binned(a, b);
        EXPECT_NEAR(iou(a, b), ref.iou, 2e-6) << to_string(a) << " " << to_string(b);
        EXPECT_NEAR(giou(a, b), ref.giou, 2e-6) << to_string(a) << " " << to_string(b);
        EXPECT_NEAR(iop(a, b).value(), ref.iop, 2e-6) << to_string(a) << " " << to_string(b);
    }
}

}  // namespace
}  // namespace edvtg
