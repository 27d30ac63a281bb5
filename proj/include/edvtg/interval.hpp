// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>

namespace edvtg {

/// A span of a video expressed as fractions of its duration.
/// Invariant: 0 <= start <= end <= 1.
struct TemporalInterval {
    double start = 0.0;
    double end = 0.0;

    double length() const { return end - start; }
    bool valid() const;

    /// Validating constructor; throws std::invalid_argument on a bad span.
    static TemporalInterval make(double start, double end);

    friend bool operator==(const TemporalInterval&, const TemporalInterval&) = default;
};

/// The (center, width) parameterization regressed by the interval decoder.
struct CenterWidth {
    double center = 0.5;
    double width = 0.0;

    friend bool operator==(const CenterWidth&, const CenterWidth&) = default;
};

/// A single-timestamp annotation, normalized like TemporalInterval.
struct PointAnnotation {
    double t = 0.0;

    friend bool operator==(const PointAnnotation&, const PointAnnotation&) = default;
};

/// Clamps the implied span to [0, 1]; never fails.
TemporalInterval to_start_end(const CenterWidth& cw);
CenterWidth to_center_width(const TemporalInterval& iv);

double intersection_length(const TemporalInterval& a, const TemporalInterval& b);

/// Length of the smallest interval containing both.
double hull_length(const TemporalInterval& a, const TemporalInterval& b);

/// Two zero-length intervals have IoU 1 when equal and 0 otherwise.
double iou(const TemporalInterval& a, const TemporalInterval& b);

/// iou - (|hull| - |union|) / |hull|. Two equal points give 1; two distinct
/// points give -1. Equals iou whenever the intervals touch or overlap.
double giou(const TemporalInterval& a, const TemporalInterval& b);

/// Intersection over the prediction's length. Empty when `pred` has zero
/// length, which callers treat as a degenerate prediction.
std::optional<double> iop(const TemporalInterval& pred, const TemporalInterval& gt);

std::string to_string(const TemporalInterval& iv);

}  // namespace edvtg
