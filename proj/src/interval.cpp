// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include "edvtg/interval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace edvtg {

bool TemporalInterval::valid() const {
    return std::isfinite(start) && std::isfinite(end) && start >= 0.0 && start <= end && end <= 1.0;
}

TemporalInterval TemporalInterval::make(double start, double end) {
    TemporalInterval iv{start, end};
    if (!iv.valid()) {
        throw std::invalid_argument("invalid temporal interval " + to_string(iv) +
                                    ": need 0 <= start <= end <= 1");
    }
    return iv;
}

TemporalInterval to_start_end(const CenterWidth& cw) {
    const double half = 0.5 * cw.width;
    double s = std::clamp(cw.center - half, 0.0, 1.0);
    double e = std::clamp(cw.center + half, 0.0, 1.0);
    // a negative width would otherwise invert the span
    if (e < s) e = s;
    return {s, e};
}

CenterWidth to_center_width(const TemporalInterval& iv) {
    return {0.5 * (iv.start + iv.end), iv.end - iv.start};
}

double intersection_length(const TemporalInterval& a, const TemporalInterval& b) {
    return std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
}

double hull_length(const TemporalInterval& a, const TemporalInterval& b) {
    return std::max(a.end, b.end) - std::min(a.start, b.start);
}

double iou(const TemporalInterval& a, const TemporalInterval& b) {
    const double inter = intersection_length(a, b);
    const double uni = a.length() + b.length() - inter;
    if (uni <= 0.0) return a == b ? 1.0 : 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

double giou(const TemporalInterval& a, const TemporalInterval& b) {
    const double hull = hull_length(a, b);
    if (hull <= 0.0) return 1.0;
    const double inter = intersection_length(a, b);
    // overlapping spans have hull == union; rounding must not push giou above iou
    if (inter > 0.0) return iou(a, b);
    const double uni = a.length() + b.length();
    return iou(a, b) - std::max(0.0, hull - uni) / hull;
}

std::optional<double> iop(const TemporalInterval& pred, const TemporalInterval& gt) {
    const double len = pred.length();
    if (len <= 0.0) return std::nullopt;
    return std::clamp(intersection_length(pred, gt) / len, 0.0, 1.0);
}

std::string to_string(const TemporalInterval& iv) {
    std::ostringstream os;
    os << '[' << iv.start << ", " << iv.end << ']';
    return os.str();
}

}  // namespace edvtg
