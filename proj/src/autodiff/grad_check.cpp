// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>

#include "edvtg/autodiff.hpp"

namespace edvtg::ad {

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& leaves,
                           const GradCheckOptions& opts) {
    if (!(opts.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

    GradCheckReport report;
    report.leaves.resize(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) report.leaves[i].name = leaves[i].first;

    // analytic pass
    std::vector<Tensor> handles;
    for (const auto& [name, t] : leaves) {
        handles.push_back(t);
        handles.back().zero_grad();
    }
    const Tensor loss = f();
    if (!std::isfinite(loss.item())) report.non_finite = true;
    backward(loss);
    std::vector<std::vector<double>> analytic;
    for (auto& h : handles) analytic.push_back(h.grad());

    // probe list: every element, or a uniform sample over all elements
    std::vector<std::pair<std::size_t, std::size_t>> probes;
    if (opts.probes == 0) {
        for (std::size_t l = 0; l < handles.size(); ++l)
            for (std::size_t e = 0; e < handles[l].numel(); ++e) probes.emplace_back(l, e);
    } else {
        std::size_t total = 0;
        std::vector<std::size_t> cumulative;
        for (auto& h : handles) cumulative.push_back(total += h.numel());
        std::mt19937_64 rng(opts.seed);
        std::uniform_int_distribution<std::size_t> pick(0, total - 1);
        for (std::size_t p = 0; p < opts.probes; ++p) {
            const std::size_t flat = pick(rng);
            const auto l = static_cast<std::size_t>(
                std::upper_bound(cumulative.begin(), cumulative.end(), flat) - cumulative.begin());
            const std::size_t base = l == 0 ? 0 : cumulative[l - 1];
            probes.emplace_back(l, flat - base);
        }
    }

    NoGradGuard no_grad;
    for (const auto& [l, e] : probes) {
        auto data = handles[l].mutable_data();
        const double orig = data[e];
        data[e] = orig + opts.step;
        const double fp = f().item();
        data[e] = orig - opts.step;
        const double fm = f().item();
        data[e] = orig;

        LeafCheck& lc = report.leaves[l];
        ++lc.probed;
        ++report.probed;
        const double numeric = (fp - fm) / (2.0 * opts.step);
        const double a = analytic[l][e];
        if (!std::isfinite(numeric) || !std::isfinite(a)) {
            lc.finite = false;
            report.non_finite = true;
            continue;
        }
        const double abs_err = std::abs(a - numeric);
        const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), opts.denom_floor});
        lc.max_abs_error = std::max(lc.max_abs_error, abs_err);
        lc.max_rel_error = std::max(lc.max_rel_error, rel);
        report.max_rel_error = std::max(report.max_rel_error, rel);
    }
    report.passed = !report.non_finite && report.max_rel_error <= opts.tol;
    return report;
}

}  // namespace edvtg::ad
