// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

// Training losses: next-token cross-entropy and the interval regression loss
//
//   L = lambda_lm * L_lm + lambda_l1 * (|c^ - c| + |w^ - w|) + lambda_giou * (1 - gIoU)
//
// Point targets keep only the center term.

#pragma once

#include <span>
#include <stdexcept>

#include "edvtg/autodiff.hpp"
#include "edvtg/dataset.hpp"

namespace edvtg {

struct LossWeights {
    double lambda_lm = 2.0;
    double lambda_l1 = 1.0;
    double lambda_giou = 1.0;

    void validate() const;
};

struct LossBreakdown {
    double lm = 0.0;
    double l1 = 0.0;
    double giou_term = 0.0;
    double total = 0.0;
};

/// Thrown by combined_loss; names the offending term.
class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mean cross-entropy over positions whose target is not -1.
ad::Tensor lm_loss(const ad::Tensor& lm_logits, std::span<const int> targets);

/// Unweighted pieces of the grounding loss for one prediction.
struct GroundingTerms {
    ad::Tensor l1;         // |c^ - c| + |w^ - w|, or |c^ - t| for points
    ad::Tensor giou_term;  // 1 - gIoU, or constant 0 for points
};

/// pred_cw has shape (1, 2) holding (center, width).
GroundingTerms grounding_terms(const ad::Tensor& pred_cw, const QueryTarget& target);

/// lambda_l1 * l1 + lambda_giou * giou_term.
ad::Tensor grounding_loss(const ad::Tensor& pred_cw, const QueryTarget& target, const LossWeights& w);

LossBreakdown combined_loss(double lm, double l1, double giou_term, const LossWeights& w);

}  // namespace edvtg
