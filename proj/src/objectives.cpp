// Copyright 2026 The edvtg Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "edvtg/objectives.hpp"

namespace edvtg {

using ad::Tensor;

void LossWeights::validate() const {
    if (!(lambda_lm >= 0.0) || !(lambda_l1 >= 0.0) || !(lambda_giou >= 0.0)) {
        throw std::invalid_argument("loss weights must be non-negative");
    }
    if (lambda_lm + lambda_l1 + lambda_giou == 0.0) throw std::invalid_argument("loss weights must not all be zero");
}

Tensor lm_loss(const Tensor& lm_logits, std::span<const int> targets) {
    if (lm_logits.dim() != 2 || lm_logits.rows() != targets.size()) {
        throw ad::ShapeError("lm_loss", lm_logits.shape(), {targets.size()});
    }
    bool any = false;
    for (int t : targets) any = any || t >= 0;
    if (!any) throw std::invalid_argument("lm_loss: every position is padding");
    return ad::cross_entropy(lm_logits, targets);
}

GroundingTerms grounding_terms(const Tensor& pred_cw, const QueryTarget& target) {
    if (pred_cw.numel() != 2) throw ad::ShapeError("grounding_loss", pred_cw.shape(), {1, 2});
    const Tensor c = ad::slice(pred_cw, 1, 0, 1);
    if (const auto* p = std::get_if<PointAnnotation>(&target)) {
        return {ad::sum(ad::abs(ad::add_scalar(c, -p->t))), Tensor::scalar(0.0)};
    }
    const auto* iv = std::get_if<TemporalInterval>(&target);
    if (!iv) throw std::invalid_argument("grounding_loss: query has no grounding target");
    const CenterWidth gt = to_center_width(*iv);
    const Tensor w = ad::slice(pred_cw, 1, 1, 2);
    const Tensor l1 = ad::sum(ad::add(ad::abs(ad::add_scalar(c, -gt.center)), ad::abs(ad::add_scalar(w, -gt.width))));

    // predicted span, clamped to [0, 1] as in to_start_end
    const Tensor half = ad::scale(w, 0.5);
    const Tensor s = ad::clamp(ad::sub(c, half), 0.0, 1.0);
    const Tensor e = ad::maximum(ad::clamp(ad::add(c, half), 0.0, 1.0), s);
    const Tensor gs = Tensor::scalar(iv->start);
    const Tensor ge = Tensor::scalar(iv->end);
    const Tensor inter = ad::clamp(ad::sub(ad::minimum(e, ge), ad::maximum(s, gs)), 0.0, 1.0);
    const Tensor uni = ad::sub(ad::add_scalar(ad::sub(e, s), iv->length()), inter);
    const Tensor hull = ad::sub(ad::maximum(e, ge), ad::minimum(s, gs));

    Tensor g;
    if (hull.item() <= 0.0) {
        g = Tensor::scalar(1.0);
    } else if (uni.item() <= 0.0) {
        g = Tensor::scalar(0.0);
    } else {
        // iou - (hull - union) / hull = inter / union + union / hull - 1
        const Tensor iou = ad::mul(inter, ad::pow(uni, -1.0));
        g = ad::add_scalar(ad::add(iou, ad::mul(uni, ad::pow(hull, -1.0))), -1.0);
    }
    return {l1, ad::sum(ad::neg(ad::add_scalar(g, -1.0)))};
}

Tensor grounding_loss(const Tensor& pred_cw, const QueryTarget& target, const LossWeights& w) {
    const auto t = grounding_terms(pred_cw, target);
    return ad::add(ad::scale(t.l1, w.lambda_l1), ad::scale(t.giou_term, w.lambda_giou));
}

LossBreakdown combined_loss(double lm, double l1, double giou_term, const LossWeights& w) {
    if (!std::isfinite(lm)) throw NonFiniteLoss("lm loss is not finite");
    if (!std::isfinite(l1)) throw NonFiniteLoss("l1 loss is not finite");
    if (!std::isfinite(giou_term)) throw NonFiniteLoss("giou loss term is not finite");
    LossBreakdown b{lm, l1, giou_term, 0.0};
    b.total = w.lambda_lm * lm + w.lambda_l1 * l1 + w.lambda_giou * giou_term;
    return b;
}

}  // namespace edvtg
