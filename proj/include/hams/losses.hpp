#pragma once

#include <map>
#include <string>
#include <vector>

#include "hams/geometry.hpp"

namespace hams {

// Weights of the total training loss; defaults follow the published recipe.
struct LossWeights {
    double lambda_seg = 0.01;
    double lambda_dp = 1.0;
    double lambda_mask = 1.0;
};

// Scalar loss plus analytic gradients, keyed by input name ("pred", "conf",
// "desc0", ...). Buffer length equals the input's degrees of freedom.
struct LossValue {
    double value = 0.0;
    std::map<std::string, std::vector<double>> gradients;
};

struct PixelMatch {
    int x0 = 0, y0 = 0;
    int x1 = 0, y1 = 0;
};

// mean over valid pixels of [ C * ||pred - truth|| - alpha * log C ].
// Metric-space supervision, Euclidean (not squared) distance.
// Gradients: "pred" (3 per pixel, xyz), "conf" (1 per pixel).
LossValue confidence_regression_loss(const Pointmap& pred, const Pointmap& truth,
                                     const ConfidenceMap& conf, const MaskGrid& valid,
                                     double alpha = 0.2);

// Symmetric InfoNCE over the true match set; negatives are the other matches
// (in-batch style). Gradients: "desc0", "desc1" (full H*W*D buffers).
LossValue infonce_matching_loss(const DescGrid& desc0, const DescGrid& desc1,
                                const std::vector<PixelMatch>& true_matches,
                                double temperature = 0.07);

// Mask2Former-style set loss: exact Hungarian matching between queries and GT
// instances on a combined (classification + BCE + dice) cost, then
// human/background cross-entropy over all queries plus BCE + dice over the
// matched masks. class_logits[k] > 0 means "human".
// Gradients: "mask_logits" (K*H*W), "class_logits" (K).
LossValue segmentation_loss(const std::vector<Grid<double>>& query_mask_logits,
                            const std::vector<double>& query_class_logits,
                            const std::vector<MaskGrid>& gt_instances);

// Mean over valid pixels of the per-pixel channel-summed squared error.
// An empty valid set yields 0 with zero gradient (human-free batches pass
// through). Gradient: "pred" (3 per pixel).
LossValue densepose_loss(const VecGrid& pred, const VecGrid& gt, const MaskGrid& valid);

// Mean binary cross-entropy with logits, numerically stable. Gradient:
// "logits".
LossValue binary_mask_loss(const Grid<double>& pred_logits, const MaskGrid& gt);

// l_recon + lambda_seg * l_seg + lambda_dp * l_dp + lambda_mask * l_mask
double total_loss(double l_recon, double l_seg, double l_dp, double l_mask,
                  const LossWeights& w = {});

// Combined matching cost used by segmentation_loss, exposed for testing the
// assignment against brute force: cost[q*G + g].
std::vector<double> segmentation_matching_costs(const std::vector<Grid<double>>& query_mask_logits,
                                                const std::vector<double>& query_class_logits,
                                                const std::vector<MaskGrid>& gt_instances);

// 1 - 2|A.B| / (|A| + |B|) on sigmoid probabilities; 0 when both masks are
// empty. The dice component of segmentation_loss.
double dice_loss(const Grid<double>& mask_logits, const MaskGrid& gt);

}  // namespace hams
