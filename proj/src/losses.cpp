#include "hams/losses.hpp"

#include <cmath>

#include "hams/hungarian.hpp"

namespace hams {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + exp(x)) without overflow
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// BCE with logits for target in {0,1}: softplus(x) - t*x
double bce_logit(double logit, double target) { return softplus(logit) - target * logit; }

void check_shape(bool ok, const char* what) {
    if (!ok) throw ShapeMismatch(what);
}

struct MaskStats {
    double bce = 0.0;       // mean BCE over pixels
    double inter = 0.0;     // sum p*g
    double psum = 0.0;      // sum p
    double gsum = 0.0;      // sum g
    double dice() const {
        double denom = psum + gsum;
        return denom < 1e-12 ? 0.0 : 1.0 - 2.0 * inter / denom;
    }
};

MaskStats mask_stats(const Grid<double>& logits, const MaskGrid& gt) {
    MaskStats s;
    for (size_t i = 0; i < logits.data.size(); ++i) {
        double g = gt.data[i] ? 1.0 : 0.0;
        double p = sigmoid(logits.data[i]);
        s.bce += bce_logit(logits.data[i], g);
        s.inter += p * g;
        s.psum += p;
        s.gsum += g;
    }
    s.bce /= static_cast<double>(logits.data.size());
    return s;
}

}  // namespace

double dice_loss(const Grid<double>& mask_logits, const MaskGrid& gt) {
    return mask_stats(mask_logits, gt).dice();
}

LossValue confidence_regression_loss(const Pointmap& pred, const Pointmap& truth,
                                     const ConfidenceMap& conf, const MaskGrid& valid,
                                     double alpha) {
    const int w = pred.width(), h = pred.height();
    check_shape(truth.points.same_shape(w, h) && conf.same_shape(w, h) && valid.same_shape(w, h),
                "confidence_regression_loss: shapes differ");
    if (alpha <= 0) throw Error("confidence_regression_loss: alpha must be positive");

    LossValue out;
    auto& g_pred = out.gradients["pred"];
    auto& g_conf = out.gradients["conf"];
    g_pred.assign(pred.points.size() * 3, 0.0);
    g_conf.assign(conf.size(), 0.0);

    size_t n_valid = 0;
    for (size_t i = 0; i < valid.data.size(); ++i)
        if (valid.data[i]) ++n_valid;
    if (n_valid == 0) return out;

    const double inv_n = 1.0 / static_cast<double>(n_valid);
    double total = 0.0;
    for (size_t i = 0; i < valid.data.size(); ++i) {
        if (!valid.data[i]) continue;
        double c = conf.data[i];
        if (c < 1.0) throw Error("confidence_regression_loss: confidence below 1");
        Vec3 diff = pred.points.data[i] - truth.points.data[i];
        double dist = diff.norm();
        total += c * dist - alpha * std::log(c);
        g_conf[i] = (dist - alpha / c) * inv_n;
        if (dist > 1e-15) {
            Vec3 g = (c * inv_n / dist) * diff;
            g_pred[3 * i + 0] = g.x();
            g_pred[3 * i + 1] = g.y();
            g_pred[3 * i + 2] = g.z();
        }
    }
    out.value = total * inv_n;
    return out;
}

LossValue infonce_matching_loss(const DescGrid& desc0, const DescGrid& desc1,
                                const std::vector<PixelMatch>& matches, double temperature) {
    if (matches.empty()) throw EmptyMatchSet("infonce_matching_loss: no matches");
    check_shape(desc0.dim == desc1.dim, "infonce_matching_loss: descriptor dims differ");
    if (temperature <= 0) throw Error("infonce_matching_loss: temperature must be positive");
    const int n = static_cast<int>(matches.size());
    const int d = desc0.dim;

    for (const auto& m : matches) {
        if (m.x0 < 0 || m.x0 >= desc0.width || m.y0 < 0 || m.y0 >= desc0.height ||
            m.x1 < 0 || m.x1 >= desc1.width || m.y1 < 0 || m.y1 >= desc1.height)
            throw ShapeMismatch("infonce_matching_loss: match pixel out of range");
    }

    // similarity matrix over the match set
    std::vector<double> s(static_cast<size_t>(n) * n);
    for (int k = 0; k < n; ++k) {
        const double* a = desc0.at(matches[k].x0, matches[k].y0);
        for (int l = 0; l < n; ++l) {
            const double* b = desc1.at(matches[l].x1, matches[l].y1);
            double dot = 0.0;
            for (int c = 0; c < d; ++c) dot += a[c] * b[c];
            s[static_cast<size_t>(k) * n + l] = dot / temperature;
        }
    }

    // dL/dS, accumulated over both directions
    std::vector<double> ds(static_cast<size_t>(n) * n, 0.0);
    const double inv = 1.0 / (2.0 * n);
    double total = 0.0;
    std::vector<double> prob(n);
    for (int k = 0; k < n; ++k) {  // direction 0 -> 1: softmax over row k
        double mx = s[static_cast<size_t>(k) * n];
        for (int l = 1; l < n; ++l) mx = std::max(mx, s[static_cast<size_t>(k) * n + l]);
        double z = 0.0;
        for (int l = 0; l < n; ++l) z += std::exp(s[static_cast<size_t>(k) * n + l] - mx);
        total += -s[static_cast<size_t>(k) * n + k] + mx + std::log(z);
        for (int l = 0; l < n; ++l) {
            prob[l] = std::exp(s[static_cast<size_t>(k) * n + l] - mx) / z;
            ds[static_cast<size_t>(k) * n + l] += inv * (prob[l] - (l == k ? 1.0 : 0.0));
        }
    }
    for (int k = 0; k < n; ++k) {  // direction 1 -> 0: softmax over column k
        double mx = s[static_cast<size_t>(0) * n + k];
        for (int l = 1; l < n; ++l) mx = std::max(mx, s[static_cast<size_t>(l) * n + k]);
        double z = 0.0;
        for (int l = 0; l < n; ++l) z += std::exp(s[static_cast<size_t>(l) * n + k] - mx);
        total += -s[static_cast<size_t>(k) * n + k] + mx + std::log(z);
        for (int l = 0; l < n; ++l) {
            prob[l] = std::exp(s[static_cast<size_t>(l) * n + k] - mx) / z;
            ds[static_cast<size_t>(l) * n + k] += inv * (prob[l] - (l == k ? 1.0 : 0.0));
        }
    }

    LossValue out;
    out.value = total * inv;
    auto& g0 = out.gradients["desc0"];
    auto& g1 = out.gradients["desc1"];
    g0.assign(desc0.data.size(), 0.0);
    g1.assign(desc1.data.size(), 0.0);
    for (int k = 0; k < n; ++k) {
        size_t o0 = (static_cast<size_t>(matches[k].y0) * desc0.width + matches[k].x0) * d;
        const double* a = desc0.at(matches[k].x0, matches[k].y0);
        for (int l = 0; l < n; ++l) {
            double dskl = ds[static_cast<size_t>(k) * n + l];
            if (dskl == 0.0) continue;
            size_t o1 = (static_cast<size_t>(matches[l].y1) * desc1.width + matches[l].x1) * d;
            const double* b = desc1.at(matches[l].x1, matches[l].y1);
            for (int c = 0; c < d; ++c) {
                g0[o0 + c] += dskl * b[c] / temperature;
                g1[o1 + c] += dskl * a[c] / temperature;
            }
        }
    }
    return out;
}

std::vector<double> segmentation_matching_costs(const std::vector<Grid<double>>& query_mask_logits,
                                                const std::vector<double>& query_class_logits,
                                                const std::vector<MaskGrid>& gt_instances) {
    const int k = static_cast<int>(query_mask_logits.size());
    const int g = static_cast<int>(gt_instances.size());
    std::vector<double> cost(static_cast<size_t>(k) * g, 0.0);
    for (int q = 0; q < k; ++q) {
        for (int j = 0; j < g; ++j) {
            MaskStats s = mask_stats(query_mask_logits[q], gt_instances[j]);
            cost[static_cast<size_t>(q) * g + j] = s.bce + s.dice() + softplus(-query_class_logits[q]);
        }
    }
    return cost;
}

LossValue segmentation_loss(const std::vector<Grid<double>>& query_mask_logits,
                            const std::vector<double>& query_class_logits,
                            const std::vector<MaskGrid>& gt_instances) {
    const int k = static_cast<int>(query_mask_logits.size());
    const int g = static_cast<int>(gt_instances.size());
    if (k == 0 || query_class_logits.size() != static_cast<size_t>(k))
        throw ShapeMismatch("segmentation_loss: query lists inconsistent");
    if (g > k) throw TooManyInstances("segmentation_loss: more GT instances than queries");
    const int w = query_mask_logits[0].width, h = query_mask_logits[0].height;
    for (const auto& m : query_mask_logits)
        check_shape(m.same_shape(w, h), "segmentation_loss: query mask shapes differ");
    for (const auto& m : gt_instances)
        check_shape(m.same_shape(w, h), "segmentation_loss: GT mask shapes differ");
    const size_t npix = static_cast<size_t>(w) * h;

    // Hungarian on the transposed matrix so every GT gets a query.
    std::vector<int> gt_to_query(g, -1);
    if (g > 0) {
        std::vector<double> cost = segmentation_matching_costs(query_mask_logits, query_class_logits,
                                                               gt_instances);
        std::vector<double> cost_t(static_cast<size_t>(g) * k);
        for (int q = 0; q < k; ++q)
            for (int j = 0; j < g; ++j)
                cost_t[static_cast<size_t>(j) * k + q] = cost[static_cast<size_t>(q) * g + j];
        gt_to_query = solve_assignment(cost_t, g, k);
    }
    std::vector<int> query_to_gt(k, -1);
    for (int j = 0; j < g; ++j) query_to_gt[gt_to_query[j]] = j;

    LossValue out;
    auto& g_mask = out.gradients["mask_logits"];
    auto& g_class = out.gradients["class_logits"];
    g_mask.assign(static_cast<size_t>(k) * npix, 0.0);
    g_class.assign(static_cast<size_t>(k), 0.0);

    // classification: human for matched queries, background otherwise
    double cls = 0.0;
    for (int q = 0; q < k; ++q) {
        double target = query_to_gt[q] >= 0 ? 1.0 : 0.0;
        cls += bce_logit(query_class_logits[q], target);
        g_class[q] = (sigmoid(query_class_logits[q]) - target) / k;
    }
    cls /= k;

    // mask terms over matched pairs
    double mask_total = 0.0;
    if (g > 0) {
        for (int j = 0; j < g; ++j) {
            int q = gt_to_query[j];
            const Grid<double>& logits = query_mask_logits[q];
            MaskStats s = mask_stats(logits, gt_instances[j]);
            double dice = s.dice();
            mask_total += s.bce + dice;

            double denom = s.psum + s.gsum;
            for (size_t i = 0; i < npix; ++i) {
                double gt = gt_instances[j].data[i] ? 1.0 : 0.0;
                double p = sigmoid(logits.data[i]);
                // d_bce already carries the sigmoid derivative via the logit
                // form; the dice term needs it explicitly
                double d_bce = (p - gt) / static_cast<double>(npix);
                double d_dice = 0.0;
                if (denom >= 1e-12)
                    d_dice = (2.0 * s.inter / (denom * denom) - 2.0 * gt / denom) * p * (1.0 - p);
                g_mask[static_cast<size_t>(q) * npix + i] += (d_bce + d_dice) / g;
            }
        }
        mask_total /= g;
    }

    out.value = cls + mask_total;
    return out;
}

LossValue densepose_loss(const VecGrid& pred, const VecGrid& gt, const MaskGrid& valid) {
    check_shape(gt.same_shape(pred.width, pred.height) && valid.same_shape(pred.width, pred.height),
                "densepose_loss: shapes differ");
    LossValue out;
    auto& grad = out.gradients["pred"];
    grad.assign(pred.size() * 3, 0.0);

    size_t n_valid = 0;
    for (auto v : valid.data)
        if (v) ++n_valid;
    if (n_valid == 0) return out;  // defined as 0 for human-free batches

    const double inv_n = 1.0 / static_cast<double>(n_valid);
    double total = 0.0;
    for (size_t i = 0; i < valid.data.size(); ++i) {
        if (!valid.data[i]) continue;
        Vec3 diff = pred.data[i] - gt.data[i];
        total += diff.squaredNorm();
        grad[3 * i + 0] = 2.0 * diff.x() * inv_n;
        grad[3 * i + 1] = 2.0 * diff.y() * inv_n;
        grad[3 * i + 2] = 2.0 * diff.z() * inv_n;
    }
    out.value = total * inv_n;
    return out;
}

LossValue binary_mask_loss(const Grid<double>& pred_logits, const MaskGrid& gt) {
    check_shape(gt.same_shape(pred_logits.width, pred_logits.height),
                "binary_mask_loss: shapes differ");
    if (pred_logits.data.empty()) throw ShapeMismatch("binary_mask_loss: empty grid");
    LossValue out;
    auto& grad = out.gradients["logits"];
    grad.assign(pred_logits.data.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(pred_logits.data.size());
    double total = 0.0;
    for (size_t i = 0; i < pred_logits.data.size(); ++i) {
        double t = gt.data[i] ? 1.0 : 0.0;
        total += bce_logit(pred_logits.data[i], t);
        grad[i] = (sigmoid(pred_logits.data[i]) - t) * inv_n;
    }
    out.value = total * inv_n;
    return out;
}

double total_loss(double l_recon, double l_seg, double l_dp, double l_mask,
                  const LossWeights& w) {
    return l_recon + w.lambda_seg * l_seg + w.lambda_dp * l_dp + w.lambda_mask * l_mask;
}

}  // namespace hams
