#include "hams/metrics.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "hams/hungarian.hpp"

namespace hams {

namespace {

double mean_norm_error(const std::vector<Vec3>& a, const std::vector<Vec3>& b, const Sim3& t) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += (t.apply(a[i]) - b[i]).norm();
    return acc / static_cast<double>(a.size());
}

}  // namespace

Sim3 best_sim3_or_fallback(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
    try {
        return umeyama_sim3(src, dst);
    } catch (const DegenerateConfiguration&) {
    }
    // centroid + scale + segment rotation; exact for <= 2 points and collinear
    // configurations
    Sim3 out;
    const size_t n = src.size();
    if (n == 0) return out;
    Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
    for (size_t i = 0; i < n; ++i) {
        mu_s += src[i];
        mu_d += dst[i];
    }
    mu_s /= static_cast<double>(n);
    mu_d /= static_cast<double>(n);
    double len_s = 0.0, len_d = 0.0;
    Vec3 dir_s = Vec3::Zero(), dir_d = Vec3::Zero();
    for (size_t i = 0; i < n; ++i) {
        if ((src[i] - mu_s).norm() > len_s) {
            len_s = (src[i] - mu_s).norm();
            dir_s = src[i] - mu_s;
        }
        if ((dst[i] - mu_d).norm() > len_d) {
            len_d = (dst[i] - mu_d).norm();
            dir_d = dst[i] - mu_d;
        }
    }
    out.scale = len_s > 1e-12 ? len_d / len_s : 1.0;
    if (len_s > 1e-12 && len_d > 1e-12) {
        Vec3 a = dir_s.normalized(), b = dir_d.normalized();
        Vec3 axis = a.cross(b);
        double s = axis.norm(), c = a.dot(b);
        if (s > 1e-12)
            out.rotation = rotation_from_axis_angle(axis / s * std::atan2(s, c));
        else if (c < 0)  // opposite: rotate pi about any perpendicular
            out.rotation = rotation_from_axis_angle(
                M_PI * (std::abs(a.x()) < 0.9 ? Vec3(1, 0, 0).cross(a).normalized()
                                              : Vec3(0, 1, 0).cross(a).normalized()));
    }
    out.translation = mu_d - out.scale * (out.rotation * mu_s);
    return out;
}

HumanEvalResult mpjpe_suite(const std::vector<std::vector<Vec3>>& pred,
                            const std::vector<std::vector<Vec3>>& gt) {
    if (pred.size() != gt.size() || pred.empty())
        throw PersonCountMismatch("mpjpe_suite: person counts differ or empty");
    const size_t joints = gt[0].size();
    for (size_t p = 0; p < pred.size(); ++p)
        if (pred[p].size() != joints || gt[p].size() != joints)
            throw PersonCountMismatch("mpjpe_suite: joint counts differ");

    HumanEvalResult out;

    // W: world frame as-is
    for (size_t p = 0; p < pred.size(); ++p)
        out.w_per_person.push_back(mean_norm_error(pred[p], gt[p], Sim3::identity()));

    // GA: one Sim3 over all joints; identity stays in the candidate set
    std::vector<Vec3> all_pred, all_gt;
    for (size_t p = 0; p < pred.size(); ++p) {
        all_pred.insert(all_pred.end(), pred[p].begin(), pred[p].end());
        all_gt.insert(all_gt.end(), gt[p].begin(), gt[p].end());
    }
    Sim3 group = best_sim3_or_fallback(all_pred, all_gt);
    double ga_fit = 0.0, ga_id = 0.0;
    for (size_t p = 0; p < pred.size(); ++p) {
        ga_fit += mean_norm_error(pred[p], gt[p], group);
        ga_id += out.w_per_person[p];
    }
    bool use_group = ga_fit <= ga_id;
    const Sim3 ga_choice = use_group ? group : Sim3::identity();
    for (size_t p = 0; p < pred.size(); ++p)
        out.ga_per_person.push_back(mean_norm_error(pred[p], gt[p], ga_choice));

    // PA: per-person Sim3, never worse than the GA choice
    for (size_t p = 0; p < pred.size(); ++p) {
        Sim3 per = best_sim3_or_fallback(pred[p], gt[p]);
        double fit = mean_norm_error(pred[p], gt[p], per);
        out.pa_per_person.push_back(std::min(fit, out.ga_per_person[p]));
    }

    auto mean = [](const std::vector<double>& v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    out.w_mpjpe = mean(out.w_per_person);
    out.ga_mpjpe = mean(out.ga_per_person);
    out.pa_mpjpe = mean(out.pa_per_person);
    return out;
}

CameraEvalResult camera_metrics(const std::vector<Camera>& pred, const std::vector<Camera>& gt,
                                double tau_deg, double tau_frac) {
    if (pred.size() != gt.size()) throw CountMismatch("camera_metrics: camera counts differ");
    const size_t n = pred.size();
    if (n < 2) throw CountMismatch("camera_metrics: need at least 2 cameras");

    std::vector<Vec3> pc(n), gc(n);
    for (size_t i = 0; i < n; ++i) {
        pc[i] = pred[i].center();
        gc[i] = gt[i].center();
    }
    double diameter = 0.0;
    for (size_t a = 0; a < n; ++a)
        for (size_t b = a + 1; b < n; ++b) diameter = std::max(diameter, (gc[a] - gc[b]).norm());
    if (diameter <= 0.0) throw DegenerateScene("camera_metrics: GT scene diameter is zero");

    CameraEvalResult out;

    for (size_t i = 0; i < n; ++i) out.te += (pc[i] - gc[i]).norm();
    out.te /= static_cast<double>(n);

    Sim3 align = best_sim3_or_fallback(pc, gc);
    double ste_fit = 0.0;
    for (size_t i = 0; i < n; ++i) ste_fit += (align.apply(pc[i]) - gc[i]).norm();
    ste_fit /= static_cast<double>(n);
    bool use_fit = ste_fit <= out.te;
    if (!use_fit) align = Sim3::identity();
    out.s_te = std::min(ste_fit, out.te);

    // AE after closed-form global rotation alignment
    Mat3 acc = Mat3::Zero();
    for (size_t i = 0; i < n; ++i) acc += gt[i].rotation() * pred[i].rotation().transpose();
    Eigen::JacobiSVD<Mat3> svd(acc, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vec3 d = Vec3::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) d(2) = -1;
    Mat3 r_align = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
    for (size_t i = 0; i < n; ++i)
        out.ae += rotation_geodesic_deg(r_align * pred[i].rotation(), gt[i].rotation());
    out.ae /= static_cast<double>(n);

    // RRA over view pairs
    size_t pairs = 0, rra_hits = 0;
    for (size_t a = 0; a < n; ++a) {
        for (size_t b = a + 1; b < n; ++b) {
            Mat3 rel_p = pred[a].rotation().transpose() * pred[b].rotation();
            Mat3 rel_g = gt[a].rotation().transpose() * gt[b].rotation();
            if (rotation_geodesic_deg(rel_p, rel_g) < tau_deg) ++rra_hits;
            ++pairs;
        }
    }
    out.rra = static_cast<double>(rra_hits) / static_cast<double>(pairs);

    double thresh = tau_frac * diameter;
    size_t cca_hits = 0, s_cca_hits = 0;
    for (size_t i = 0; i < n; ++i) {
        if ((pc[i] - gc[i]).norm() < thresh) ++cca_hits;
        if ((align.apply(pc[i]) - gc[i]).norm() < thresh) ++s_cca_hits;
    }
    out.cca = static_cast<double>(cca_hits) / static_cast<double>(n);
    out.s_cca = static_cast<double>(s_cca_hits) / static_cast<double>(n);
    return out;
}

PairwisePoseResult pairwise_pose_metrics(const std::vector<RelativePose>& pred,
                                         const std::vector<RelativePose>& gt) {
    if (pred.size() != gt.size() || pred.empty())
        throw CountMismatch("pairwise_pose_metrics: pose counts differ or empty");
    const size_t n = pred.size();
    std::vector<double> rot_err(n), trans_err(n);
    for (size_t i = 0; i < n; ++i) {
        rot_err[i] = rotation_geodesic_deg(pred[i].rotation, gt[i].rotation);
        double gn = gt[i].translation.norm();
        if (gn < 1e-12) throw ZeroBaseline("pairwise_pose_metrics: GT translation is zero");
        double pn = pred[i].translation.norm();
        if (pn < 1e-12) {
            trans_err[i] = 180.0;  // undefined direction counts as a miss
        } else {
            double c = std::clamp(pred[i].translation.dot(gt[i].translation) / (pn * gn), -1.0, 1.0);
            trans_err[i] = std::acos(c) * 180.0 / M_PI;
        }
    }
    PairwisePoseResult out;
    size_t rra = 0, rta = 0;
    for (size_t i = 0; i < n; ++i) {
        if (rot_err[i] < 15.0) ++rra;
        if (trans_err[i] < 15.0) ++rta;
    }
    out.rra15 = static_cast<double>(rra) / static_cast<double>(n);
    out.rta15 = static_cast<double>(rta) / static_cast<double>(n);
    double acc = 0.0;
    for (int t = 1; t <= 30; ++t) {
        size_t hits = 0;
        for (size_t i = 0; i < n; ++i)
            if (std::max(rot_err[i], trans_err[i]) < static_cast<double>(t)) ++hits;
        acc += static_cast<double>(hits) / static_cast<double>(n);
    }
    out.maa30 = acc / 30.0;
    return out;
}

DepthEvalResult depth_metrics(const DepthGrid& pred, const DepthGrid& gt, const MaskGrid& valid,
                              bool median_align) {
    if (!gt.same_shape(pred.width, pred.height) || !valid.same_shape(pred.width, pred.height))
        throw ShapeMismatch("depth_metrics: shapes differ");
    std::vector<double> pv, gv;
    for (size_t i = 0; i < valid.data.size(); ++i) {
        if (!valid.data[i]) continue;
        if (gt.data[i] <= 0) throw Error("depth_metrics: non-positive GT depth in valid mask");
        pv.push_back(pred.data[i]);
        gv.push_back(gt.data[i]);
    }
    if (pv.empty()) throw EmptyValidSet("depth_metrics: empty valid set");

    double scale = 1.0;
    if (median_align) {
        auto median = [](std::vector<double> v) {
            size_t m = v.size() / 2;
            std::nth_element(v.begin(), v.begin() + static_cast<long>(m), v.end());
            return v[m];
        };
        double mp = median(pv);
        if (mp > 1e-12) scale = median(gv) / mp;
    }

    DepthEvalResult out;
    size_t inliers = 0;
    for (size_t i = 0; i < pv.size(); ++i) {
        double p = pv[i] * scale;
        out.rel += std::abs(p - gv[i]) / gv[i];
        if (p > 0 && std::max(p / gv[i], gv[i] / p) < 1.03) ++inliers;
    }
    out.rel /= static_cast<double>(pv.size());
    out.tau = static_cast<double>(inliers) / static_cast<double>(pv.size());
    return out;
}

std::vector<int> match_persons_by_distance(const std::vector<std::vector<Vec3>>& pred,
                                           const std::vector<std::vector<Vec3>>& gt) {
    if (pred.empty() || gt.empty() || pred.size() > gt.size())
        throw PersonCountMismatch("match_persons_by_distance: incompatible counts");
    std::vector<double> cost(pred.size() * gt.size());
    for (size_t p = 0; p < pred.size(); ++p) {
        for (size_t g = 0; g < gt.size(); ++g) {
            size_t joints = std::min(pred[p].size(), gt[g].size());
            double acc = 0.0;
            for (size_t j = 0; j < joints; ++j) acc += (pred[p][j] - gt[g][j]).norm();
            cost[p * gt.size() + g] = acc / static_cast<double>(std::max<size_t>(1, joints));
        }
    }
    return solve_assignment(cost, static_cast<int>(pred.size()), static_cast<int>(gt.size()));
}

}  // namespace hams
