#include "hams/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>

namespace hams {

bool is_rotation(const Mat3& R, double tol) {
    Mat3 err = R.transpose() * R - Mat3::Identity();
    return err.cwiseAbs().maxCoeff() <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

Mat3 rotation_from_axis_angle(const Vec3& w) {
    double theta2 = w.squaredNorm();
    if (theta2 < 1e-24) {
        // second-order expansion keeps the axis-angle <-> matrix round trip
        // exact to 1e-12 near zero
        return Mat3::Identity() + skew(w) + 0.5 * skew(w) * skew(w);
    }
    double theta = std::sqrt(theta2);
    Mat3 K = skew(w / theta);
    return Mat3::Identity() + std::sin(theta) * K + (1.0 - std::cos(theta)) * K * K;
}

Vec3 axis_angle_from_rotation(const Mat3& R) {
    Quat q(R);
    q.normalize();
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    double sin_half = q.vec().norm();
    double cos_half = q.w();
    if (sin_half < 1e-12) return 2.0 * q.vec();  // angle ~ 0
    double angle = 2.0 * std::atan2(sin_half, cos_half);
    return (angle / sin_half) * q.vec();
}

Quat quat_from_rotation(const Mat3& R) {
    Quat q(R);
    q.normalize();
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    return q;
}

Mat3 rotation_from_quat(const Quat& q) { return q.normalized().toRotationMatrix(); }

std::array<Mat3, 3> rotation_jacobian(const Vec3& w) {
    // Gallego & Yezzi closed form, with the small-angle limit dR/dw_i = [e_i]x.
    std::array<Mat3, 3> out;
    double theta2 = w.squaredNorm();
    Mat3 R = rotation_from_axis_angle(w);
    if (theta2 < 1e-16) {
        for (int i = 0; i < 3; ++i) {
            Vec3 e = Vec3::Zero();
            e[i] = 1.0;
            out[i] = skew(e);
        }
        return out;
    }
    Mat3 I = Mat3::Identity();
    for (int i = 0; i < 3; ++i) {
        Vec3 e = Vec3::Zero();
        e[i] = 1.0;
        Vec3 v = w[i] * w + skew(w) * ((I - R) * e);
        out[i] = (skew(v) * R) / theta2;
    }
    return out;
}

double rotation_geodesic_deg(const Mat3& r1, const Mat3& r2) {
    if (!is_rotation(r1) || !is_rotation(r2)) throw NotARotation("input is not in SO(3)");
    double c = ((r1.transpose() * r2).trace() - 1.0) * 0.5;
    c = std::clamp(c, -1.0, 1.0);
    return std::acos(c) * 180.0 / M_PI;
}

Sim3 umeyama_sim3(std::span<const Vec3> src, std::span<const Vec3> dst,
                  std::span<const double> weights, bool allow_scale) {
    const size_t n = src.size();
    if (n != dst.size() || (!weights.empty() && weights.size() != n))
        throw DegenerateConfiguration("umeyama_sim3: list lengths differ");
    if (n < 3) throw DegenerateConfiguration("umeyama_sim3: need at least 3 points");

    double wsum = 0.0;
    Vec3 mu_src = Vec3::Zero(), mu_dst = Vec3::Zero();
    for (size_t i = 0; i < n; ++i) {
        double w = weights.empty() ? 1.0 : weights[i];
        if (w < 0) throw DegenerateConfiguration("umeyama_sim3: negative weight");
        wsum += w;
        mu_src += w * src[i];
        mu_dst += w * dst[i];
    }
    if (wsum <= 0.0) throw DegenerateConfiguration("umeyama_sim3: total weight is zero");
    mu_src /= wsum;
    mu_dst /= wsum;

    Mat3 cov = Mat3::Zero();         // dst-src cross covariance
    Mat3 scatter_src = Mat3::Zero(); // for the collinearity check + variance
    double var_src = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double w = weights.empty() ? 1.0 : weights[i];
        Vec3 ds = src[i] - mu_src;
        Vec3 dd = dst[i] - mu_dst;
        cov += w * dd * ds.transpose();
        scatter_src += w * ds * ds.transpose();
        var_src += w * ds.squaredNorm();
    }
    cov /= wsum;
    var_src /= wsum;

    Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter_src / wsum);
    double e0 = eig.eigenvalues()(2);  // largest
    double e1 = eig.eigenvalues()(1);
    if (e0 <= 1e-18 || e1 <= 1e-12 * e0)
        throw DegenerateConfiguration("umeyama_sim3: collinear or coincident points");

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 U = svd.matrixU();
    Mat3 V = svd.matrixV();
    Vec3 d = Vec3::Ones();
    if (U.determinant() * V.determinant() < 0) d(2) = -1.0;

    Sim3 out;
    out.rotation = U * d.asDiagonal() * V.transpose();
    out.scale = allow_scale ? svd.singularValues().dot(d) / var_src : 1.0;
    if (out.scale <= 0.0) throw DegenerateConfiguration("umeyama_sim3: non-positive scale");
    out.translation = mu_dst - out.scale * (out.rotation * mu_src);
    return out;
}

double estimate_focal(const Pointmap& pm, double cx, double cy) {
    std::vector<Vec2> img, dir;
    img.reserve(pm.points.size());
    for (int y = 0; y < pm.height(); ++y) {
        for (int x = 0; x < pm.width(); ++x) {
            const Vec3& p = pm.at(x, y);
            if (p.z() <= 0.0) continue;
            img.emplace_back(x + 0.5 - cx, y + 0.5 - cy);
            dir.emplace_back(p.x() / p.z(), p.y() / p.z());
        }
    }
    if (img.size() < 100) throw InsufficientData("estimate_focal: fewer than 100 pixels with z > 0");

    // least-squares init, then Weiszfeld reweighting toward the L1 optimum
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < img.size(); ++i) {
        num += img[i].dot(dir[i]);
        den += dir[i].squaredNorm();
    }
    if (den <= 0.0) throw InsufficientData("estimate_focal: degenerate directions");
    double f = num / den;
    for (int it = 0; it < 20; ++it) {
        num = den = 0.0;
        for (size_t i = 0; i < img.size(); ++i) {
            double r = (img[i] - f * dir[i]).norm();
            double w = 1.0 / std::max(r, 1e-9);
            num += w * img[i].dot(dir[i]);
            den += w * dir[i].squaredNorm();
        }
        double f_new = num / den;
        if (std::abs(f_new - f) < 1e-12 * std::max(1.0, std::abs(f))) {
            f = f_new;
            break;
        }
        f = f_new;
    }
    if (!(f > 0.0)) throw InsufficientData("estimate_focal: non-positive focal");
    return f;
}

DepthGrid pointmap_to_depth(const Pointmap& pm) {
    DepthGrid depth(pm.width(), pm.height());
    for (size_t i = 0; i < pm.points.data.size(); ++i) depth.data[i] = pm.points.data[i].z();
    return depth;
}

}  // namespace hams
