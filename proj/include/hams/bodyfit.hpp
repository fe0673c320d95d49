#pragma once

#include <memory>

#include "hams/geometry.hpp"

namespace hams {

inline constexpr int kBodyJoints = 16;
inline constexpr int kBodyShapes = 4;

enum BodyJoint {
    kPelvis = 0,
    kSpine,
    kChest,
    kHead,
    kLHip,
    kLKnee,
    kLAnkle,
    kRHip,
    kRKnee,
    kRAnkle,
    kLShoulder,
    kLElbow,
    kLWrist,
    kRShoulder,
    kRElbow,
    kRWrist,
};

// Procedural parametric body: capsule limbs + ellipsoid torso/head,
// ~400 vertices, 16 joints, 4 shape blendshapes. Built deterministically
// in-repo; no external assets.
struct BodyTemplate {
    std::vector<Vec3> vertices;                 // canonical rest pose
    std::vector<std::array<int, 3>> triangles;
    std::array<int, kBodyJoints> parent;        // parent[0] == -1
    // sparse skinning weights, <= 4 entries per vertex, rows sum to 1
    std::vector<std::vector<std::pair<int, double>>> skinning;
    // sparse joint regressor, rows sum to 1
    std::array<std::vector<std::pair<int, double>>, kBodyJoints> regressor;
    // per-vertex displacement fields: height, girth, limb length, torso ratio
    std::array<std::vector<Vec3>, kBodyShapes> blendshapes;
    Vec3 bbox_min = Vec3::Zero();
    Vec3 bbox_max = Vec3::Zero();
    // per-joint axis-angle component limit used when sampling/validating poses
    std::array<double, kBodyJoints> joint_limit;

    size_t vertex_count() const { return vertices.size(); }

    std::vector<Vec3> shaped_vertices(const Eigen::Vector4d& shape) const;
    std::array<Vec3, kBodyJoints> regress_joints(const std::vector<Vec3>& verts) const;

    // canonical position <-> normalized [0,1]^3 coordinate (DensePose value)
    Vec3 normalize_coord(const Vec3& canonical) const;
    Vec3 denormalize_coord(const Vec3& c01) const;
};

// Shared default template (immutable after construction).
const BodyTemplate& default_body_template();
BodyTemplate build_default_template();

struct BodyParams {
    Eigen::Vector4d shape = Eigen::Vector4d::Zero();
    std::array<Vec3, kBodyJoints> pose;  // per-joint axis-angle
    Sim3 root;                           // rigid + uniform scale

    BodyParams() { pose.fill(Vec3::Zero()); }  // Eigen does not zero-init

    void validate() const;  // |beta| <= 5, per-joint angle <= pi
};

struct SkinnedBody {
    std::vector<Vec3> vertices;
    std::array<Vec3, kBodyJoints> joints;
};

// Linear blend skinning: root ∘ LBS(pose, canonical + blendshapes).
SkinnedBody skin_body(const BodyTemplate& tmpl, const BodyParams& params);
std::array<Vec3, kBodyJoints> joints_from_params(const BodyTemplate& tmpl, const BodyParams& params);

// Maps normalized canonical coordinates to nearest template vertices (exact
// nearest neighbour, spatial-grid accelerated, lower index wins ties).
std::vector<int> correspondences_from_densepose(std::span<const Vec3> coords01,
                                                const BodyTemplate& tmpl);

struct FitPoint {
    Vec3 position = Vec3::Zero();
    Vec3 canonical01 = Vec3::Zero();  // DensePose value in [0,1]^3
    double confidence = 1.0;
};

struct FitOptions {
    double lambda_theta = 1e-3;
    double lambda_beta = 1e-2;
    double huber_delta = 0.05;  // meters
    int max_iterations = 60;
    double tolerance = 1e-10;
};

struct FitReport {
    BodyParams params;
    std::vector<double> objective_trace;  // non-increasing across accepted steps
    int inlier_count = 0;
    double rmse = 0.0;  // point-to-assigned-vertex RMSE
};

// Two-stage fit: closed-form root Sim3 from correspondences, then damped
// Gauss-Newton over (root, pose, shape) with analytic Jacobians and a Huber
// kernel. Throws TooFewPoints (< 30) and DegenerateCorrespondences (< 4
// distinct vertices hit).
FitReport fit_body(std::span<const FitPoint> points, const BodyTemplate& tmpl,
                   const FitOptions& opts = {});

// Brute-force per-vertex LBS used as the test oracle for skin_body; kept in
// the library so callers can cross-check custom templates.
std::vector<Vec3> lbs_reference(const BodyTemplate& tmpl, const BodyParams& params);

}  // namespace hams
