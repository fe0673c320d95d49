#include "hams/bodyfit.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace hams {

namespace {

// ---------------------------------------------------------------------------
// procedural template construction

struct MeshBuilder {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Vec3> radial;   // per-vertex offset from the part axis
    std::vector<int> part_of;   // part id per vertex
    std::array<std::vector<int>, kBodyJoints> joint_rings;

    int add_vertex(const Vec3& p, const Vec3& rad, int part) {
        vertices.push_back(p);
        radial.push_back(rad);
        part_of.push_back(part);
        return static_cast<int>(vertices.size()) - 1;
    }
};

void axis_basis(const Vec3& axis, Vec3& u, Vec3& v) {
    Vec3 ref = std::abs(axis.y()) < 0.9 ? Vec3(0, 1, 0) : Vec3(1, 0, 0);
    u = axis.cross(ref).normalized();
    v = axis.cross(u).normalized();
}

// Capsule-ish tube from a to b with per-ring radii and an elliptical cross
// section (squash < 1 flattens the v direction). The asymmetry keeps twist
// about the bone axis observable from vertex positions, which the fitter
// relies on. Returns the ring vertex lists so joint rings can be registered.
std::vector<std::vector<int>> add_tube(MeshBuilder& mb, const Vec3& a, const Vec3& b,
                                       const std::vector<double>& ring_ts,
                                       const std::vector<double>& ring_radii, int nseg, int part,
                                       double squash = 0.75) {
    Vec3 axis = (b - a).normalized();
    Vec3 u, v;
    axis_basis(axis, u, v);
    const int nring = static_cast<int>(ring_ts.size());

    std::vector<std::vector<int>> rings(nring);
    for (int r = 0; r < nring; ++r) {
        Vec3 c = a + ring_ts[r] * (b - a);
        for (int s = 0; s < nseg; ++s) {
            double ang = 2.0 * M_PI * s / nseg;
            Vec3 rad = ring_radii[r] * (std::cos(ang) * u + squash * std::sin(ang) * v);
            rings[r].push_back(mb.add_vertex(c + rad, rad, part));
        }
    }
    int apex_a = mb.add_vertex(a - ring_radii.front() * axis, Vec3::Zero(), part);
    int apex_b = mb.add_vertex(b + ring_radii.back() * axis, Vec3::Zero(), part);

    for (int s = 0; s < nseg; ++s) {
        int sn = (s + 1) % nseg;
        mb.triangles.push_back({apex_a, rings[0][sn], rings[0][s]});
        mb.triangles.push_back({apex_b, rings[nring - 1][s], rings[nring - 1][sn]});
        for (int r = 0; r + 1 < nring; ++r) {
            mb.triangles.push_back({rings[r][s], rings[r][sn], rings[r + 1][s]});
            mb.triangles.push_back({rings[r][sn], rings[r + 1][sn], rings[r + 1][s]});
        }
    }
    return rings;
}

double ramp(double x) { return std::clamp(x, 0.0, 1.0); }

struct LimbSpec {
    int joint_a, joint_b;  // proximal (driving) and distal joints
    int blend_root;        // joint blended toward at the proximal end
    std::vector<double> radii;
};

}  // namespace

BodyTemplate build_default_template() {
    BodyTemplate t;
    const std::array<Vec3, kBodyJoints> J = {
        Vec3(0.00, 0.95, 0), Vec3(0.00, 1.12, 0), Vec3(0.00, 1.32, 0), Vec3(0.00, 1.56, 0),
        Vec3(0.09, 0.90, 0), Vec3(0.10, 0.50, 0), Vec3(0.11, 0.09, 0),
        Vec3(-0.09, 0.90, 0), Vec3(-0.10, 0.50, 0), Vec3(-0.11, 0.09, 0),
        Vec3(0.17, 1.40, 0), Vec3(0.43, 1.40, 0), Vec3(0.67, 1.40, 0),
        Vec3(-0.17, 1.40, 0), Vec3(-0.43, 1.40, 0), Vec3(-0.67, 1.40, 0)};
    t.parent = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 2, 10, 11, 2, 13, 14};
    t.joint_limit = {0.3, 0.3, 0.3, 0.5, 0.8, 1.2, 0.5, 0.8, 1.2, 0.5, 0.9, 1.2, 0.5, 0.9, 1.2, 0.5};

    MeshBuilder mb;

    // torso: rings land exactly on pelvis/spine/chest for the joint regressor
    {
        Vec3 bot(0, 0.86, 0), top(0, 1.42, 0);
        std::vector<double> ys = {0.86, 0.95, 1.04, 1.12, 1.22, 1.32, 1.42};
        std::vector<double> ts, radii = {0.135, 0.150, 0.145, 0.140, 0.145, 0.150, 0.125};
        for (double y : ys) ts.push_back((y - 0.86) / (1.42 - 0.86));
        auto rings = add_tube(mb, bot, top, ts, radii, 10, 0);
        mb.joint_rings[kPelvis] = rings[1];
        mb.joint_rings[kSpine] = rings[3];
        mb.joint_rings[kChest] = rings[5];
    }
    // neck: chest top to head joint
    {
        auto rings = add_tube(mb, Vec3(0, 1.44, 0), J[kHead], {0.0, 1.0}, {0.055, 0.05}, 8, 1);
        mb.joint_rings[kHead] = rings[1];
    }
    // head ellipsoid (a short fat tube reads fine at desk resolution)
    add_tube(mb, Vec3(0, 1.58, 0), Vec3(0, 1.70, 0), {0.0, 0.4, 0.8, 1.0},
             {0.070, 0.085, 0.080, 0.055}, 8, 2);

    const std::vector<LimbSpec> limbs = {
        {kLHip, kLKnee, kPelvis, {0.072, 0.066, 0.060, 0.055}},
        {kLKnee, kLAnkle, kLHip, {0.052, 0.047, 0.043, 0.040}},
        {kRHip, kRKnee, kPelvis, {0.072, 0.066, 0.060, 0.055}},
        {kRKnee, kRAnkle, kRHip, {0.052, 0.047, 0.043, 0.040}},
        {kLShoulder, kLElbow, kChest, {0.048, 0.044, 0.040, 0.038}},
        {kLElbow, kLWrist, kLShoulder, {0.036, 0.033, 0.031, 0.029}},
        {kRShoulder, kRElbow, kChest, {0.048, 0.044, 0.040, 0.038}},
        {kRElbow, kRWrist, kRShoulder, {0.036, 0.033, 0.031, 0.029}},
    };
    int part = 3;
    for (const auto& limb : limbs) {
        auto rings = add_tube(mb, J[limb.joint_a], J[limb.joint_b], {0.0, 0.33, 0.66, 1.0},
                              limb.radii, 8, part++);
        if (mb.joint_rings[limb.joint_a].empty()) mb.joint_rings[limb.joint_a] = rings.front();
        if (mb.joint_rings[limb.joint_b].empty()) mb.joint_rings[limb.joint_b] = rings.back();
    }

    t.vertices = mb.vertices;
    t.triangles = mb.triangles;

    // --- skinning weights ---
    t.skinning.assign(t.vertices.size(), {});
    auto set_weights = [&](int vi, std::vector<std::pair<int, double>> w) {
        double sum = 0.0;
        for (auto& [j, x] : w) sum += x;
        for (auto& [j, x] : w) x /= sum;
        w.erase(std::remove_if(w.begin(), w.end(), [](auto& p) { return p.second < 1e-9; }),
                w.end());
        t.skinning[vi] = std::move(w);
    };
    for (size_t vi = 0; vi < t.vertices.size(); ++vi) {
        const Vec3& p = t.vertices[vi];
        int pt = mb.part_of[vi];
        if (pt == 0) {  // torso: blend pelvis/spine/chest by height
            double y = p.y();
            if (y <= J[kPelvis].y()) {
                set_weights(vi, {{kPelvis, 1.0}});
            } else if (y <= J[kSpine].y()) {
                double a = (y - J[kPelvis].y()) / (J[kSpine].y() - J[kPelvis].y());
                set_weights(vi, {{kPelvis, 1.0 - a}, {kSpine, a}});
            } else if (y <= J[kChest].y()) {
                double a = (y - J[kSpine].y()) / (J[kChest].y() - J[kSpine].y());
                set_weights(vi, {{kSpine, 1.0 - a}, {kChest, a}});
            } else {
                set_weights(vi, {{kChest, 1.0}});
            }
        } else if (pt == 1) {  // neck
            double a = ramp((p.y() - 1.44) / (J[kHead].y() - 1.44));
            set_weights(vi, {{kChest, 1.0 - a}, {kHead, a}});
        } else if (pt == 2) {  // head
            set_weights(vi, {{kHead, 1.0}});
        } else {
            const LimbSpec& limb = limbs[pt - 3];
            const Vec3 a = J[limb.joint_a], b = J[limb.joint_b];
            double tt = ramp((p - a).dot(b - a) / (b - a).squaredNorm());
            // proximal joint drives the segment; blend toward the parent bone
            // at the top and the distal joint near the far end
            double w_root = 0.5 * ramp((0.18 - tt) / 0.18);
            double w_distal = 0.5 * ramp((tt - 0.75) / 0.25);
            set_weights(vi, {{limb.joint_a, 1.0 - w_root - w_distal},
                             {limb.blend_root, w_root},
                             {limb.joint_b, w_distal}});
        }
    }

    // --- joint regressor: uniform over the ring centred on each joint ---
    for (int k = 0; k < kBodyJoints; ++k) {
        const auto& ring = mb.joint_rings[k];
        double w = 1.0 / static_cast<double>(ring.size());
        for (int vi : ring) t.regressor[k].emplace_back(vi, w);
    }

    // --- blendshapes ---
    const double y_pelvis = J[kPelvis].y(), y_chest = J[kChest].y();
    const double x_shoulder = J[kLShoulder].x(), y_hip = J[kLHip].y();
    for (int b = 0; b < kBodyShapes; ++b) t.blendshapes[b].assign(t.vertices.size(), Vec3::Zero());
    for (size_t vi = 0; vi < t.vertices.size(); ++vi) {
        const Vec3& p = t.vertices[vi];
        int pt = mb.part_of[vi];
        t.blendshapes[0][vi] = Vec3(0, 0.06 * (p.y() - y_pelvis), 0);  // height
        t.blendshapes[1][vi] = 0.30 * mb.radial[vi];                   // girth
        bool leg = pt >= 3 && pt <= 6;
        bool arm = pt >= 7;
        if (leg)
            t.blendshapes[2][vi] = Vec3(0, -0.12 * std::max(0.0, y_hip - p.y()), 0);
        else if (arm)
            t.blendshapes[2][vi] =
                Vec3((p.x() > 0 ? 1.0 : -1.0) * 0.12 * std::max(0.0, std::abs(p.x()) - x_shoulder),
                     0, 0);
        t.blendshapes[3][vi] = Vec3(0, 0.10 * ramp((p.y() - y_pelvis) / (y_chest - y_pelvis)), 0);
    }

    t.bbox_min = Vec3(1e9, 1e9, 1e9);
    t.bbox_max = -t.bbox_min;
    for (const Vec3& p : t.vertices) {
        t.bbox_min = t.bbox_min.cwiseMin(p);
        t.bbox_max = t.bbox_max.cwiseMax(p);
    }
    return t;
}

const BodyTemplate& default_body_template() {
    static const BodyTemplate tmpl = build_default_template();
    return tmpl;
}

std::vector<Vec3> BodyTemplate::shaped_vertices(const Eigen::Vector4d& shape) const {
    std::vector<Vec3> out = vertices;
    for (int b = 0; b < kBodyShapes; ++b) {
        if (shape[b] == 0.0) continue;
        for (size_t i = 0; i < out.size(); ++i) out[i] += shape[b] * blendshapes[b][i];
    }
    return out;
}

std::array<Vec3, kBodyJoints> BodyTemplate::regress_joints(const std::vector<Vec3>& verts) const {
    std::array<Vec3, kBodyJoints> joints;
    for (int k = 0; k < kBodyJoints; ++k) {
        Vec3 acc = Vec3::Zero();
        for (const auto& [vi, w] : regressor[k]) acc += w * verts[vi];
        joints[k] = acc;
    }
    return joints;
}

Vec3 BodyTemplate::normalize_coord(const Vec3& canonical) const {
    Vec3 ext = bbox_max - bbox_min;
    return Vec3((canonical.x() - bbox_min.x()) / ext.x(), (canonical.y() - bbox_min.y()) / ext.y(),
                (canonical.z() - bbox_min.z()) / ext.z());
}

Vec3 BodyTemplate::denormalize_coord(const Vec3& c) const {
    Vec3 ext = bbox_max - bbox_min;
    return bbox_min + Vec3(c.x() * ext.x(), c.y() * ext.y(), c.z() * ext.z());
}

void BodyParams::validate() const {
    for (int b = 0; b < kBodyShapes; ++b)
        if (std::abs(shape[b]) > 5.0) throw Error("BodyParams: |shape| exceeds 5");
    for (const Vec3& aa : pose)
        if (aa.norm() > M_PI + 1e-9) throw Error("BodyParams: joint rotation exceeds pi");
    if (root.scale <= 0.0) throw Error("BodyParams: non-positive root scale");
}

// ---------------------------------------------------------------------------
// skinning

namespace {

struct Affine {
    Mat3 m = Mat3::Identity();
    Vec3 t = Vec3::Zero();
    Vec3 apply(const Vec3& p) const { return m * p + t; }
    Affine operator*(const Affine& o) const { return {m * o.m, m * o.t + t}; }
};

std::array<Affine, kBodyJoints> chain_transforms(const BodyTemplate& tmpl,
                                                 const BodyParams& params,
                                                 const std::array<Vec3, kBodyJoints>& j_rest) {
    std::array<Affine, kBodyJoints> world;
    for (int k = 0; k < kBodyJoints; ++k) {
        Mat3 R = rotation_from_axis_angle(params.pose[k]);
        Vec3 offset = tmpl.parent[k] < 0 ? j_rest[k] : j_rest[k] - j_rest[tmpl.parent[k]];
        Affine local{R, offset};
        world[k] = tmpl.parent[k] < 0 ? local : world[tmpl.parent[k]] * local;
    }
    return world;
}

}  // namespace

SkinnedBody skin_body(const BodyTemplate& tmpl, const BodyParams& params) {
    std::vector<Vec3> shaped = tmpl.shaped_vertices(params.shape);
    std::array<Vec3, kBodyJoints> j_rest = tmpl.regress_joints(shaped);
    std::array<Affine, kBodyJoints> world = chain_transforms(tmpl, params, j_rest);

    std::array<Affine, kBodyJoints> rel;  // maps rest positions to posed
    for (int k = 0; k < kBodyJoints; ++k)
        rel[k] = {world[k].m, world[k].t - world[k].m * j_rest[k]};

    SkinnedBody out;
    out.vertices.resize(shaped.size());
    for (size_t i = 0; i < shaped.size(); ++i) {
        Vec3 acc = Vec3::Zero();
        for (const auto& [k, w] : tmpl.skinning[i]) acc += w * rel[k].apply(shaped[i]);
        out.vertices[i] = params.root.apply(acc);
    }
    for (int k = 0; k < kBodyJoints; ++k) out.joints[k] = params.root.apply(world[k].t);
    return out;
}

std::array<Vec3, kBodyJoints> joints_from_params(const BodyTemplate& tmpl,
                                                 const BodyParams& params) {
    std::vector<Vec3> shaped = tmpl.shaped_vertices(params.shape);
    std::array<Vec3, kBodyJoints> j_rest = tmpl.regress_joints(shaped);
    std::array<Affine, kBodyJoints> world = chain_transforms(tmpl, params, j_rest);
    std::array<Vec3, kBodyJoints> out;
    for (int k = 0; k < kBodyJoints; ++k) out[k] = params.root.apply(world[k].t);
    return out;
}

std::vector<Vec3> lbs_reference(const BodyTemplate& tmpl, const BodyParams& params) {
    // independent route: explicit 4x4 products per vertex, recomputed from the
    // kinematic tree every time
    std::vector<Vec3> shaped = tmpl.shaped_vertices(params.shape);
    std::array<Vec3, kBodyJoints> j_rest = tmpl.regress_joints(shaped);

    auto world_of = [&](int joint) {
        std::vector<int> chain;
        for (int k = joint; k >= 0; k = tmpl.parent[k]) chain.push_back(k);
        std::reverse(chain.begin(), chain.end());
        Eigen::Matrix4d acc = Eigen::Matrix4d::Identity();
        for (int k : chain) {
            Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
            local.topLeftCorner<3, 3>() = rotation_from_axis_angle(params.pose[k]);
            local.topRightCorner<3, 1>() =
                tmpl.parent[k] < 0 ? j_rest[k] : j_rest[k] - j_rest[tmpl.parent[k]];
            acc = acc * local;
        }
        Eigen::Matrix4d unpose = Eigen::Matrix4d::Identity();
        unpose.topRightCorner<3, 1>() = -j_rest[joint];
        return (acc * unpose).eval();
    };

    std::vector<Vec3> out(shaped.size());
    for (size_t i = 0; i < shaped.size(); ++i) {
        Eigen::Vector4d h(shaped[i].x(), shaped[i].y(), shaped[i].z(), 1.0);
        Eigen::Vector4d acc = Eigen::Vector4d::Zero();
        for (const auto& [k, w] : tmpl.skinning[i]) acc += w * (world_of(k) * h);
        out[i] = params.root.apply(acc.head<3>());
    }
    return out;
}

// ---------------------------------------------------------------------------
// correspondences

std::vector<int> correspondences_from_densepose(std::span<const Vec3> coords01,
                                                const BodyTemplate& tmpl) {
    const Vec3 ext = tmpl.bbox_max - tmpl.bbox_min;
    const double cell = ext.maxCoeff() / 12.0;
    const int nx = std::max(1, static_cast<int>(std::ceil(ext.x() / cell)));
    const int ny = std::max(1, static_cast<int>(std::ceil(ext.y() / cell)));
    const int nz = std::max(1, static_cast<int>(std::ceil(ext.z() / cell)));

    auto cell_of = [&](const Vec3& p, int& ix, int& iy, int& iz) {
        ix = std::clamp(static_cast<int>((p.x() - tmpl.bbox_min.x()) / cell), 0, nx - 1);
        iy = std::clamp(static_cast<int>((p.y() - tmpl.bbox_min.y()) / cell), 0, ny - 1);
        iz = std::clamp(static_cast<int>((p.z() - tmpl.bbox_min.z()) / cell), 0, nz - 1);
    };

    std::vector<std::vector<int>> buckets(static_cast<size_t>(nx) * ny * nz);
    for (size_t vi = 0; vi < tmpl.vertices.size(); ++vi) {
        int ix, iy, iz;
        cell_of(tmpl.vertices[vi], ix, iy, iz);
        buckets[(static_cast<size_t>(iz) * ny + iy) * nx + ix].push_back(static_cast<int>(vi));
    }

    std::vector<int> out(coords01.size());
    for (size_t q = 0; q < coords01.size(); ++q) {
        Vec3 p = tmpl.denormalize_coord(coords01[q]);
        int cx, cy, cz;
        cell_of(p, cx, cy, cz);
        double best_d2 = std::numeric_limits<double>::infinity();
        int best = 0;
        int max_shell = std::max({nx, ny, nz});
        for (int shell = 0; shell <= max_shell; ++shell) {
            // scan all cells at Chebyshev distance == shell
            for (int iz = cz - shell; iz <= cz + shell; ++iz) {
                if (iz < 0 || iz >= nz) continue;
                for (int iy = cy - shell; iy <= cy + shell; ++iy) {
                    if (iy < 0 || iy >= ny) continue;
                    for (int ix = cx - shell; ix <= cx + shell; ++ix) {
                        if (ix < 0 || ix >= nx) continue;
                        if (std::max({std::abs(ix - cx), std::abs(iy - cy), std::abs(iz - cz)}) !=
                            shell)
                            continue;
                        for (int vi : buckets[(static_cast<size_t>(iz) * ny + iy) * nx + ix]) {
                            double d2 = (tmpl.vertices[vi] - p).squaredNorm();
                            if (d2 < best_d2 || (d2 == best_d2 && vi < best)) {
                                best_d2 = d2;
                                best = vi;
                            }
                        }
                    }
                }
            }
            // cells in shell s+1 are at least s*cell away from p's cell
            if (std::isfinite(best_d2) && std::sqrt(best_d2) <= shell * cell) break;
        }
        out[q] = best;
    }
    return out;
}

// ---------------------------------------------------------------------------
// fitting

namespace {

constexpr int kRootDof = 7;  // axis-angle + translation + log scale
constexpr int kPoseDof = 3 * kBodyJoints;
constexpr int kParamDof = kRootDof + kPoseDof + kBodyShapes;

struct ParamVec {
    Eigen::Matrix<double, kParamDof, 1> x = Eigen::Matrix<double, kParamDof, 1>::Zero();

    BodyParams to_params() const {
        BodyParams p;
        p.root.rotation = rotation_from_axis_angle(x.segment<3>(0));
        p.root.translation = x.segment<3>(3);
        p.root.scale = std::exp(x(6));
        for (int k = 0; k < kBodyJoints; ++k) p.pose[k] = x.segment<3>(kRootDof + 3 * k);
        p.shape = x.segment<kBodyShapes>(kRootDof + kPoseDof);
        return p;
    }

    static ParamVec from_params(const BodyParams& p) {
        ParamVec v;
        v.x.segment<3>(0) = axis_angle_from_rotation(p.root.rotation);
        v.x.segment<3>(3) = p.root.translation;
        v.x(6) = std::log(p.root.scale);
        for (int k = 0; k < kBodyJoints; ++k) v.x.segment<3>(kRootDof + 3 * k) = p.pose[k];
        v.x.segment<kBodyShapes>(kRootDof + kPoseDof) = p.shape;
        return v;
    }
};

double huber(double r, double delta) {
    return r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta);
}

// Posed vertices and their Jacobians w.r.t. (pose, shape) for the vertices in
// `used`, plus the pre-root posed position needed for root derivatives.
struct PosedJacobians {
    std::vector<Vec3> posed;                                   // pre-root
    std::vector<Eigen::Matrix<double, 3, kPoseDof + kBodyShapes>> jac;
};

struct AffinePair {
    Mat3 m = Mat3::Zero();
    Vec3 t = Vec3::Zero();
};

PosedJacobians pose_with_jacobians(const BodyTemplate& tmpl, const BodyParams& params,
                                   const std::vector<int>& used,
                                   const std::array<std::array<Vec3, kBodyJoints>, kBodyShapes>&
                                       djrest_dshape) {
    std::vector<Vec3> shaped = tmpl.shaped_vertices(params.shape);
    std::array<Vec3, kBodyJoints> j_rest = tmpl.regress_joints(shaped);

    // world chain + derivatives, propagated parent -> child
    std::array<Affine, kBodyJoints> world;
    // dA[k][p]: derivative of world[k] w.r.t. param p (pose params then shape)
    std::array<std::map<int, AffinePair>, kBodyJoints> dworld;

    for (int k = 0; k < kBodyJoints; ++k) {
        Vec3 aa = params.pose[k];
        Mat3 R = rotation_from_axis_angle(aa);
        std::array<Mat3, 3> dR = rotation_jacobian(aa);
        int par = tmpl.parent[k];
        Vec3 offset = par < 0 ? j_rest[k] : j_rest[k] - j_rest[par];
        Affine local{R, offset};
        world[k] = par < 0 ? local : world[par] * local;

        auto& dk = dworld[k];
        if (par >= 0) {
            for (const auto& [p, dpar] : dworld[par])
                dk[p] = {dpar.m * local.m, dpar.m * local.t + dpar.t};
        }
        const Affine base = par < 0 ? Affine{} : world[par];
        for (int c = 0; c < 3; ++c) {
            auto& slot = dk[3 * k + c];
            slot.m += base.m * dR[c];
            // local translation does not depend on pose
        }
        for (int b = 0; b < kBodyShapes; ++b) {
            Vec3 doffset = par < 0 ? djrest_dshape[b][k]
                                   : Vec3(djrest_dshape[b][k] - djrest_dshape[b][par]);
            auto& slot = dk[kPoseDof + b];
            slot.t += base.m * doffset;
        }
    }

    // rel[k] = world[k] * translate(-j_rest[k])
    std::array<Affine, kBodyJoints> rel;
    std::array<std::map<int, AffinePair>, kBodyJoints> drel;
    for (int k = 0; k < kBodyJoints; ++k) {
        rel[k] = {world[k].m, world[k].t - world[k].m * j_rest[k]};
        for (const auto& [p, d] : dworld[k]) {
            AffinePair dr{d.m, d.t - d.m * j_rest[k]};
            if (p >= kPoseDof) dr.t -= world[k].m * djrest_dshape[p - kPoseDof][k];
            drel[k][p] = dr;
        }
        for (int b = 0; b < kBodyShapes; ++b) {
            auto it = drel[k].find(kPoseDof + b);
            if (it == drel[k].end())
                drel[k][kPoseDof + b] = {Mat3::Zero(),
                                         Vec3(-world[k].m * djrest_dshape[b][k])};
        }
    }

    PosedJacobians out;
    out.posed.resize(used.size());
    out.jac.resize(used.size());
    for (size_t u = 0; u < used.size(); ++u) {
        int vi = used[u];
        Vec3 acc = Vec3::Zero();
        auto& J = out.jac[u];
        J.setZero();
        for (const auto& [k, w] : tmpl.skinning[vi]) {
            acc += w * rel[k].apply(shaped[vi]);
            for (const auto& [p, d] : drel[k]) {
                J.col(p) += w * (d.m * shaped[vi] + d.t);
            }
            // vertex position itself depends on shape
            for (int b = 0; b < kBodyShapes; ++b)
                J.col(kPoseDof + b) += w * (rel[k].m * tmpl.blendshapes[b][vi]);
        }
        out.posed[u] = acc;
    }
    return out;
}

// full init dependent on shape: d(j_rest)/d(beta_b) = regressor * blendshape_b
std::array<std::array<Vec3, kBodyJoints>, kBodyShapes> joint_shape_derivs(
    const BodyTemplate& tmpl) {
    std::array<std::array<Vec3, kBodyJoints>, kBodyShapes> out;
    for (int b = 0; b < kBodyShapes; ++b) {
        for (int k = 0; k < kBodyJoints; ++k) {
            Vec3 acc = Vec3::Zero();
            for (const auto& [vi, w] : tmpl.regressor[k]) acc += w * tmpl.blendshapes[b][vi];
            out[b][k] = acc;
        }
    }
    return out;
}

double fit_objective(std::span<const FitPoint> points, const std::vector<int>& corr,
                     const BodyTemplate& tmpl, const BodyParams& params, const FitOptions& opts) {
    SkinnedBody skinned = skin_body(tmpl, params);
    double total = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
        double r = (points[i].position - skinned.vertices[corr[i]]).norm();
        total += points[i].confidence * huber(r, opts.huber_delta);
    }
    for (const Vec3& aa : params.pose) total += opts.lambda_theta * aa.squaredNorm();
    total += opts.lambda_beta * params.shape.squaredNorm();
    return total;
}

}  // namespace

FitReport fit_body(std::span<const FitPoint> points, const BodyTemplate& tmpl,
                   const FitOptions& opts) {
    if (points.size() < 30) throw TooFewPoints("fit_body: need at least 30 points");
    std::vector<Vec3> coords(points.size());
    std::vector<double> conf(points.size());
    std::vector<Vec3> targets(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        coords[i] = points[i].canonical01;
        conf[i] = points[i].confidence;
        targets[i] = points[i].position;
    }
    std::vector<int> corr = correspondences_from_densepose(coords, tmpl);
    {
        std::vector<int> uniq = corr;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        if (uniq.size() < 4)
            throw DegenerateCorrespondences("fit_body: points map to fewer than 4 vertices");
    }

    // stage 1: closed-form root from rest-pose correspondences
    BodyParams params;
    {
        std::vector<Vec3> src(points.size());
        for (size_t i = 0; i < points.size(); ++i) src[i] = tmpl.vertices[corr[i]];
        try {
            params.root = umeyama_sim3(src, targets, conf, true);
        } catch (const DegenerateConfiguration& e) {
            throw DegenerateCorrespondences(e.what());
        }
    }

    FitReport report;
    report.objective_trace.push_back(fit_objective(points, corr, tmpl, params, opts));

    // stage 2: damped Gauss-Newton over all parameters
    const auto djrest = joint_shape_derivs(tmpl);
    std::vector<int> used = corr;
    std::sort(used.begin(), used.end());
    used.erase(std::unique(used.begin(), used.end()), used.end());
    std::vector<int> vertex_slot(tmpl.vertex_count(), -1);
    for (size_t u = 0; u < used.size(); ++u) vertex_slot[used[u]] = static_cast<int>(u);

    ParamVec pv = ParamVec::from_params(params);
    double mu = 1e-4;
    double fcur = report.objective_trace.back();

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        BodyParams cur = pv.to_params();
        PosedJacobians pj = pose_with_jacobians(tmpl, cur, used, djrest);

        const Mat3 sR = cur.root.scale * cur.root.rotation;
        std::array<Mat3, 3> dRroot = rotation_jacobian(pv.x.segment<3>(0));

        // accumulate per-vertex sums of weights and weighted residuals, then
        // form the normal equations once per used vertex
        std::vector<double> wsum(used.size(), 0.0);
        std::vector<Vec3> esum(used.size(), Vec3::Zero());
        for (size_t i = 0; i < points.size(); ++i) {
            int u = vertex_slot[corr[i]];
            Vec3 v_world = cur.root.apply(pj.posed[u]);
            Vec3 e = targets[i] - v_world;
            double r = e.norm();
            double w = conf[i] * (r <= opts.huber_delta ? 1.0 : opts.huber_delta / r);
            wsum[u] += w;
            esum[u] += w * e;
        }

        Eigen::Matrix<double, kParamDof, kParamDof> H;
        H.setZero();
        Eigen::Matrix<double, kParamDof, 1> g;
        g.setZero();
        Eigen::Matrix<double, 3, kParamDof> J;
        for (size_t u = 0; u < used.size(); ++u) {
            if (wsum[u] == 0.0) continue;
            J.setZero();
            for (int c = 0; c < 3; ++c) J.col(c) = cur.root.scale * (dRroot[c] * pj.posed[u]);
            J.block<3, 3>(0, 3).setIdentity();
            J.col(6) = sR * pj.posed[u];
            J.block<3, kPoseDof + kBodyShapes>(0, kRootDof) = sR * pj.jac[u];
            // residual e = target - v: de/dp = -J
            H.noalias() += wsum[u] * (J.transpose() * J);
            g.noalias() -= J.transpose() * esum[u];
        }
        for (int k = 0; k < kPoseDof; ++k) {
            H(kRootDof + k, kRootDof + k) += 2.0 * opts.lambda_theta;
            g(kRootDof + k) += 2.0 * opts.lambda_theta * pv.x(kRootDof + k);
        }
        for (int b = 0; b < kBodyShapes; ++b) {
            H(kRootDof + kPoseDof + b, kRootDof + kPoseDof + b) += 2.0 * opts.lambda_beta;
            g(kRootDof + kPoseDof + b) += 2.0 * opts.lambda_beta * pv.x(kRootDof + kPoseDof + b);
        }

        bool accepted = false;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Eigen::Matrix<double, kParamDof, kParamDof> Hd = H;
            Hd.diagonal().array() += mu;
            Eigen::Matrix<double, kParamDof, 1> step = Hd.ldlt().solve(-g);
            ParamVec trial = pv;
            trial.x += step;
            double ftrial = fit_objective(points, corr, tmpl, trial.to_params(), opts);
            if (std::isfinite(ftrial) && ftrial <= fcur) {
                bool converged = fcur - ftrial < opts.tolerance * std::max(1.0, fcur);
                pv = trial;
                fcur = ftrial;
                report.objective_trace.push_back(fcur);
                mu = std::max(mu / 3.0, 1e-12);
                accepted = true;
                if (converged) iter = opts.max_iterations;
                break;
            }
            mu *= 4.0;
        }
        if (!accepted) break;
    }

    report.params = pv.to_params();
    // gauge fix: a pelvis rotation is a rigid motion about the root joint, so
    // fold it into the root similarity and keep theta_0 at zero
    {
        Vec3 aa0 = report.params.pose[0];
        if (aa0.norm() > 0.0) {
            std::vector<Vec3> shaped = tmpl.shaped_vertices(report.params.shape);
            Vec3 j0 = tmpl.regress_joints(shaped)[0];
            Sim3 pelvis;
            pelvis.rotation = rotation_from_axis_angle(aa0);
            pelvis.translation = j0 - pelvis.rotation * j0;
            report.params.root = report.params.root * pelvis;
            report.params.pose[0] = Vec3::Zero();
        }
    }
    SkinnedBody final_skin = skin_body(tmpl, report.params);
    double sq = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
        double r = (targets[i] - final_skin.vertices[corr[i]]).norm();
        sq += r * r;
        if (r <= opts.huber_delta) ++report.inlier_count;
    }
    report.rmse = std::sqrt(sq / static_cast<double>(points.size()));
    return report;
}

}  // namespace hams
