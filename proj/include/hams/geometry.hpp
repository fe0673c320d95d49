#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hams/errors.hpp"

namespace hams {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

// ---------------------------------------------------------------------------
// grids

template <class T>
struct Grid {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    T& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    const T& at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }
    bool same_shape(int w, int h) const { return width == w && height == h; }
};

using DepthGrid = Grid<double>;
using MaskGrid = Grid<uint8_t>;
using InstanceGrid = Grid<uint16_t>;
using ConfidenceMap = Grid<double>;  // entries >= 1 by convention; loader enforces

// H x W grid of 3-vectors (pointmaps, DensePose maps).
struct VecGrid {
    int width = 0;
    int height = 0;
    std::vector<Vec3> data;

    VecGrid() = default;
    VecGrid(int w, int h, Vec3 fill = Vec3::Zero())
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    Vec3& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    const Vec3& at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return data.size(); }
    bool same_shape(int w, int h) const { return width == w && height == h; }
};

// Per-pixel 3D coordinates in a stated camera frame.
struct Pointmap {
    VecGrid points;
    std::string frame_tag;

    int width() const { return points.width; }
    int height() const { return points.height; }
    Vec3& at(int x, int y) { return points.at(x, y); }
    const Vec3& at(int x, int y) const { return points.at(x, y); }
};

// H x W x D descriptor grid, row-major, D contiguous per pixel.
struct DescGrid {
    int width = 0;
    int height = 0;
    int dim = 0;
    std::vector<double> data;

    DescGrid() = default;
    DescGrid(int w, int h, int d)
        : width(w), height(h), dim(d), data(static_cast<size_t>(w) * h * d, 0.0) {}

    double* at(int x, int y) { return data.data() + (static_cast<size_t>(y) * width + x) * dim; }
    const double* at(int x, int y) const {
        return data.data() + (static_cast<size_t>(y) * width + x) * dim;
    }
    bool empty() const { return dim == 0 || data.empty(); }
};

// ---------------------------------------------------------------------------
// transforms

bool is_rotation(const Mat3& R, double tol = 1e-6);

// 3D similarity transform x -> scale * R * x + t.
struct Sim3 {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static Sim3 identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }

    Sim3 inverse() const {
        Sim3 inv;
        inv.scale = 1.0 / scale;
        inv.rotation = rotation.transpose();
        inv.translation = -(inv.rotation * translation) / scale;
        return inv;
    }

    // this ∘ other: apply `other` first.
    Sim3 compose(const Sim3& other) const {
        Sim3 out;
        out.scale = scale * other.scale;
        out.rotation = rotation * other.rotation;
        out.translation = scale * (rotation * other.translation) + translation;
        return out;
    }
};

inline Sim3 operator*(const Sim3& a, const Sim3& b) { return a.compose(b); }

// Pinhole camera; pose is camera-to-world with unit scale.
struct Camera {
    Sim3 pose;  // scale expected to be 1
    double focal = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    Vec3 center() const { return pose.translation; }
    const Mat3& rotation() const { return pose.rotation; }
    Vec3 world_to_camera(const Vec3& p) const { return pose.rotation.transpose() * (p - pose.translation); }
    Vec3 camera_to_world(const Vec3& p) const { return pose.rotation * p + pose.translation; }

    // pixel-center ray direction in camera frame, z component = 1
    Vec3 pixel_ray(int u, int v) const {
        return Vec3((u + 0.5 - cx) / focal, (v + 0.5 - cy) / focal, 1.0);
    }
    // projects a camera-frame point to pixel coordinates (pixel-center convention)
    Vec2 project(const Vec3& pc) const {
        return Vec2(focal * pc.x() / pc.z() + cx - 0.5, focal * pc.y() / pc.z() + cy - 0.5);
    }
};

// ---------------------------------------------------------------------------
// rotation helpers

Mat3 rotation_from_axis_angle(const Vec3& axis_angle);
Vec3 axis_angle_from_rotation(const Mat3& R);
Quat quat_from_rotation(const Mat3& R);
Mat3 rotation_from_quat(const Quat& q);

inline Mat3 skew(const Vec3& w) {
    Mat3 m;
    m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return m;
}

// dR/d(axis_angle_i) at the given axis-angle vector, i = 0,1,2.
std::array<Mat3, 3> rotation_jacobian(const Vec3& axis_angle);

// Geodesic distance between two rotations in degrees, clamped to [0, 180].
// Throws NotARotation if either input fails the SO(3) check at 1e-6.
double rotation_geodesic_deg(const Mat3& r1, const Mat3& r2);

// ---------------------------------------------------------------------------
// solvers

// Weighted least-squares similarity (or rigid) transform mapping src onto
// dst: argmin_T sum_i w_i ||dst_i - T(src_i)||^2. Standard SVD construction
// with the determinant-sign fix. Throws DegenerateConfiguration for < 3
// points, zero total weight, or collinear/coincident configurations.
Sim3 umeyama_sim3(std::span<const Vec3> src, std::span<const Vec3> dst,
                  std::span<const double> weights = {}, bool allow_scale = true);

// Robust pinhole focal length from a self-frame pointmap via IRLS
// (Weiszfeld-style). Needs >= 100 pixels with z > 0, else InsufficientData.
double estimate_focal(const Pointmap& pm, double cx, double cy);

// Per-pixel z of a self-frame pointmap.
DepthGrid pointmap_to_depth(const Pointmap& pm);

}  // namespace hams
