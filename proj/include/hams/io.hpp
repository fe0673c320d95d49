#pragma once

#include <filesystem>
#include <optional>

#include "hams/alignment.hpp"
#include "hams/bodyfit.hpp"
#include "hams/fusion.hpp"

namespace hams {

// ---------------------------------------------------------------------------
// HARR array container: magic "HARR", version u8=1, dtype u8 (1=f32, 2=u16,
// 3=u8), ndim u8, dims ndim x u32 LE, payload row-major LE.

enum class Dtype : uint8_t { F32 = 1, U16 = 2, U8 = 3 };

struct ArrayContainer {
    Dtype dtype = Dtype::F32;
    std::vector<uint32_t> dims;
    std::vector<float> f32;
    std::vector<uint16_t> u16;
    std::vector<uint8_t> u8;

    size_t element_count() const;

    static ArrayContainer from_grid(const DepthGrid& g);        // H x W
    static ArrayContainer from_vecgrid(const VecGrid& g);       // H x W x 3
    static ArrayContainer from_desc(const DescGrid& g);         // H x W x D
    static ArrayContainer from_mask(const MaskGrid& g);         // H x W
    static ArrayContainer from_instances(const InstanceGrid& g);  // H x W
    static ArrayContainer from_points(const std::vector<Vec3>& pts);  // N x 3

    DepthGrid to_grid() const;
    VecGrid to_vecgrid() const;
    DescGrid to_desc() const;
    MaskGrid to_mask() const;
    InstanceGrid to_instances() const;
    std::vector<Vec3> to_points() const;
};

void write_array(const std::filesystem::path& path, const ArrayContainer& arr);
ArrayContainer read_array(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// scene bundles

struct BundleTruth {
    std::vector<Camera> cameras;
    std::vector<std::pair<int, std::vector<Vec3>>> person_joints;  // (global id, J x 3)
    std::vector<DepthGrid> view_depths;
};

struct SceneBundle {
    int view_count = 0;
    int width = 0, height = 0;
    int descriptor_dim = 0;  // 0: no descriptor grids on disk
    std::vector<PairPrediction> pairs;
    std::optional<BundleTruth> truth;

    PairGraph to_graph() const;
};

void write_bundle(const std::filesystem::path& dir, const SceneBundle& bundle);
SceneBundle read_bundle(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// PLY (binary little-endian; x y z, red green blue, instance, dpx dpy dpz,
// confidence per vertex)

void export_ply(const SemanticPointCloud& cloud, const std::filesystem::path& path);
SemanticPointCloud read_ply(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// JSON artifacts

void write_alignment_json(const std::filesystem::path& path, const PairGraph& graph,
                          const AlignmentState& state);
AlignmentState read_alignment_json(const std::filesystem::path& path, const PairGraph& graph);

struct BodyFitRecord {
    int instance = 0;
    BodyParams params;
    double rmse = 0.0;
    int inlier_count = 0;
    std::vector<Vec3> joints;
};

void write_bodies_json(const std::filesystem::path& path, const std::vector<BodyFitRecord>& bodies);
std::vector<BodyFitRecord> read_bodies_json(const std::filesystem::path& path);

}  // namespace hams
