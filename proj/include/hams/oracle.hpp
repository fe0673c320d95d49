#pragma once

#include <memory>
#include <optional>

#include "hams/bodyfit.hpp"
#include "hams/geometry.hpp"

namespace hams {

struct SceneConfig {
    double room_side_min = 4.0;
    double room_side_max = 6.5;
    double room_height_min = 2.6;
    double room_height_max = 3.2;
    int persons_min = 4;
    int persons_max = 6;
    int camera_count = 4;
    int width = 128;
    int height = 96;
    // focal = factor * width; wide lenses keep full bodies in frame at
    // ring-to-subject distances
    double focal_factor_min = 0.75;
    double focal_factor_max = 1.05;
    bool monocular = false;
    int descriptor_dim = 16;
    bool with_descriptors = true;
    double silhouette_margin_px = 1.0;

    void validate() const;  // throws ConfigInvalid
};

// finite textured rectangle: origin + s*edge_u + t*edge_v, s,t in [0,1]
struct RoomPlane {
    Vec3 origin = Vec3::Zero();
    Vec3 edge_u = Vec3::Zero();
    Vec3 edge_v = Vec3::Zero();
    Vec3 color_a = Vec3(0.8, 0.8, 0.8);
    Vec3 color_b = Vec3(0.5, 0.5, 0.5);
    double checker_size = 0.5;
};

struct ScenePerson {
    BodyParams params;
    int id = 0;  // global instance id, 1-based
};

struct TriangleChunk {
    int begin = 0;
    int end = 0;
    Vec3 aabb_min = Vec3::Zero();
    Vec3 aabb_max = Vec3::Zero();
};

struct PosedBodyCache {
    std::vector<Vec3> vertices;  // world frame
    Vec3 aabb_min = Vec3::Zero();
    Vec3 aabb_max = Vec3::Zero();
    std::vector<TriangleChunk> chunks;  // coarse culling for the ray caster
};

struct SceneTruth {
    double room_w = 0.0, room_h = 0.0, room_d = 0.0;  // box [-w/2,w/2] x [0,h] x [-d/2,d/2]
    std::vector<RoomPlane> planes;
    std::vector<ScenePerson> people;
    std::vector<Camera> cameras;
    double world_scale = 1.0;
    uint64_t seed = 0;
    double silhouette_margin_px = 1.0;
    int descriptor_dim = 16;
    bool with_descriptors = true;
    // correlation length of the descriptor field; a few pixel footprints so
    // that true correspondences keep the highest dot product
    double descriptor_cell = 0.04;
    std::shared_ptr<const BodyTemplate> body;
    std::vector<PosedBodyCache> posed;  // aligned with people

    std::array<Vec3, kBodyJoints> person_joints(int index) const;
    double camera_diameter() const;
};

struct ViewTruth {
    int camera_index = 0;
    Pointmap pointmap;        // camera frame
    DepthGrid depth;          // == pointmap z
    InstanceGrid instances;   // nearest-surface ownership, 0 = background
    VecGrid densepose;        // canonical coords in [0,1]^3, zero outside dp_valid
    MaskGrid dp_valid;        // SMPL-validity (actual body hits)
    std::vector<MaskGrid> silhouettes;  // per person, dilated, mutually exclusive
    InstanceGrid silhouette_ids;        // per-pixel silhouette owner (global ids)
    VecGrid color;
    VecGrid world_points;
};

struct NoiseSpec {
    double depth_sigma = 0.0;       // relative, per pixel
    double conf_corrupt_rate = 0.0;
    double dp_sigma = 0.0;
    int mask_morph_px = 0;          // > 0 dilate, < 0 erode
    bool permute_ids = false;

    void validate() const;
};

// Two-view network output bundle; both pointmaps in view_i's camera frame.
struct PairPrediction {
    int view_i = 0, view_j = 0;
    Pointmap pointmap0, pointmap1;
    ConfidenceMap conf0, conf1;
    DescGrid desc0, desc1;  // dim == 0 when descriptors were not generated
    InstanceGrid inst0, inst1;  // pair-local ids, dense 1..K, consistent across the two slots
    VecGrid dp0, dp1;
    MaskGrid dpmask0, dpmask1;
    MaskGrid sil0, sil1;
    // oracle bookkeeping: local id-1 -> ground-truth person id (not serialized)
    std::vector<int> local_to_truth;

    int width() const { return pointmap0.width(); }
    int height() const { return pointmap0.height(); }
};

SceneTruth generate_scene(const SceneConfig& config, uint64_t seed);
ViewTruth render_view(const SceneTruth& scene, int camera_index);
PairPrediction make_pair_prediction(const SceneTruth& scene, int i, int j, const NoiseSpec& noise,
                                    uint64_t seed);

struct RayHit {
    double t = 0.0;        // camera-depth parameter when dir.z == 1 in camera frame
    Vec3 point = Vec3::Zero();
    int person = -1;       // -1: room surface
    Vec3 canonical01 = Vec3::Zero();
    Vec3 color = Vec3::Zero();
};

std::optional<RayHit> raycast_scene(const SceneTruth& scene, const Vec3& origin, const Vec3& dir);

// Caches per-view renders so repeated pair construction does not re-raycast.
class SceneOracle {
public:
    explicit SceneOracle(SceneTruth scene) : scene_(std::move(scene)) {}

    const SceneTruth& scene() const { return scene_; }
    const ViewTruth& view(int index);
    PairPrediction pair(int i, int j, const NoiseSpec& noise, uint64_t seed);

private:
    SceneTruth scene_;
    std::vector<std::shared_ptr<const ViewTruth>> views_;
};

// Shared implementation used by both make_pair_prediction and SceneOracle.
PairPrediction make_pair_from_views(const SceneTruth& scene, const ViewTruth& vt_i,
                                    const ViewTruth& vt_j, const NoiseSpec& noise, uint64_t seed);

}  // namespace hams
