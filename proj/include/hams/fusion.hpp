#pragma once

#include <map>
#include <tuple>

#include "hams/alignment.hpp"

namespace hams {

// (edge index, view slot, pair-local id) -> global instance id, total over
// every local id that appears in the graph; global ids dense in 1..M.
struct IdMap {
    std::map<std::tuple<int, int, int>, int> map;
    int global_count = 0;

    int lookup(int edge, int slot, int local_id) const {
        auto it = map.find({edge, slot, local_id});
        return it == map.end() ? 0 : it->second;
    }
};

// Cross-pair ID reconciliation: masks on the same image are matched greedily
// by descending IoU (threshold 0.5) and merged via union-find, with local ids
// linked across the two slots of each pair. Unmatched masks found new ids.
IdMap resolve_instance_ids(const PairGraph& graph);

struct DpContribution {
    const VecGrid* dp = nullptr;
    const MaskGrid* valid = nullptr;
    const ConfidenceMap* conf = nullptr;
};

struct FusedDensePose {
    VecGrid dp;
    DepthGrid weight;  // sum of confidence * validity; dp is zero where 0
};

// Confidence-weighted per-pixel average of DensePose maps, gated by validity.
FusedDensePose aggregate_densepose(const std::vector<DpContribution>& contributions);

struct FusedView {
    int view = 0;
    FusedDensePose densepose;
    InstanceGrid instances;  // global ids
    MaskGrid silhouette;
};

// Fuses all edge contributions for one image: DensePose weighted average plus
// a per-pixel global-id vote (summed confidence, smaller id wins ties).
FusedView fuse_view(const PairGraph& graph, const IdMap& idmap, int view);

struct SemanticPoint {
    Vec3 position = Vec3::Zero();
    std::array<uint8_t, 3> color = {0, 0, 0};
    int view = 0;
    int px = 0, py = 0;
    uint16_t instance = 0;  // 0 = non-human
    Vec3 canonical01 = Vec3::Zero();
    bool has_canonical = false;
    double confidence = 0.0;

    bool human() const { return instance != 0; }
};

struct SemanticPointCloud {
    std::vector<SemanticPoint> points;
};

// Lifts every pixel above the confidence floor to the world frame (best edge
// contribution per pixel), labelled from the fused views.
SemanticPointCloud build_semantic_pointcloud(const PairGraph& graph, const AlignmentState& state,
                                             const IdMap& idmap,
                                             const std::vector<FusedView>& fused,
                                             double conf_floor);

}  // namespace hams
