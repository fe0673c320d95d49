#pragma once

#include "hams/oracle.hpp"

namespace hams {

// Pairwise predictions over N views; the undirected view graph must be
// connected and ordered (i,j) keys unique.
struct PairGraph {
    int view_count = 0;
    std::vector<PairPrediction> edges;

    void validate() const;     // duplicate ordered edges
    bool is_connected() const;
    // index of the best self-expression edge (view_i == view, highest mean
    // confidence), or -1
    int self_edge(int view) const;
};

struct Correspondence {
    int x0 = 0, y0 = 0;
    int x1 = 0, y1 = 0;
    double score = 0.0;
};

// Per-view Sim3 poses (view-to-world, view 0 pinned to identity) plus
// per-edge scale corrections.
struct AlignmentState {
    std::vector<Sim3> view_pose;
    std::vector<double> edge_scale;
    double energy = 0.0;
    std::vector<double> energy_trace;

    void validate() const;  // view-0 gauge, positive scales
};

struct AlignmentOptions {
    int max_iterations = 50;
    double tolerance = 1e-10;
    double conf_floor = 1.5;  // confidences below this are excluded
    double initial_step = 0.0;  // 0 = auto from the first gradient
};

// Mutual nearest neighbours under dot-product similarity on a strided pixel
// grid; score is the dot product.
std::vector<Correspondence> reciprocal_nn_match(const DescGrid& desc0, const DescGrid& desc1,
                                                int stride = 1);

// Closed-form initialization: per-edge relative Sim3 via confidence-weighted
// Umeyama between the two expressions of view j's geometry, chained over a
// maximum-confidence spanning tree rooted at view 0.
AlignmentState init_poses_spanning_tree(const PairGraph& graph, double conf_floor = 1.5);

// First-order refinement of E = sum_e sum_p C ||W(p) - T_anchor(sigma_e X)||
// with W the per-view averaged world pointmap recomputed each sweep. The
// recorded energy sequence is non-increasing (step halving on increase).
AlignmentState refine_global_alignment(const PairGraph& graph, const AlignmentState& init,
                                       const AlignmentOptions& opts = {});

// Unit-scale camera poses (edge scale folded away) with focal estimated from
// each view's self-frame pointmap; principal point at the image centre.
std::vector<Camera> extract_cameras(const PairGraph& graph, const AlignmentState& state);

// Energy of a state under the same definition refine uses; exposed for tests.
double alignment_energy(const PairGraph& graph, const AlignmentState& state,
                        double conf_floor = 1.5);

// World-frame lift of an edge slot pixel under a state (used by fusion).
Vec3 lift_pixel(const PairGraph& graph, const AlignmentState& state, int edge_index, int slot,
                int x, int y);

}  // namespace hams
