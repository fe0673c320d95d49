#pragma once

#include <filesystem>
#include <vector>

#include "hams/io.hpp"
#include "hams/metrics.hpp"
#include "hams/oracle.hpp"

namespace hams {

// Command-line surface: gen / align / fuse / fit / eval / pipeline.
// Exit codes: 0 success, 1 usage error, 2 data error.
int cli_main(int argc, const char* const* argv);

// Stage helpers shared by the subcommands and the acceptance suite.

struct GenOptions {
    uint64_t seed = 0;
    int views = 4;
    int persons = -1;  // -1: sample from the default range
    int width = 128;
    int height = 96;
    double noise_depth = 0.0;
    double noise_conf = 0.0;
    double noise_dp = 0.0;
    int noise_mask = 0;
    bool noise_ids = false;
    bool monocular = false;
    bool descriptors = true;
    int descriptor_dim = 16;
};

SceneBundle generate_bundle(const GenOptions& opts);

AlignmentState align_bundle(const PairGraph& graph, int iterations, double tolerance);

struct FuseResult {
    std::vector<FusedView> views;
    IdMap idmap;
    SemanticPointCloud cloud;
};

FuseResult fuse_bundle(const PairGraph& graph, const AlignmentState& state, double conf_floor);

std::vector<BodyFitRecord> fit_cloud(const SemanticPointCloud& cloud, double lambda_theta,
                                     double lambda_beta);

// Posed template vertices of a fitted body as a semantic cloud (PLY export).
SemanticPointCloud fitted_body_cloud(const BodyFitRecord& record);
void write_fitted_meshes(const std::filesystem::path& dir,
                         const std::vector<BodyFitRecord>& bodies);

// Sim3 mapping the predicted gauge onto the GT world using the cameras.
Sim3 gauge_transform(const std::vector<Camera>& pred, const std::vector<Camera>& gt);

// Relative poses for every unordered view pair (a < b), expressed in frame a.
std::vector<RelativePose> relative_poses(const std::vector<Camera>& cams);

}  // namespace hams
