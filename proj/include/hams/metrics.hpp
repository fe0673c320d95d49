#pragma once

#include "hams/geometry.hpp"

namespace hams {

struct HumanEvalResult {
    std::vector<double> w_per_person;
    std::vector<double> ga_per_person;
    std::vector<double> pa_per_person;
    double w_mpjpe = 0.0;
    double ga_mpjpe = 0.0;
    double pa_mpjpe = 0.0;
};

struct CameraEvalResult {
    double te = 0.0;
    double s_te = 0.0;
    double ae = 0.0;     // degrees, after global rotation alignment
    double rra = 0.0;    // fraction of view pairs
    double cca = 0.0;    // fraction of cameras
    double s_cca = 0.0;
};

struct PairwisePoseResult {
    double rra15 = 0.0;
    double rta15 = 0.0;
    double maa30 = 0.0;
};

struct DepthEvalResult {
    double rel = 0.0;
    double tau = 0.0;
};

struct RelativePose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
};

// Joint sets are person-aligned by index (J identical across persons).
// W: world frame; GA: one Sim3 fitted on all people jointly; PA: per-person
// Sim3. Each alignment candidate set includes the coarser level's transform,
// which makes PA <= GA <= W hold on every input.
HumanEvalResult mpjpe_suite(const std::vector<std::vector<Vec3>>& pred_joints,
                            const std::vector<std::vector<Vec3>>& gt_joints);

// tau_deg: RRA threshold (degrees); tau_frac: CCA threshold as a fraction of
// the GT scene diameter (max pairwise GT camera-centre distance).
CameraEvalResult camera_metrics(const std::vector<Camera>& pred, const std::vector<Camera>& gt,
                                double tau_deg = 10.0, double tau_frac = 0.10);

// RRA@15 / RTA@15 / mAA(30) over per-pair relative poses; translation error is
// the angle between unit translation directions.
PairwisePoseResult pairwise_pose_metrics(const std::vector<RelativePose>& pred,
                                         const std::vector<RelativePose>& gt);

DepthEvalResult depth_metrics(const DepthGrid& pred, const DepthGrid& gt, const MaskGrid& valid,
                              bool median_align);

// Best Sim3 mapping src onto dst with degenerate-configuration fallbacks
// (exact for 2 points or collinear sets); used by the s-* metrics.
Sim3 best_sim3_or_fallback(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

// Hungarian matching of predicted to GT persons on mean joint distance;
// returns pred index -> gt index. Fallback for ID-free inputs.
std::vector<int> match_persons_by_distance(const std::vector<std::vector<Vec3>>& pred_joints,
                                           const std::vector<std::vector<Vec3>>& gt_joints);

}  // namespace hams
