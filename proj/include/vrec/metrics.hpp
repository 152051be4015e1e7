#pragma once

#include <optional>
#include <string>

#include "vrec/volume.hpp"

namespace vrec {

struct OverlapResult {
    double dice = 0.0;
    double iou = 0.0;
};

/// Dice and IoU over binary volumes. Both-empty convention: (1, 1). IoU is
/// computed through the identity iou = dice / (2 - dice), which is exact for
/// binary sets and keeps the report's identity invariant free of rounding.
OverlapResult overlap_metrics(const VolumeGrid& r, const VolumeGrid& g);

/// Medial-axis thinning: 6-subiteration sequential thinning with simple
/// points characterized by 26/6 topological numbers, line endpoints kept.
/// Output is a subset of the input with the same 26-component count.
VolumeGrid skeletonize_3d(const VolumeGrid& v);

/// Identifier of the thinning variant, recorded in run metadata because
/// centerline overlap scores depend on it.
inline const char* skeletonization_method() {
    return "6-subiteration sequential thinning, 26/6 topological numbers, line endpoints kept";
}

/// Centerline overlap score: harmonic mean of the skeleton-in-mask fractions
/// both ways. Empty skeleton on either side -> no value.
std::optional<double> cl_dice(const VolumeGrid& r, const VolumeGrid& g);

/// Symmetric mean squared nearest-neighbor distance (mm^2) between the
/// foreground voxel-center point clouds. Either side empty -> no value.
std::optional<double> chamfer_l2(const VolumeGrid& r, const VolumeGrid& g);

/// Brute-force O(n*m) reference; the accelerated path must equal it exactly.
std::optional<double> chamfer_l2_bruteforce(const VolumeGrid& r, const VolumeGrid& g);

/// Relative squared error sum((R-G)^2) / sum(G^2). All-zero G -> no value.
std::optional<double> re_error(const VolumeGrid& r, const VolumeGrid& g);

/// Mean squared voxel difference.
double re_mse(const VolumeGrid& r, const VolumeGrid& g);

/// One evaluation row: threshold-dependent scores on the binarized volume,
/// plus the continuous-volume error columns reported alongside.
struct MetricsReport {
    double threshold = 0.5;
    std::optional<double> cl_dice;
    double dice = 0.0;
    double iou = 0.0;
    std::optional<double> re_error;
    std::optional<double> chamfer_l2;
    double re_mse = 0.0;
    std::optional<double> re_error_continuous;
    double re_mse_continuous = 0.0;
};

/// Binarize `continuous` at `threshold` and score it against binary `gt`.
MetricsReport evaluate_reconstruction(const VolumeGrid& continuous, const VolumeGrid& gt,
                                      double threshold);

/// CSV serialization used by the trainer log and the evaluation command.
/// Columns: iteration,threshold,loss,clDice,Dice,IoU,reError,CD_l2,reMSE,
/// reError_cont,reMSE_cont. Missing optionals render as empty cells.
std::string metrics_csv_header();
std::string metrics_csv_row(int64_t iteration, double loss, const MetricsReport& m);

}  // namespace vrec
