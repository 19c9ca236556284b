#pragma once

#include <span>
#include <utility>
#include <vector>

#include "svba/state.hpp"

namespace svba {

// Rigid yaw-plus-translation gauge transform mapping an estimate onto the
// truth frame: p -> Rz(yaw) p + t.
struct PosyawAlignment {
    double yaw = 0.0;
    Vector3d t = Vector3d::Zero();
    bool degenerate = false;  // all points coincident, yaw left at 0
};

// Pairs each estimate state with the truth state of nearest timestamp.
// Throws if any estimate timestamp has no truth match within tolerance_ns.
std::vector<std::pair<int, int>> associate_states(std::span<const KeyframeState> estimate,
                                                  std::span<const KeyframeState> truth,
                                                  int64_t tolerance_ns = 1'000'000);

// Closed-form least-squares yaw + translation over associated positions:
// yaw from the planar dot/cross correlation of centered horizontal
// coordinates, translation from the rotated centroid difference.
PosyawAlignment align_posyaw(std::span<const KeyframeState> estimate,
                             std::span<const KeyframeState> truth);

std::vector<KeyframeState> apply_alignment(std::span<const KeyframeState> states,
                                           const PosyawAlignment& alignment);

struct AteResult {
    double pos_rmse_m = 0.0;
    double rot_rmse_deg = 0.0;
};

// RMSE of position error and of geodesic orientation angle (degrees) over
// associated pairs. The estimate is expected to be aligned already.
AteResult compute_ate(std::span<const KeyframeState> estimate,
                      std::span<const KeyframeState> truth);

// RMSE of the speed error |v_est| - |v_true| over associated pairs; speed is
// yaw invariant, so no alignment is required.
double compute_velocity_rmse(std::span<const KeyframeState> estimate,
                             std::span<const KeyframeState> truth);

struct TrajectoryMetrics {
    double ate_pos_m = 0.0;
    double ate_rot_deg = 0.0;
    double vel_rmse_mps = 0.0;
    PosyawAlignment alignment;
};

// associate + align + ATE + velocity RMSE in one call.
TrajectoryMetrics evaluate_trajectory(std::span<const KeyframeState> estimate,
                                      std::span<const KeyframeState> truth);

// Mean over per-window solve times; rejects an empty list.
double aggregate_solve_time_ms(std::span<const double> solve_ms);

}  // namespace svba
