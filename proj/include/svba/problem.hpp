#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "svba/calibration.hpp"
#include "svba/factors.hpp"
#include "svba/preintegration.hpp"
#include "svba/state.hpp"

namespace svba {

struct SolverSettings {
    int max_iterations = 50;
    double lambda_init = 1e-4;
    double lambda_up = 10.0;    // on rejected step
    double lambda_down = 0.5;   // on accepted step
    double lambda_max = 1e10;   // beyond this the solve is declared failed
    double rel_cost_tol = 1e-8;
    double grad_tol = 1e-10;    // infinity norm of the gradient
    double min_baseline = 0.02; // m, epipolar degeneracy gate
    double min_depth = 1e-3;    // m, reprojection cheirality gate
    bool parallel_linearizer = true;
};

// One pixel observation of a landmark variable (structure-based path only).
struct ReprojectionFactor {
    int kf_index = -1;
    int landmark_index = -1;
    Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
    double sigma_px = 1.0;
};

// The assembled window. Error-state layout: 15 dims per keyframe
// [dp, dv, dtheta, dba, dbg], then 3 dims per landmark (structure-based).
struct InitializationProblem {
    std::vector<KeyframeState> states;        // initial guesses, N+1 keyframes
    std::vector<PreintegratedImu> imu_factors; // N, between consecutive states
    std::vector<EpipolarFactor> epi_factors;   // structureless visual term
    std::vector<ReprojectionFactor> reproj_factors;  // structure-based term
    std::vector<Landmark> landmarks;                 // structure-based term
    Calibration calib;
    RobustLoss loss;
    SolverSettings settings;
    // Gauge policy: hold the first keyframe's position and yaw fixed by
    // projecting those directions out of the linear system.
    bool fix_first_position_yaw = true;
    std::vector<int64_t> dropped_track_ids;  // tracks that failed triangulation

    bool structure_based() const { return !reproj_factors.empty(); }
    int num_keyframes() const { return static_cast<int>(states.size()); }
    int dim() const { return 15 * num_keyframes() + 3 * static_cast<int>(landmarks.size()); }
};

struct BuildConfig {
    Pairing pairing = Pairing::kAllPairs;
    double epipolar_sigma = -1.0;  // <= 0: use 1.5 / mean focal length
    double pixel_sigma = 1.0;      // px, whitening of reprojection residuals
    RobustLoss loss;
    SolverSettings settings;
};

double default_epipolar_sigma(const CameraIntrinsics& intr);

// Assemble the structureless problem: IMU factors between consecutive states
// plus epipolar factors expanded from the tracks. No landmark variables.
// Throws std::invalid_argument on fewer than 3 keyframes, a state/IMU-factor
// count mismatch, or no track with >= 2 observations.
InitializationProblem build_structureless(std::vector<KeyframeState> states,
                                          std::vector<PreintegratedImu> preints,
                                          std::span<const FeatureTrack> tracks,
                                          const Calibration& calib, const BuildConfig& config);

// Assemble the structure-based problem: IMU factors plus one reprojection
// factor per observation, with one 3D landmark variable per track initialized
// by n-view triangulation from the initial states. Tracks that fail
// triangulation are dropped and recorded in dropped_track_ids. Throws if all
// tracks fail.
InitializationProblem build_structure_based(std::vector<KeyframeState> states,
                                            std::vector<PreintegratedImu> preints,
                                            std::span<const FeatureTrack> tracks,
                                            const Calibration& calib, const BuildConfig& config);

}  // namespace svba
