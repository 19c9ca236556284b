#include "svba/problem.hpp"

#include <stdexcept>

namespace svba {

double default_epipolar_sigma(const CameraIntrinsics& intr) {
    return 1.5 / intr.mean_focal();
}

namespace {

void check_common(const std::vector<KeyframeState>& states,
                  const std::vector<PreintegratedImu>& preints) {
    if (states.size() < 3) {
        throw std::invalid_argument("problem build: need at least 3 keyframes");
    }
    if (preints.size() + 1 != states.size()) {
        throw std::invalid_argument(
            "problem build: need exactly one IMU factor between consecutive keyframes");
    }
    for (size_t k = 0; k + 1 < states.size(); ++k) {
        if (states[k + 1].t_ns <= states[k].t_ns) {
            throw std::invalid_argument("problem build: keyframe timestamps must increase");
        }
    }
}

void check_track_indices(std::span<const FeatureTrack> tracks, int num_kf) {
    for (const FeatureTrack& tr : tracks) {
        int prev = -1;
        for (const TrackObservation& o : tr.obs) {
            if (o.kf_index < 0 || o.kf_index >= num_kf) {
                throw std::invalid_argument("problem build: track references unknown keyframe");
            }
            if (o.kf_index <= prev) {
                throw std::invalid_argument(
                    "problem build: track observations must have increasing keyframe indices");
            }
            prev = o.kf_index;
        }
    }
}

}  // namespace

InitializationProblem build_structureless(std::vector<KeyframeState> states,
                                          std::vector<PreintegratedImu> preints,
                                          std::span<const FeatureTrack> tracks,
                                          const Calibration& calib, const BuildConfig& config) {
    check_common(states, preints);
    check_track_indices(tracks, static_cast<int>(states.size()));

    const double sigma = config.epipolar_sigma > 0.0 ? config.epipolar_sigma
                                                     : default_epipolar_sigma(calib.intrinsics);
    InitializationProblem p;
    p.epi_factors = build_epipolar_factors(tracks, config.pairing, sigma);
    if (p.epi_factors.empty()) {
        throw std::invalid_argument(
            "problem build: no track with >= 2 observations; translation is unconstrained");
    }
    p.states = std::move(states);
    p.imu_factors = std::move(preints);
    p.calib = calib;
    p.loss = config.loss;
    p.settings = config.settings;
    return p;
}

InitializationProblem build_structure_based(std::vector<KeyframeState> states,
                                            std::vector<PreintegratedImu> preints,
                                            std::span<const FeatureTrack> tracks,
                                            const Calibration& calib, const BuildConfig& config) {
    check_common(states, preints);
    check_track_indices(tracks, static_cast<int>(states.size()));

    std::vector<Pose> cam_poses(states.size());
    for (size_t k = 0; k < states.size(); ++k) {
        cam_poses[k] = imu_pose_to_camera_pose(states[k].pose(), calib.extrinsics);
    }

    InitializationProblem p;
    for (const FeatureTrack& tr : tracks) {
        if (tr.obs.size() < 2) continue;
        std::vector<Pose> poses;
        std::vector<Vector3d> bearings;
        poses.reserve(tr.obs.size());
        bearings.reserve(tr.obs.size());
        for (const TrackObservation& o : tr.obs) {
            poses.push_back(cam_poses[o.kf_index]);
            bearings.push_back(o.bearing);
        }
        const auto pt = triangulate_landmark(poses, bearings, config.settings.min_depth);
        if (!pt) {
            p.dropped_track_ids.push_back(tr.feature_id);
            continue;
        }
        const int lm_index = static_cast<int>(p.landmarks.size());
        p.landmarks.push_back(Landmark{tr.feature_id, *pt});
        for (const TrackObservation& o : tr.obs) {
            ReprojectionFactor f;
            f.kf_index = o.kf_index;
            f.landmark_index = lm_index;
            f.pixel = o.pixel;
            f.sigma_px = config.pixel_sigma;
            p.reproj_factors.push_back(f);
        }
    }
    if (p.landmarks.empty()) {
        throw std::invalid_argument("problem build: every track failed triangulation");
    }
    p.states = std::move(states);
    p.imu_factors = std::move(preints);
    p.calib = calib;
    p.loss = config.loss;
    p.settings = config.settings;
    return p;
}

}  // namespace svba
