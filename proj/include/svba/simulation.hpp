#pragma once

#include <cstdint>
#include <vector>

#include "svba/calibration.hpp"
#include "svba/dataio.hpp"
#include "svba/factors.hpp"
#include "svba/state.hpp"

namespace svba {

struct TrajectorySpec {
    enum class Family { kSinusoid3d, kCircle, kFigureEight };
    Family family = Family::kSinusoid3d;
    double amplitude = 1.0;       // m; 0 gives a static trajectory
    double angular_rate = 1.0;    // rad/s base rate
    double duration = 4.5;        // s (10 keyframes at the default 2 Hz)
    double imu_rate_hz = 200.0;
    double keyframe_rate_hz = 2.0;

    bool valid() const {
        return duration > 0.0 && imu_rate_hz >= 10.0 * keyframe_rate_hz && keyframe_rate_hz > 0.0;
    }
};

struct SceneSpec {
    int landmark_count = 120;
    Vector3d box_min{-7.0, -7.0, -3.0};  // m, landmark placement volume
    Vector3d box_max{7.0, 7.0, 4.0};
    double min_depth = 0.4;   // m, accepted depth range from the cameras
    double max_depth = 16.0;
};

struct PerturbationSpec {
    double pos_sigma = 0.05;              // m
    double rot_sigma = 2.0 * M_PI / 180.0;  // rad
    double vel_sigma = 0.1;               // m/s
    double ba_sigma = 0.01;               // m/s^2
    double bg_sigma = 0.001;              // rad/s
    uint64_t seed = 0;
};

// Analytic trajectory plus its discrete realization. The keyframe states are
// produced by midpoint integration of the ideal IMU samples (the same scheme
// preintegration uses), so they are exactly consistent with the sample
// stream; the analytic samplers describe the underlying smooth motion.
class GroundTruth {
  public:
    TrajectorySpec spec;
    GravityVector gravity;
    std::vector<int64_t> imu_times_ns;
    std::vector<int64_t> kf_times_ns;
    std::vector<ImuSample> ideal_samples;  // bias-free, noise-free
    std::vector<KeyframeState> kf_states;  // discrete chain at keyframe times

    Vector3d position(double t) const;
    Vector3d velocity(double t) const;
    Vector3d accel_world(double t) const;
    Quaterniond attitude(double t) const;
    Vector3d omega_body(double t) const;

    bool is_static() const { return spec.amplitude <= 0.0 || spec.angular_rate <= 0.0; }

  private:
    // roll/pitch/yaw profile and rates; yaw follows the velocity heading.
    void euler_and_rates(double t, Vector3d& rpy, Vector3d& rpy_rate) const;
};

GroundTruth generate_ground_truth(const TrajectorySpec& spec,
                                  const GravityVector& gravity = GravityVector{});

// Measurement synthesis: gyro = omega_body + bg + noise, accel =
// R^T (a_world - g) + ba + noise (the ideal sample already carries the
// specific-force part). White noise uses density / sqrt(dt); the random-walk
// densities drive a bias drift on top of the constant true biases.
// Deterministic given the seed.
std::vector<ImuSample> synthesize_imu(const GroundTruth& gt, const ImuNoiseModel& noise,
                                      const Vector3d& true_ba, const Vector3d& true_bg,
                                      uint64_t seed, bool add_noise);

struct TrackSet {
    std::vector<FeatureTrack> tracks;
    std::vector<Vector3d> landmarks;  // true positions, index = feature id
};

// Rejection-samples landmarks in the scene box until landmark_count of them
// are visible (in image, depth in range) from at least two keyframes, then
// projects them into every keyframe, adds pixel noise, and back-projects the
// noisy pixels to bearings. Deterministic given the seed.
TrackSet synthesize_tracks(const GroundTruth& gt, const SceneSpec& scene, const Calibration& calib,
                           double pixel_sigma_px, uint64_t seed);

std::vector<KeyframeState> perturb_states(std::span<const KeyframeState> truth,
                                          const PerturbationSpec& spec);

struct SimOptions {
    TrajectorySpec traj;
    SceneSpec scene;
    PerturbationSpec perturb;
    Calibration calib = default_sim_calibration();
    Vector3d true_ba{0.04, -0.02, 0.03};
    Vector3d true_bg{0.002, -0.003, 0.001};
    double pixel_sigma_px = 0.0;
    bool imu_noise = false;
    uint64_t seed = 1;
};

struct SimulatedDataset {
    DatasetBundle bundle;
    std::vector<Vector3d> landmarks;  // true positions for oracle tests
};

// Full dataset: ground-truth states, IMU stream, tracks, and a perturbed
// initial guess, all derived deterministically from opts.seed.
SimulatedDataset simulate_dataset(const SimOptions& opts);

}  // namespace svba
