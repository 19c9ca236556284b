#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "svba/geometry.hpp"
#include "svba/state.hpp"

namespace svba {

// One feature observation in one keyframe. The bearing is the back-projected
// pixel on the unit-depth plane, [x_n, y_n, 1].
struct TrackObservation {
    int kf_index = -1;
    Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
    Vector3d bearing = Vector3d::UnitZ();
};

// Ordered observations of one feature. Keyframe indices are strictly
// increasing, each appearing at most once.
struct FeatureTrack {
    int64_t feature_id = -1;
    std::vector<TrackObservation> obs;
};

// A co-observing keyframe pair with its two bearings and the scalar noise
// standard deviation of the coplanarity residual (bearing units).
struct EpipolarFactor {
    int kf_i = -1;
    int kf_j = -1;
    Vector3d z_i = Vector3d::UnitZ();
    Vector3d z_j = Vector3d::UnitZ();
    double sigma = 1.0;
};

// 3D feature position, used only by the structure-based path.
struct Landmark {
    int64_t feature_id = -1;
    Vector3d p = Vector3d::Zero();
};

struct RobustLoss {
    enum class Kind { kNone, kHuber };
    Kind kind = Kind::kHuber;
    double delta = 1.345;  // whitened-residual units
};

// IRLS weight for the Huber loss: 1 inside the quadratic region, delta/r in
// the linear region. `r` is the whitened residual norm.
double huber_weight(double r, const RobustLoss& loss);

// Robust cost contribution for squared whitened residual norm s = r^2.
double huber_cost(double s, const RobustLoss& loss);

// Per-keyframe quantities shared by every factor touching that keyframe in
// one linearization pass.
struct FrameCam {
    Matrix3d R;   // body-to-global rotation
    Matrix3d Rc;  // camera-to-global rotation, R * R_IC
    Vector3d c;   // camera center in global frame
    Vector3d rp;  // R * p_IC (lever arm in global frame)
};

FrameCam make_frame_cam(const KeyframeState& s, const Extrinsics& ext);

// Coplanarity residual r = A^T [t_hat]x B with A = R_j R_IC z_j,
// B = R_i R_IC z_i, t = c_i - c_j, plus analytic Jacobians w.r.t. the
// [dp, dtheta] error of each keyframe. Chain pieces are exposed so the
// assembly can be cross-checked and fault-injected in self tests.
struct EpipolarEval {
    double r = 0.0;
    Eigen::Matrix<double, 1, 6> J_i = Eigen::Matrix<double, 1, 6>::Zero();
    Eigen::Matrix<double, 1, 6> J_j = Eigen::Matrix<double, 1, 6>::Zero();
    double baseline = 0.0;
    bool degenerate = false;

    Vector3d A = Vector3d::Zero();
    Vector3d B = Vector3d::Zero();
    Vector3d t_hat = Vector3d::Zero();
    Vector3d g_A = Vector3d::Zero();  // dr/dA
    Vector3d g_B = Vector3d::Zero();  // dr/dB
    Vector3d g_t = Vector3d::Zero();  // dr/dt (through the normalization)
    Matrix3d dC_dt = Matrix3d::Zero();
};

// `flip_dcdt_sign` negates the translation-normalization Jacobian; it exists
// solely as a fault-injection hook for the Jacobian self test.
EpipolarEval epipolar_eval(const FrameCam& fi, const FrameCam& fj, const Vector3d& z_i,
                           const Vector3d& z_j, double min_baseline,
                           bool flip_dcdt_sign = false);

EpipolarEval epipolar_residual(const KeyframeState& state_i, const KeyframeState& state_j,
                               const EpipolarFactor& factor, const Extrinsics& ext,
                               double min_baseline = 0.02, bool flip_dcdt_sign = false);

// Pixel reprojection residual r = u - project(landmark) with Jacobians w.r.t.
// the observing keyframe's [dp, dtheta] error and the landmark position.
struct ReprojectionEval {
    Eigen::Vector2d r = Eigen::Vector2d::Zero();
    Eigen::Matrix<double, 2, 6> J_pose = Eigen::Matrix<double, 2, 6>::Zero();
    Eigen::Matrix<double, 2, 3> J_lm = Eigen::Matrix<double, 2, 3>::Zero();
    double depth = 0.0;
    bool behind = false;  // depth below gate; excluded from linearization
};

ReprojectionEval reprojection_residual(const KeyframeState& state, const Vector3d& landmark,
                                       const Eigen::Vector2d& u, const CameraIntrinsics& intr,
                                       const Extrinsics& ext, double min_depth = 1e-3);

enum class Pairing { kAllPairs, kConsecutive };

// Expand tracks into epipolar factors: one per selected observation pair.
// Tracks with fewer than two observations contribute nothing.
std::vector<EpipolarFactor> build_epipolar_factors(std::span<const FeatureTrack> tracks,
                                                   Pairing pairing, double sigma);

// n-view linear midpoint triangulation: solves sum_i (I - d_i d_i^T) p =
// sum_i (I - d_i d_i^T) c_i over unit world rays d_i from camera centers c_i.
// Returns nullopt if the system is ill-conditioned or any view sees the point
// at depth <= min_depth.
std::optional<Vector3d> triangulate_landmark(std::span<const Pose> cam_poses,
                                             std::span<const Vector3d> bearings,
                                             double min_depth = 1e-3);

}  // namespace svba
