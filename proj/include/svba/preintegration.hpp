#pragma once

#include "svba/state.hpp"

#include <span>
#include <vector>

namespace svba {

struct ImuSample {
    int64_t t_ns{0};
    Vector3d gyro{Vector3d::Zero()};   // rad/s
    Vector3d accel{Vector3d::Zero()};  // m/s^2
};

// Continuous-time noise densities; bias terms are random-walk densities.
struct ImuNoiseModel {
    double gyro_noise{1.7e-4};   // rad/s/sqrt(Hz)
    double accel_noise{2.0e-3};  // m/s^2/sqrt(Hz)
    double gyro_walk{2.0e-5};    // rad/s^2/sqrt(Hz)
    double accel_walk{3.0e-3};   // m/s^3/sqrt(Hz)

    bool valid() const {
        return gyro_noise > 0.0 && accel_noise > 0.0 && gyro_walk > 0.0 && accel_walk > 0.0;
    }
};

// IMU samples between two keyframes collapsed into relative position /
// velocity / rotation pseudo-measurements, linearized at (lin_ba, lin_bg).
//
// jacobian is the accumulated 15x15 sensitivity of the final error state to
// the initial error state; its bias columns provide the first-order
// measurement correction when the bias estimate moves. covariance is the
// 15x15 error covariance in the [alpha, beta, theta, ba, bg] ordering.
struct PreintegratedImu {
    Vector3d alpha{Vector3d::Zero()};
    Vector3d beta{Vector3d::Zero()};
    Quaterniond gamma{Quaterniond::Identity()};
    Matrix15 jacobian{Matrix15::Identity()};
    Matrix15 covariance{Matrix15::Zero()};
    double dt_total{0.0};
    Vector3d lin_ba{Vector3d::Zero()};
    Vector3d lin_bg{Vector3d::Zero()};

    Matrix3d J_alpha_ba() const { return jacobian.block<3, 3>(kIdxP, kIdxBa); }
    Matrix3d J_alpha_bg() const { return jacobian.block<3, 3>(kIdxP, kIdxBg); }
    Matrix3d J_beta_ba() const { return jacobian.block<3, 3>(kIdxV, kIdxBa); }
    Matrix3d J_beta_bg() const { return jacobian.block<3, 3>(kIdxV, kIdxBg); }
    Matrix3d J_gamma_bg() const { return jacobian.block<3, 3>(kIdxTheta, kIdxBg); }

    // Lower-triangular whitener W with W^T W = covariance^-1.
    Matrix15 sqrt_information() const;
};

// Midpoint integration of the raw samples with biases subtracted, propagating
// the bias Jacobian and covariance in discrete error-state form alongside.
// Throws std::invalid_argument on fewer than 2 samples or non-monotone
// timestamps.
PreintegratedImu preintegrate(std::span<const ImuSample> samples, const Vector3d& lin_ba,
                              const Vector3d& lin_bg, const ImuNoiseModel& noise);

struct BiasCorrected {
    Vector3d alpha;
    Vector3d beta;
    Quaterniond gamma;
};

// First-order correction of the preintegrated measurements to biases
// (ba, bg) away from the linearization point.
BiasCorrected correct_for_bias_delta(const PreintegratedImu& p, const Vector3d& ba,
                                     const Vector3d& bg);

struct ImuResidual {
    Vector15 r{Vector15::Zero()};
    Matrix15 J_prev{Matrix15::Zero()};  // w.r.t. error state of keyframe k-1
    Matrix15 J_curr{Matrix15::Zero()};  // w.r.t. error state of keyframe k
};

// Residual [alpha, beta, gamma, ba diff, bg diff] between the bias-corrected
// preintegration and the relative motion predicted by the two states, with
// analytic Jacobians w.r.t. both 15-dim error states.
ImuResidual imu_residual(const PreintegratedImu& p, const KeyframeState& prev,
                         const KeyframeState& curr, const GravityVector& g);

// Chains two consecutive segments sharing the same linearization biases.
// Exact for the discrete recursion: jacobian and covariance compose as
// J = J2 J1, P = J2 P1 J2^T + P2.
PreintegratedImu compose(const PreintegratedImu& first, const PreintegratedImu& second);

}  // namespace svba
