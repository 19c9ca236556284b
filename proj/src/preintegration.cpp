#include "svba/preintegration.hpp"

#include <stdexcept>

namespace svba {

Matrix15 PreintegratedImu::sqrt_information() const {
    Eigen::LLT<Matrix15> llt(covariance);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error("preintegration covariance is not positive definite");
    }
    // covariance = L L^T, whitener W = L^-1 so that r^T Sigma^-1 r = |W r|^2.
    Matrix15 W = Matrix15::Identity();
    llt.matrixL().solveInPlace(W);
    return W;
}

PreintegratedImu preintegrate(std::span<const ImuSample> samples, const Vector3d& lin_ba,
                              const Vector3d& lin_bg, const ImuNoiseModel& noise) {
    if (samples.size() < 2) {
        throw std::invalid_argument("preintegrate: need at least 2 IMU samples");
    }
    if (!noise.valid()) {
        throw std::invalid_argument("preintegrate: noise densities must be strictly positive");
    }

    PreintegratedImu out;
    out.lin_ba = lin_ba;
    out.lin_bg = lin_bg;

    const Eigen::Matrix<double, 4, 1> q_diag(
        noise.accel_noise * noise.accel_noise, noise.gyro_noise * noise.gyro_noise,
        noise.accel_walk * noise.accel_walk, noise.gyro_walk * noise.gyro_walk);

    for (size_t i = 0; i + 1 < samples.size(); ++i) {
        const ImuSample& s0 = samples[i];
        const ImuSample& s1 = samples[i + 1];
        if (s1.t_ns <= s0.t_ns) {
            throw std::invalid_argument("preintegrate: timestamps must be strictly increasing");
        }
        const double dt = static_cast<double>(s1.t_ns - s0.t_ns) * 1e-9;
        const double dt2 = dt * dt;

        const Vector3d a0 = s0.accel - lin_ba;
        const Vector3d a1 = s1.accel - lin_ba;
        const Vector3d w_mid = 0.5 * (s0.gyro + s1.gyro) - lin_bg;

        const Matrix3d R0 = out.gamma.toRotationMatrix();
        const Quaterniond dq = quat_from_rotvec(w_mid * dt);
        const Quaterniond gamma1 = (out.gamma * dq).normalized();
        const Matrix3d R1 = gamma1.toRotationMatrix();

        const Vector3d acc = 0.5 * (R0 * a0 + R1 * a1);
        const Vector3d alpha1 = out.alpha + out.beta * dt + 0.5 * acc * dt2;
        const Vector3d beta1 = out.beta + acc * dt;

        const Matrix3d a0x = skew(a0);
        const Matrix3d a1x = skew(a1);
        const Matrix3d wxdt = skew(w_mid) * dt;
        // d(R0 a0 + R1 a1)/d(theta), with the step rotation folded into R1.
        const Matrix3d dacc_dtheta = R0 * a0x + R1 * a1x * (Matrix3d::Identity() - wxdt);

        Matrix15 F = Matrix15::Identity();
        F.block<3, 3>(kIdxP, kIdxV) = Matrix3d::Identity() * dt;
        F.block<3, 3>(kIdxP, kIdxTheta) = -0.25 * dacc_dtheta * dt2;
        F.block<3, 3>(kIdxP, kIdxBa) = -0.25 * (R0 + R1) * dt2;
        F.block<3, 3>(kIdxP, kIdxBg) = 0.25 * R1 * a1x * dt2 * dt;
        F.block<3, 3>(kIdxV, kIdxTheta) = -0.5 * dacc_dtheta * dt;
        F.block<3, 3>(kIdxV, kIdxBa) = -0.5 * (R0 + R1) * dt;
        F.block<3, 3>(kIdxV, kIdxBg) = 0.5 * R1 * a1x * dt2;
        F.block<3, 3>(kIdxTheta, kIdxTheta) = dq.toRotationMatrix().transpose();
        F.block<3, 3>(kIdxTheta, kIdxBg) = -Matrix3d::Identity() * dt;

        // Noise input [n_a, n_g, n_wa, n_wg] with per-step covariance Q/dt.
        // The two samples of one step share the same effective noise channel,
        // which keeps the aggregate variance consistent with samples that are
        // reused by adjacent steps.
        Eigen::Matrix<double, 15, 12> G = Eigen::Matrix<double, 15, 12>::Zero();
        G.block<3, 3>(kIdxP, 0) = 0.25 * (R0 + R1) * dt2;
        G.block<3, 3>(kIdxP, 3) = -0.25 * R1 * a1x * dt2 * dt;
        G.block<3, 3>(kIdxV, 0) = 0.5 * (R0 + R1) * dt;
        G.block<3, 3>(kIdxV, 3) = -0.5 * R1 * a1x * dt2;
        G.block<3, 3>(kIdxTheta, 3) = Matrix3d::Identity() * dt;
        G.block<3, 3>(kIdxBa, 6) = Matrix3d::Identity() * dt;
        G.block<3, 3>(kIdxBg, 9) = Matrix3d::Identity() * dt;

        Eigen::Matrix<double, 12, 12> Q = Eigen::Matrix<double, 12, 12>::Zero();
        for (int b = 0; b < 4; ++b) {
            Q.block<3, 3>(3 * b, 3 * b) = (q_diag[b] / dt) * Matrix3d::Identity();
        }

        out.covariance = F * out.covariance * F.transpose() + G * Q * G.transpose();
        out.jacobian = F * out.jacobian;
        out.alpha = alpha1;
        out.beta = beta1;
        out.gamma = gamma1;
        out.dt_total += dt;
    }

    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    return out;
}

BiasCorrected correct_for_bias_delta(const PreintegratedImu& p, const Vector3d& ba,
                                     const Vector3d& bg) {
    const Vector3d dba = ba - p.lin_ba;
    const Vector3d dbg = bg - p.lin_bg;
    BiasCorrected c;
    c.alpha = p.alpha + p.J_alpha_ba() * dba + p.J_alpha_bg() * dbg;
    c.beta = p.beta + p.J_beta_ba() * dba + p.J_beta_bg() * dbg;
    const Vector3d dtheta = p.J_gamma_bg() * dbg;
    const Quaterniond corr(1.0, 0.5 * dtheta.x(), 0.5 * dtheta.y(), 0.5 * dtheta.z());
    c.gamma = (p.gamma * corr).normalized();
    return c;
}

ImuResidual imu_residual(const PreintegratedImu& p, const KeyframeState& prev,
                         const KeyframeState& curr, const GravityVector& g) {
    const BiasCorrected c = correct_for_bias_delta(p, prev.ba, prev.bg);

    const double dt = p.dt_total;
    const Vector3d gv = g.vec();
    const Matrix3d Rt = prev.q.toRotationMatrix().transpose();

    const Vector3d alpha_bar = Rt * (curr.p - prev.p - prev.v * dt - 0.5 * gv * dt * dt);
    const Vector3d beta_bar = Rt * (curr.v - prev.v - gv * dt);
    const Quaterniond gamma_bar = prev.q.conjugate() * curr.q;

    ImuResidual out;
    out.r.segment<3>(kIdxP) = c.alpha - alpha_bar;
    out.r.segment<3>(kIdxV) = c.beta - beta_bar;
    const Vector3d r_gamma = quat_boxminus(c.gamma, gamma_bar);
    out.r.segment<3>(kIdxTheta) = r_gamma;
    out.r.segment<3>(kIdxBa) = curr.ba - prev.ba;
    out.r.segment<3>(kIdxBg) = curr.bg - prev.bg;

    const Matrix3d Jr_inv = so3_right_jacobian_inv(r_gamma);
    const Matrix3d Jl_inv = so3_right_jacobian_inv(-r_gamma);
    const Vector3d dtheta_corr = p.J_gamma_bg() * (prev.bg - p.lin_bg);

    Matrix15& Jp = out.J_prev;
    Jp.block<3, 3>(kIdxP, kIdxP) = Rt;
    Jp.block<3, 3>(kIdxP, kIdxV) = Rt * dt;
    Jp.block<3, 3>(kIdxP, kIdxTheta) = -skew(alpha_bar);
    Jp.block<3, 3>(kIdxP, kIdxBa) = p.J_alpha_ba();
    Jp.block<3, 3>(kIdxP, kIdxBg) = p.J_alpha_bg();
    Jp.block<3, 3>(kIdxV, kIdxV) = Rt;
    Jp.block<3, 3>(kIdxV, kIdxTheta) = -skew(beta_bar);
    Jp.block<3, 3>(kIdxV, kIdxBa) = p.J_beta_ba();
    Jp.block<3, 3>(kIdxV, kIdxBg) = p.J_beta_bg();
    Jp.block<3, 3>(kIdxTheta, kIdxTheta) = Jr_inv * c.gamma.toRotationMatrix().transpose();
    Jp.block<3, 3>(kIdxTheta, kIdxBg) = Jr_inv * so3_right_jacobian(dtheta_corr) * p.J_gamma_bg();
    Jp.block<3, 3>(kIdxBa, kIdxBa) = -Matrix3d::Identity();
    Jp.block<3, 3>(kIdxBg, kIdxBg) = -Matrix3d::Identity();

    Matrix15& Jc = out.J_curr;
    Jc.block<3, 3>(kIdxP, kIdxP) = -Rt;
    Jc.block<3, 3>(kIdxV, kIdxV) = -Rt;
    Jc.block<3, 3>(kIdxTheta, kIdxTheta) = -Jl_inv;
    Jc.block<3, 3>(kIdxBa, kIdxBa) = Matrix3d::Identity();
    Jc.block<3, 3>(kIdxBg, kIdxBg) = Matrix3d::Identity();

    return out;
}

PreintegratedImu compose(const PreintegratedImu& first, const PreintegratedImu& second) {
    if ((first.lin_ba - second.lin_ba).norm() > 1e-12 ||
        (first.lin_bg - second.lin_bg).norm() > 1e-12) {
        throw std::invalid_argument("compose: segments must share linearization biases");
    }

    const Matrix3d R1 = first.gamma.toRotationMatrix();

    PreintegratedImu out;
    out.lin_ba = first.lin_ba;
    out.lin_bg = first.lin_bg;
    out.dt_total = first.dt_total + second.dt_total;
    out.alpha = first.alpha + first.beta * second.dt_total + R1 * second.alpha;
    out.beta = first.beta + R1 * second.beta;
    out.gamma = (first.gamma * second.gamma).normalized();

    // Lift the second segment's alpha/beta errors into the first frame.
    Matrix15 L = Matrix15::Identity();
    L.block<3, 3>(kIdxP, kIdxP) = R1;
    L.block<3, 3>(kIdxV, kIdxV) = R1;
    const Matrix15 J2 = L * second.jacobian * L.transpose();

    out.jacobian = J2 * first.jacobian;
    out.covariance = J2 * first.covariance * J2.transpose() + L * second.covariance * L.transpose();
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    return out;
}

}  // namespace svba
