#include "svba/factors.hpp"

#include <cmath>

namespace svba {

double huber_weight(double r, const RobustLoss& loss) {
    if (loss.kind == RobustLoss::Kind::kNone) return 1.0;
    if (r <= loss.delta) return 1.0;
    return loss.delta / r;
}

double huber_cost(double s, const RobustLoss& loss) {
    if (loss.kind == RobustLoss::Kind::kNone) return s;
    const double r = std::sqrt(s);
    if (r <= loss.delta) return s;
    return 2.0 * loss.delta * r - loss.delta * loss.delta;
}

FrameCam make_frame_cam(const KeyframeState& s, const Extrinsics& ext) {
    FrameCam f;
    f.R = s.q.toRotationMatrix();
    f.Rc = f.R * ext.q.toRotationMatrix();
    f.rp = f.R * ext.p;
    f.c = s.p + f.rp;
    return f;
}

EpipolarEval epipolar_eval(const FrameCam& fi, const FrameCam& fj, const Vector3d& z_i,
                           const Vector3d& z_j, double min_baseline, bool flip_dcdt_sign) {
    EpipolarEval e;
    e.A = fj.Rc * z_j;
    e.B = fi.Rc * z_i;

    const Vector3d t = fi.c - fj.c;
    e.baseline = t.norm();
    if (e.baseline < min_baseline) {
        e.degenerate = true;
        return e;
    }
    e.t_hat = t / e.baseline;

    const Vector3d cxB = e.t_hat.cross(e.B);
    e.r = e.A.dot(cxB);

    e.g_A = cxB;                 // dr/dA = [t_hat]x B
    e.g_B = e.A.cross(e.t_hat);  // dr/dB = A x t_hat (= (A^T [t_hat]x)^T)
    e.dC_dt = (Matrix3d::Identity() - e.t_hat * e.t_hat.transpose()) / e.baseline;
    if (flip_dcdt_sign) e.dC_dt = -e.dC_dt;
    e.g_t = e.dC_dt * e.B.cross(e.A);  // dr/dC = B x A, chained through dC/dt

    // Position blocks: dt/dp_i = I, dt/dp_j = -I.
    e.J_i.block<1, 3>(0, 0) = e.g_t.transpose();
    e.J_j.block<1, 3>(0, 0) = -e.g_t.transpose();
    // Orientation blocks use R [v]x = [R v]x R to fold the bearing and lever
    // arm chains into cross products with already-computed world vectors.
    e.J_i.block<1, 3>(0, 3) = (e.B.cross(e.g_B) + fi.rp.cross(e.g_t)).transpose() * fi.R;
    e.J_j.block<1, 3>(0, 3) = (e.A.cross(e.g_A) - fj.rp.cross(e.g_t)).transpose() * fj.R;
    return e;
}

EpipolarEval epipolar_residual(const KeyframeState& state_i, const KeyframeState& state_j,
                               const EpipolarFactor& factor, const Extrinsics& ext,
                               double min_baseline, bool flip_dcdt_sign) {
    const FrameCam fi = make_frame_cam(state_i, ext);
    const FrameCam fj = make_frame_cam(state_j, ext);
    return epipolar_eval(fi, fj, factor.z_i, factor.z_j, min_baseline, flip_dcdt_sign);
}

ReprojectionEval reprojection_residual(const KeyframeState& state, const Vector3d& landmark,
                                       const Eigen::Vector2d& u, const CameraIntrinsics& intr,
                                       const Extrinsics& ext, double min_depth) {
    ReprojectionEval e;
    const Matrix3d R = state.q.toRotationMatrix();
    const Matrix3d R_IC = ext.q.toRotationMatrix();

    const Vector3d w = R.transpose() * (landmark - state.p);  // feature in IMU frame
    const Vector3d pc = R_IC.transpose() * (w - ext.p);       // feature in camera frame
    e.depth = pc.z();
    if (e.depth <= min_depth) {
        e.behind = true;
        return e;
    }

    const double iz = 1.0 / pc.z();
    const Eigen::Vector2d n(pc.x() * iz, pc.y() * iz);
    const Eigen::Vector2d d = distort_normalized(n, intr);
    e.r = u - Eigen::Vector2d(intr.fx * d.x() + intr.cx, intr.fy * d.y() + intr.cy);

    Eigen::Matrix<double, 2, 3> dn_dpc;
    dn_dpc << iz, 0.0, -pc.x() * iz * iz, 0.0, iz, -pc.y() * iz * iz;
    const Eigen::Matrix2d dpix_dn =
        Eigen::Vector2d(intr.fx, intr.fy).asDiagonal() * distort_jacobian(n, intr);
    // r = u - pix, so the chain picks up a minus sign.
    const Eigen::Matrix<double, 2, 3> P = -dpix_dn * dn_dpc;

    const Matrix3d Rc_t = (R * R_IC).transpose();
    e.J_lm = P * Rc_t;
    e.J_pose.block<2, 3>(0, 0) = -P * Rc_t;
    e.J_pose.block<2, 3>(0, 3) = P * R_IC.transpose() * skew(w);
    return e;
}

std::vector<EpipolarFactor> build_epipolar_factors(std::span<const FeatureTrack> tracks,
                                                   Pairing pairing, double sigma) {
    std::vector<EpipolarFactor> out;
    for (const FeatureTrack& tr : tracks) {
        const size_t n = tr.obs.size();
        if (n < 2) continue;
        for (size_t a = 0; a + 1 < n; ++a) {
            const size_t b_end = (pairing == Pairing::kConsecutive) ? a + 2 : n;
            for (size_t b = a + 1; b < b_end; ++b) {
                EpipolarFactor f;
                f.kf_i = tr.obs[a].kf_index;
                f.kf_j = tr.obs[b].kf_index;
                f.z_i = tr.obs[a].bearing;
                f.z_j = tr.obs[b].bearing;
                f.sigma = sigma;
                out.push_back(f);
            }
        }
    }
    return out;
}

std::optional<Vector3d> triangulate_landmark(std::span<const Pose> cam_poses,
                                             std::span<const Vector3d> bearings,
                                             double min_depth) {
    if (cam_poses.size() < 2 || cam_poses.size() != bearings.size()) return std::nullopt;

    Matrix3d M = Matrix3d::Zero();
    Vector3d rhs = Vector3d::Zero();
    for (size_t i = 0; i < cam_poses.size(); ++i) {
        const Vector3d d = (cam_poses[i].q.toRotationMatrix() * bearings[i]).normalized();
        const Matrix3d P = Matrix3d::Identity() - d * d.transpose();
        M += P;
        rhs += P * cam_poses[i].p;
    }

    Eigen::FullPivLU<Matrix3d> lu(M);
    if (!lu.isInvertible()) return std::nullopt;
    const Vector3d p = lu.solve(rhs);
    if (!p.allFinite()) return std::nullopt;

    for (const Pose& cam : cam_poses) {
        const Vector3d pc = cam.q.conjugate() * (p - cam.p);
        if (pc.z() <= min_depth) return std::nullopt;
    }
    return p;
}

}  // namespace svba
