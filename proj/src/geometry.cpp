#include "svba/geometry.hpp"

#include <cmath>

namespace svba {

namespace {
constexpr double kSmallAngle = 1e-8;
}

Quaterniond quat_exp(const Vector3d& v) {
    const double theta = v.norm();
    double w, s;
    if (theta < kSmallAngle) {
        w = 1.0 - 0.5 * theta * theta;
        s = 1.0 - theta * theta / 6.0;
    } else {
        w = std::cos(theta);
        s = std::sin(theta) / theta;
    }
    Quaterniond q(w, s * v.x(), s * v.y(), s * v.z());
    q.normalize();
    return q;
}

Vector3d quat_log(const Quaterniond& q_in) {
    Quaterniond q = q_in.normalized();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Vector3d vec(q.x(), q.y(), q.z());
    const double sin_theta = vec.norm();
    if (sin_theta < kSmallAngle) {
        // theta/sin(theta) ~ 1 + theta^2/6
        return vec * (1.0 + sin_theta * sin_theta / 6.0);
    }
    const double theta = std::atan2(sin_theta, q.w());
    return vec * (theta / sin_theta);
}

Quaterniond quat_boxplus(const Quaterniond& q, const Vector3d& delta) {
    return (q * quat_exp(0.5 * delta)).normalized();
}

Vector3d quat_boxminus(const Quaterniond& q1, const Quaterniond& q2) {
    return 2.0 * quat_log(q2.conjugate() * q1);
}

Matrix3d so3_right_jacobian(const Vector3d& phi) {
    const double theta = phi.norm();
    const Matrix3d W = skew(phi);
    if (theta < 1e-5) {
        return Matrix3d::Identity() - 0.5 * W + (1.0 / 6.0) * W * W;
    }
    const double t2 = theta * theta;
    return Matrix3d::Identity() - (1.0 - std::cos(theta)) / t2 * W +
           (theta - std::sin(theta)) / (t2 * theta) * W * W;
}

Matrix3d so3_right_jacobian_inv(const Vector3d& phi) {
    const double theta = phi.norm();
    const Matrix3d W = skew(phi);
    if (theta < 1e-5) {
        return Matrix3d::Identity() + 0.5 * W + (1.0 / 12.0) * W * W;
    }
    const double t2 = theta * theta;
    const double c = 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
    return Matrix3d::Identity() + 0.5 * W + c * W * W;
}

Vector2d distort_normalized(const Vector2d& n, const CameraIntrinsics& intr) {
    const double x = n.x(), y = n.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2;
    Vector2d d;
    d.x() = x * radial + 2.0 * intr.p1 * x * y + intr.p2 * (r2 + 2.0 * x * x);
    d.y() = y * radial + intr.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.p2 * x * y;
    return d;
}

Eigen::Matrix2d distort_jacobian(const Vector2d& n, const CameraIntrinsics& intr) {
    const double x = n.x(), y = n.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2;
    const double dr = intr.k1 + 2.0 * intr.k2 * r2;  // d(radial)/d(r2)
    Eigen::Matrix2d J;
    J(0, 0) = radial + 2.0 * x * x * dr + 2.0 * intr.p1 * y + 6.0 * intr.p2 * x;
    J(0, 1) = 2.0 * x * y * dr + 2.0 * intr.p1 * x + 2.0 * intr.p2 * y;
    J(1, 0) = J(0, 1);
    J(1, 1) = radial + 2.0 * y * y * dr + 6.0 * intr.p1 * y + 2.0 * intr.p2 * x;
    return J;
}

Vector2d project_to_pixel(const Vector2d& n, const CameraIntrinsics& intr) {
    const Vector2d d = distort_normalized(n, intr);
    return Vector2d(intr.fx * d.x() + intr.cx, intr.fy * d.y() + intr.cy);
}

std::optional<Vector2d> undistort_pixel(const Vector2d& uv, const CameraIntrinsics& intr) {
    const Vector2d target((uv.x() - intr.cx) / intr.fx, (uv.y() - intr.cy) / intr.fy);
    Vector2d n = target;
    for (int it = 0; it < 20; ++it) {
        const Vector2d err = distort_normalized(n, intr) - target;
        if (err.norm() < 1e-12) return n;
        const Eigen::Matrix2d J = distort_jacobian(n, intr);
        const double det = J.determinant();
        if (std::abs(det) < 1e-12 || !std::isfinite(det)) return std::nullopt;
        n -= J.inverse() * err;
        if (!n.allFinite()) return std::nullopt;
    }
    if ((distort_normalized(n, intr) - target).norm() < 1e-10) return n;
    return std::nullopt;
}

std::optional<Vector3d> back_project(const Vector2d& uv, const CameraIntrinsics& intr) {
    const auto n = undistort_pixel(uv, intr);
    if (!n) return std::nullopt;
    return Vector3d(n->x(), n->y(), 1.0);
}

Pose imu_pose_to_camera_pose(const Pose& imu, const Extrinsics& ext) {
    Pose cam;
    cam.q = (imu.q * ext.q).normalized();
    cam.p = imu.p + imu.q * ext.p;
    return cam;
}

}  // namespace svba
