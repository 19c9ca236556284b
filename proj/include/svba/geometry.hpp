#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <optional>

namespace svba {

using Eigen::Matrix3d;
using Eigen::Quaterniond;
using Eigen::Vector2d;
using Eigen::Vector3d;

inline Matrix3d skew(const Vector3d& v) {
    Matrix3d m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return m;
}

// exp maps a tangent vector to a unit quaternion: exp(v) = [cos|v|, sin|v| v/|v|].
// Note the half-angle convention: a rotation by angle theta about axis n is
// exp(theta/2 * n). Below 1e-8 a second order Taylor form avoids sin(x)/x.
Quaterniond quat_exp(const Vector3d& v);

// Inverse of quat_exp. Sign is chosen so that w >= 0 (shortest geodesic),
// hence |log(q)| <= pi/2.
Vector3d quat_log(const Quaterniond& q);

// q boxplus delta = q * exp(delta/2). delta is a full-angle rotation vector.
Quaterniond quat_boxplus(const Quaterniond& q, const Vector3d& delta);

// q1 boxminus q2 = 2 log(q2^-1 * q1), the rotation vector taking q2 to q1.
Vector3d quat_boxminus(const Quaterniond& q1, const Quaterniond& q2);

// Rotation vector (full angle) to quaternion and back.
inline Quaterniond quat_from_rotvec(const Vector3d& phi) { return quat_exp(0.5 * phi); }
inline Vector3d quat_to_rotvec(const Quaterniond& q) { return 2.0 * quat_log(q); }

// Right Jacobian of SO(3) and its inverse, for a rotation vector phi:
// Exp(phi + d) ~ Exp(phi) Exp(Jr(phi) d).
Matrix3d so3_right_jacobian(const Vector3d& phi);
Matrix3d so3_right_jacobian_inv(const Vector3d& phi);

// Body-to-global rigid transform: rotation q maps body vectors into the
// parent frame, p is the body origin expressed in the parent frame.
struct Pose {
    Quaterniond q{Quaterniond::Identity()};
    Vector3d p{Vector3d::Zero()};

    static Pose Identity() { return Pose{}; }

    Vector3d transform(const Vector3d& x) const { return q * x + p; }

    Pose inverse() const {
        Pose inv;
        inv.q = q.conjugate();
        inv.p = -(inv.q * p);
        return inv;
    }

    // this * other: other expressed in this pose's parent frame.
    Pose compose(const Pose& other) const {
        Pose out;
        out.q = (q * other.q).normalized();
        out.p = q * other.p + p;
        return out;
    }
};

inline Vector3d transform_point(const Pose& pose, const Vector3d& x) { return pose.transform(x); }

// Pinhole camera with radial-tangential (k1, k2, p1, p2) distortion.
struct CameraIntrinsics {
    double fx{458.654};
    double fy{457.296};
    double cx{367.215};
    double cy{248.375};
    double k1{0.0};
    double k2{0.0};
    double p1{0.0};
    double p2{0.0};
    int width{752};
    int height{480};

    double mean_focal() const { return 0.5 * (fx + fy); }
    bool in_image(const Vector2d& uv) const {
        return uv.x() >= 0.0 && uv.x() < width && uv.y() >= 0.0 && uv.y() < height;
    }
};

// Distorted normalized coordinates for an ideal normalized point n = (x, y).
Vector2d distort_normalized(const Vector2d& n, const CameraIntrinsics& intr);

// 2x2 Jacobian of distort_normalized w.r.t. n.
Eigen::Matrix2d distort_jacobian(const Vector2d& n, const CameraIntrinsics& intr);

// Full projection: normalized point with unit depth -> pixel.
Vector2d project_to_pixel(const Vector2d& n, const CameraIntrinsics& intr);

// Gauss-Newton inversion of the distortion model. Returns the ideal
// normalized point, or nullopt if 20 iterations do not converge.
std::optional<Vector2d> undistort_pixel(const Vector2d& uv, const CameraIntrinsics& intr);

// Pixel -> bearing [x_n, y_n, 1]. nullopt when undistortion fails.
std::optional<Vector3d> back_project(const Vector2d& uv, const CameraIntrinsics& intr);

// Camera-to-IMU extrinsics: rotation maps camera vectors into the IMU frame,
// translation is the camera origin in the IMU frame. Held fixed in all solves.
struct Extrinsics {
    Quaterniond q{Quaterniond::Identity()};
    Vector3d p{Vector3d::Zero()};
};

// Chains the fixed extrinsics onto an IMU pose to get the camera pose.
Pose imu_pose_to_camera_pose(const Pose& imu, const Extrinsics& ext);

// Gravity in the gravity-aligned global frame: the direction is -z by
// construction, only the magnitude is configurable.
struct GravityVector {
    double magnitude{9.81};
    Vector3d vec() const { return Vector3d(0.0, 0.0, -magnitude); }
};

}  // namespace svba
