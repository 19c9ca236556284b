#include "svba/calibration.hpp"

namespace svba {

Extrinsics default_forward_extrinsics() {
    Matrix3d R_IC;
    // Columns are the camera axes expressed in the body frame.
    R_IC.col(0) = Vector3d(0, -1, 0);
    R_IC.col(1) = Vector3d(0, 0, -1);
    R_IC.col(2) = Vector3d(1, 0, 0);
    Extrinsics ext;
    ext.q = Quaterniond(R_IC).normalized();
    ext.p = Vector3d(0.05, 0.02, -0.01);
    return ext;
}

CameraIntrinsics default_sim_intrinsics() {
    CameraIntrinsics intr;
    intr.fx = 458.654;
    intr.fy = 457.296;
    intr.cx = 367.215;
    intr.cy = 248.375;
    intr.k1 = intr.k2 = intr.p1 = intr.p2 = 0.0;
    intr.width = 752;
    intr.height = 480;
    return intr;
}

Calibration default_sim_calibration() {
    Calibration c;
    c.intrinsics = default_sim_intrinsics();
    c.extrinsics = default_forward_extrinsics();
    c.gravity = GravityVector{};
    c.noise = ImuNoiseModel{};
    return c;
}

}  // namespace svba
