#pragma once

#include "svba/geometry.hpp"
#include "svba/preintegration.hpp"

namespace svba {

// Fixed sensor parameters shared by simulation, I/O, and solving. Nothing in
// here is ever optimized.
struct Calibration {
    CameraIntrinsics intrinsics;
    Extrinsics extrinsics;
    GravityVector gravity;
    ImuNoiseModel noise;
};

// Forward-looking camera on a body whose x axis points along the direction of
// travel: camera z (optical axis) = body x, camera x (right) = body -y,
// camera y (down) = body -z, with a small lever arm.
Extrinsics default_forward_extrinsics();

// EuRoC-class pinhole intrinsics with distortion disabled; the simulator's
// default camera.
CameraIntrinsics default_sim_intrinsics();

Calibration default_sim_calibration();

}  // namespace svba
