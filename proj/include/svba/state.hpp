#pragma once

#include "svba/geometry.hpp"

#include <cstdint>

namespace svba {

// Error-state layout of one keyframe: [dp, dv, dtheta, dba, dbg], 15 dims.
// Orientation updates are right multiplicative (body-frame boxplus).
constexpr int kStateDim = 15;
constexpr int kIdxP = 0;
constexpr int kIdxV = 3;
constexpr int kIdxTheta = 6;
constexpr int kIdxBa = 9;
constexpr int kIdxBg = 12;

// One keyframe's IMU state in the gravity-aligned global frame.
struct KeyframeState {
    int64_t t_ns{0};
    Vector3d p{Vector3d::Zero()};
    Vector3d v{Vector3d::Zero()};
    Quaterniond q{Quaterniond::Identity()};
    Vector3d ba{Vector3d::Zero()};
    Vector3d bg{Vector3d::Zero()};

    Pose pose() const { return Pose{q, p}; }
};

using Vector15 = Eigen::Matrix<double, 15, 1>;
using Matrix15 = Eigen::Matrix<double, 15, 15>;

inline KeyframeState state_boxplus(const KeyframeState& s, const Vector15& d) {
    KeyframeState out = s;
    out.p += d.segment<3>(kIdxP);
    out.v += d.segment<3>(kIdxV);
    out.q = quat_boxplus(s.q, d.segment<3>(kIdxTheta));
    out.ba += d.segment<3>(kIdxBa);
    out.bg += d.segment<3>(kIdxBg);
    return out;
}

inline Vector15 state_boxminus(const KeyframeState& a, const KeyframeState& b) {
    Vector15 d;
    d.segment<3>(kIdxP) = a.p - b.p;
    d.segment<3>(kIdxV) = a.v - b.v;
    d.segment<3>(kIdxTheta) = quat_boxminus(a.q, b.q);
    d.segment<3>(kIdxBa) = a.ba - b.ba;
    d.segment<3>(kIdxBg) = a.bg - b.bg;
    return d;
}

}  // namespace svba
