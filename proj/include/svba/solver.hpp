#pragma once

#include <span>
#include <string>
#include <vector>

#include "svba/linearizer.hpp"
#include "svba/problem.hpp"

namespace svba {

struct SolveReport {
    int iterations = 0;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    std::vector<double> cost_trace;  // initial cost, then each accepted step
    std::string termination;  // cost_decrease | gradient | cost_floor | max_iterations |
                              // numerical_failure
    double solve_ms = 0.0;
};

struct SolveResult {
    std::vector<KeyframeState> states;
    std::vector<Landmark> landmarks;  // structure-based only
    SolveReport report;
};

// Levenberg-Marquardt on the product manifold of keyframe error states (and
// landmarks). The 4-DoF gauge (first-keyframe position and yaw) is removed
// from the linear system by basis projection, and after every accepted step
// the whole scene is rigidly re-anchored so the first keyframe's position and
// yaw stay exactly at their initial values.
SolveResult solve(const InitializationProblem& problem);

// ZYX yaw of a body-to-global orientation.
double yaw_of(const Quaterniond& q);
Quaterniond yaw_quat(double yaw);

// In-place global gauge transform: p <- R p + t, q <- R q, v <- R v with
// R = yaw_quat(yaw). Biases are body-frame quantities and stay untouched.
void apply_global_yaw_translation(std::span<KeyframeState> states, double yaw,
                                  const Vector3d& t);
void apply_global_yaw_translation(std::span<Landmark> landmarks, double yaw, const Vector3d& t);

}  // namespace svba
