#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "svba/problem.hpp"

namespace svba {

// Whitened, robust-weighted Gauss-Newton system of the full problem at a
// given iterate. `g` accumulates J^T r of the whitened residuals (half the
// gradient of the squared-norm objective). The active masks record which
// visual factors passed their degeneracy gates at this linearization.
struct LinearizedSystem {
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    double cost = 0.0;
    std::vector<uint8_t> epi_active;
    std::vector<uint8_t> reproj_active;
};

// Visual-factor linearization kernels. Both accumulate into a caller-provided
// zero-initialized H/g of the full problem dimension and return the visual
// cost. The serial kernel is the reference implementation; the parallel
// kernel partitions factors into contiguous per-thread chunks (OpenMP static
// schedule) with thread-local accumulators reduced in thread-index order, so
// a one-thread run reproduces the serial result bitwise and a multi-thread
// run differs only by floating-point regrouping.
double linearize_visual_serial(const InitializationProblem& p,
                               std::span<const KeyframeState> states,
                               std::span<const Landmark> landmarks, Eigen::MatrixXd& H,
                               Eigen::VectorXd& g, std::vector<uint8_t>& epi_active,
                               std::vector<uint8_t>& reproj_active);

double linearize_visual_parallel(const InitializationProblem& p,
                                 std::span<const KeyframeState> states,
                                 std::span<const Landmark> landmarks, Eigen::MatrixXd& H,
                                 Eigen::VectorXd& g, std::vector<uint8_t>& epi_active,
                                 std::vector<uint8_t>& reproj_active);

// IMU-factor linearization (always serial; there are only N factors).
double linearize_imu(const InitializationProblem& p, std::span<const KeyframeState> states,
                     Eigen::MatrixXd& H, Eigen::VectorXd& g);

// Full linearization: IMU part plus the selected visual kernel.
LinearizedSystem linearize_problem(const InitializationProblem& p,
                                   std::span<const KeyframeState> states,
                                   std::span<const Landmark> landmarks, bool parallel);

// Robustified whitened objective at the given iterate, gating degenerate
// factors exactly as linearize_problem would.
double evaluate_problem_cost(const InitializationProblem& p,
                             std::span<const KeyframeState> states,
                             std::span<const Landmark> landmarks);

// Same objective but with the visual active set frozen to the given masks
// (used to compare a candidate step against the cost of the linearization
// point under one consistent active set).
double evaluate_problem_cost_masked(const InitializationProblem& p,
                                    std::span<const KeyframeState> states,
                                    std::span<const Landmark> landmarks,
                                    const std::vector<uint8_t>& epi_active,
                                    const std::vector<uint8_t>& reproj_active);

}  // namespace svba
