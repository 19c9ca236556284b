#pragma once

#include <vector>

#include "svba/dataio.hpp"
#include "svba/problem.hpp"
#include "svba/solver.hpp"

namespace svba {

enum class SolveMode { kStructureless, kStructureBased };

// Assembles the refinement problem for keyframes [start_kf, start_kf +
// window) of a bundle: slices the initial states, preintegrates the IMU
// stream between consecutive keyframes (linearized at each segment's initial
// bias estimate, boundary samples interpolated onto the keyframe instants
// when the grids do not line up), and remaps the feature tracks into window
// indices. init_states must cover the whole bundle.
InitializationProblem make_window_problem(const DatasetBundle& bundle, int start_kf, int window,
                                          std::span<const KeyframeState> init_states,
                                          SolveMode mode, const BuildConfig& config);

struct BenchRow {
    int window_index = 0;
    int64_t t_start_ns = 0;
    double ate_pos_m = 0.0;
    double ate_rot_deg = 0.0;
    double vel_rmse_mps = 0.0;
    double solve_ms = 0.0;
};

struct BenchResult {
    std::vector<BenchRow> rows;
    BenchRow avg;  // window_index = -1, t_start_ns = 0, metric fields averaged
};

// Slides a fixed-size window one keyframe at a time over the bundle (a
// 30-keyframe bundle with window 10 gives 21 positions), solves each window
// from the bundle's initial states, and scores it against ground truth after
// yaw + translation alignment. Requires ground truth and initial states.
BenchResult run_bench(const DatasetBundle& bundle, int window, SolveMode mode,
                      const BuildConfig& config);

}  // namespace svba
