#pragma once

#include <filesystem>
#include <vector>

#include "svba/calibration.hpp"
#include "svba/factors.hpp"
#include "svba/preintegration.hpp"
#include "svba/solver.hpp"
#include "svba/state.hpp"

namespace svba {

// One dataset directory in memory. groundtruth / initial are optional on
// disk; absent files load as empty vectors.
struct DatasetBundle {
    std::vector<ImuSample> imu;
    std::vector<int64_t> keyframe_times_ns;
    std::vector<FeatureTrack> tracks;  // observations indexed into keyframe_times_ns
    Calibration calib;
    std::vector<KeyframeState> groundtruth;
    std::vector<KeyframeState> initial;

    bool has_groundtruth() const { return !groundtruth.empty(); }
    bool has_initial() const { return !initial.empty(); }
};

// Directory layout (CSV-style, '#' comment lines ignored, LF endings):
//   imu.csv        timestamp_ns, wx, wy, wz, ax, ay, az
//   keyframes.csv  timestamp_ns
//   tracks.csv     feature_id, keyframe_timestamp_ns, u_px, v_px
//   calib.txt      key = value
//   groundtruth.csv / initial.csv (optional)
//                  timestamp_ns, px, py, pz, qw, qx, qy, qz, vx, vy, vz,
//                  bax, bay, baz, bgx, bgy, bgz
// Validation failures throw std::runtime_error naming the file and line.
DatasetBundle load_bundle(const std::filesystem::path& dir);
void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);

std::vector<KeyframeState> load_states_csv(const std::filesystem::path& path);
void save_states_csv(std::span<const KeyframeState> states, const std::filesystem::path& path);

Calibration load_calibration(const std::filesystem::path& path);
void save_calibration(const Calibration& calib, const std::filesystem::path& path);

std::vector<ImuSample> load_imu_csv(const std::filesystem::path& path);

// Writes trajectory.tum ("t_s tx ty tz qx qy qz qw"), states.csv (full
// states, same format as initial.csv), and report.json (costs, iterations,
// termination, wall time, cost trace). Empty input is rejected.
void save_results(std::span<const KeyframeState> states, const SolveReport& report,
                  const std::filesystem::path& dir);

}  // namespace svba
