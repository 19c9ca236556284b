#include "svba/pipeline.hpp"

#include <algorithm>
#include <stdexcept>

#include "svba/evaluation.hpp"

namespace svba {
namespace {

ImuSample lerp_sample(const ImuSample& a, const ImuSample& b, int64_t t_ns) {
    const double u = static_cast<double>(t_ns - a.t_ns) / static_cast<double>(b.t_ns - a.t_ns);
    ImuSample s;
    s.t_ns = t_ns;
    s.gyro = (1.0 - u) * a.gyro + u * b.gyro;
    s.accel = (1.0 - u) * a.accel + u * b.accel;
    return s;
}

// Samples covering [t0, t1], with synthetic boundary samples interpolated at
// exactly t0 / t1 when the stream has no sample there.
std::vector<ImuSample> slice_imu(const std::vector<ImuSample>& imu, int64_t t0, int64_t t1) {
    auto lo = std::lower_bound(imu.begin(), imu.end(), t0,
                               [](const ImuSample& s, int64_t t) { return s.t_ns < t; });
    auto hi = std::upper_bound(imu.begin(), imu.end(), t1,
                               [](int64_t t, const ImuSample& s) { return t < s.t_ns; });
    std::vector<ImuSample> out;
    if (lo != imu.begin() && (lo == imu.end() || lo->t_ns > t0))
        out.push_back(lerp_sample(*(lo - 1), *lo, t0));
    out.insert(out.end(), lo, hi);
    if (hi != imu.end() && (out.empty() || out.back().t_ns < t1))
        out.push_back(lerp_sample(*(hi - 1), *hi, t1));
    if (out.size() < 2)
        throw std::runtime_error("make_window_problem: fewer than 2 IMU samples between keyframes " +
                                 std::to_string(t0) + " and " + std::to_string(t1) + " ns");
    return out;
}

}  // namespace

InitializationProblem make_window_problem(const DatasetBundle& bundle, int start_kf, int window,
                                          std::span<const KeyframeState> init_states,
                                          SolveMode mode, const BuildConfig& config) {
    const int n_kf = static_cast<int>(bundle.keyframe_times_ns.size());
    if (window < 3) throw std::invalid_argument("make_window_problem: window must be >= 3");
    if (start_kf < 0 || start_kf + window > n_kf)
        throw std::invalid_argument("make_window_problem: window out of range");
    if (static_cast<int>(init_states.size()) != n_kf)
        throw std::invalid_argument(
            "make_window_problem: initial states must cover every keyframe");

    std::vector<KeyframeState> states(init_states.begin() + start_kf,
                                      init_states.begin() + start_kf + window);
    for (int k = 0; k < window; ++k) states[k].t_ns = bundle.keyframe_times_ns[start_kf + k];

    std::vector<PreintegratedImu> preints;
    preints.reserve(window - 1);
    for (int k = 0; k + 1 < window; ++k) {
        const int64_t t0 = bundle.keyframe_times_ns[start_kf + k];
        const int64_t t1 = bundle.keyframe_times_ns[start_kf + k + 1];
        std::vector<ImuSample> seg = slice_imu(bundle.imu, t0, t1);
        preints.push_back(preintegrate(seg, states[k].ba, states[k].bg, bundle.calib.noise));
    }

    std::vector<FeatureTrack> tracks;
    for (const FeatureTrack& track : bundle.tracks) {
        FeatureTrack cut;
        cut.feature_id = track.feature_id;
        for (const TrackObservation& obs : track.obs) {
            if (obs.kf_index < start_kf || obs.kf_index >= start_kf + window) continue;
            TrackObservation o = obs;
            o.kf_index -= start_kf;
            cut.obs.push_back(o);
        }
        if (cut.obs.size() >= 2) tracks.push_back(std::move(cut));
    }

    if (mode == SolveMode::kStructureBased)
        return build_structure_based(std::move(states), std::move(preints), tracks, bundle.calib,
                                     config);
    return build_structureless(std::move(states), std::move(preints), tracks, bundle.calib, config);
}

BenchResult run_bench(const DatasetBundle& bundle, int window, SolveMode mode,
                      const BuildConfig& config) {
    if (!bundle.has_groundtruth())
        throw std::invalid_argument("run_bench: bundle has no ground truth");
    if (!bundle.has_initial())
        throw std::invalid_argument("run_bench: bundle has no initial states");
    const int n_kf = static_cast<int>(bundle.keyframe_times_ns.size());
    if (window > n_kf) throw std::invalid_argument("run_bench: window larger than the bundle");

    BenchResult out;
    for (int start = 0; start + window <= n_kf; ++start) {
        InitializationProblem problem =
            make_window_problem(bundle, start, window, bundle.initial, mode, config);
        SolveResult solved = solve(problem);

        std::span<const KeyframeState> truth(bundle.groundtruth.data() + start,
                                             static_cast<size_t>(window));
        TrajectoryMetrics m = evaluate_trajectory(solved.states, truth);

        BenchRow row;
        row.window_index = start;
        row.t_start_ns = bundle.keyframe_times_ns[start];
        row.ate_pos_m = m.ate_pos_m;
        row.ate_rot_deg = m.ate_rot_deg;
        row.vel_rmse_mps = m.vel_rmse_mps;
        row.solve_ms = solved.report.solve_ms;
        out.rows.push_back(row);
    }

    out.avg.window_index = -1;
    for (const BenchRow& row : out.rows) {
        out.avg.ate_pos_m += row.ate_pos_m;
        out.avg.ate_rot_deg += row.ate_rot_deg;
        out.avg.vel_rmse_mps += row.vel_rmse_mps;
        out.avg.solve_ms += row.solve_ms;
    }
    const double n = static_cast<double>(out.rows.size());
    if (!out.rows.empty()) {
        out.avg.ate_pos_m /= n;
        out.avg.ate_rot_deg /= n;
        out.avg.vel_rmse_mps /= n;
        out.avg.solve_ms /= n;
    }
    return out;
}

}  // namespace svba
