// Micro-benchmark: serial reference linearizer vs the OpenMP kernel, and the
// structureless vs structure-based solve on identical inputs.
#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "svba/linearizer.hpp"
#include "svba/pipeline.hpp"
#include "svba/simulation.hpp"
#include "svba/solver.hpp"

using namespace svba;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double time_linearize(const InitializationProblem& p, bool parallel, int reps) {
    linearize_problem(p, p.states, p.landmarks, parallel);  // warmup
    const auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) linearize_problem(p, p.states, p.landmarks, parallel);
    return ms_since(t0) / reps;
}

double time_solve(const InitializationProblem& p, int reps) {
    double total = 0.0;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = Clock::now();
        solve(p);
        total += ms_since(t0);
    }
    return total / reps;
}

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 50;

    SimOptions o;
    o.scene.landmark_count = 50;  // 10 keyframes, 50 tracks
    o.pixel_sigma_px = 0.5;
    o.imu_noise = true;
    o.seed = 33;
    SimulatedDataset ds = simulate_dataset(o);
    BuildConfig cfg;
    const int n = static_cast<int>(ds.bundle.keyframe_times_ns.size());

    InitializationProblem sl =
        make_window_problem(ds.bundle, 0, n, ds.bundle.initial, SolveMode::kStructureless, cfg);
    InitializationProblem sb =
        make_window_problem(ds.bundle, 0, n, ds.bundle.initial, SolveMode::kStructureBased, cfg);

    std::printf("problem: %d keyframes, %zu epipolar factors, %zu reprojection factors, "
                "%zu landmarks\n",
                sl.num_keyframes(), sl.epi_factors.size(), sb.reproj_factors.size(),
                sb.landmarks.size());
#ifdef _OPENMP
    std::printf("openmp: max %d thread(s)\n\n", omp_get_max_threads());
#else
    std::printf("openmp: not available, parallel kernel runs serially\n\n");
#endif

    std::printf("%-38s %10s\n", "linearization kernel", "ms/call");
    const double serial_sl = time_linearize(sl, false, reps);
    const double par_sl = time_linearize(sl, true, reps);
    std::printf("%-38s %10.3f\n", "structureless serial reference", serial_sl);
    std::printf("%-38s %10.3f  (speedup %.2fx)\n", "structureless openmp", par_sl,
                serial_sl / par_sl);
    const double serial_sb = time_linearize(sb, false, reps);
    const double par_sb = time_linearize(sb, true, reps);
    std::printf("%-38s %10.3f\n", "structure-based serial reference", serial_sb);
    std::printf("%-38s %10.3f  (speedup %.2fx)\n\n", "structure-based openmp", par_sb,
                serial_sb / par_sb);

    const int solve_reps = std::max(1, reps / 10);
    std::printf("%-38s %10s\n", "full solve", "ms/call");
    std::printf("%-38s %10.2f\n", "structureless", time_solve(sl, solve_reps));
    std::printf("%-38s %10.2f\n", "structure-based", time_solve(sb, solve_reps));
    return 0;
}
