#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "svba/linearizer.hpp"
#include "svba/pipeline.hpp"
#include "svba/simulation.hpp"

using namespace svba;

namespace {

InitializationProblem make_problem(SolveMode mode) {
    SimOptions o;
    o.scene.landmark_count = 80;
    o.pixel_sigma_px = 0.5;
    o.imu_noise = true;
    o.seed = 77;
    SimulatedDataset ds = simulate_dataset(o);
    BuildConfig cfg;
    const int n = static_cast<int>(ds.bundle.keyframe_times_ns.size());
    return make_window_problem(ds.bundle, 0, n, ds.bundle.initial, mode, cfg);
}

struct Kernels {
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    double cost;
    std::vector<uint8_t> epi, reproj;
};

Kernels run(const InitializationProblem& p, bool parallel) {
    Kernels k;
    k.H = Eigen::MatrixXd::Zero(p.dim(), p.dim());
    k.g = Eigen::VectorXd::Zero(p.dim());
    if (parallel)
        k.cost = linearize_visual_parallel(p, p.states, p.landmarks, k.H, k.g, k.epi, k.reproj);
    else
        k.cost = linearize_visual_serial(p, p.states, p.landmarks, k.H, k.g, k.epi, k.reproj);
    return k;
}

}  // namespace

TEST_CASE("one-thread parallel kernel reproduces the serial kernel bitwise") {
    for (SolveMode mode : {SolveMode::kStructureless, SolveMode::kStructureBased}) {
        InitializationProblem p = make_problem(mode);
        Kernels serial = run(p, false);
#ifdef _OPENMP
        omp_set_num_threads(1);
#endif
        Kernels par1 = run(p, true);
        CHECK(serial.cost == par1.cost);
        CHECK((serial.H - par1.H).cwiseAbs().maxCoeff() == 0.0);
        CHECK((serial.g - par1.g).cwiseAbs().maxCoeff() == 0.0);
        CHECK(serial.epi == par1.epi);
        CHECK(serial.reproj == par1.reproj);
    }
}

#ifdef _OPENMP
TEST_CASE("multi-thread runs agree with serial to floating-point regrouping") {
    for (SolveMode mode : {SolveMode::kStructureless, SolveMode::kStructureBased}) {
        InitializationProblem p = make_problem(mode);
        Kernels serial = run(p, false);
        const double h_scale = std::max(1.0, serial.H.cwiseAbs().maxCoeff());
        const double g_scale = std::max(1.0, serial.g.cwiseAbs().maxCoeff());
        for (int threads : {2, 4}) {
            omp_set_num_threads(threads);
            Kernels par = run(p, true);
            CHECK(std::abs(par.cost - serial.cost) / std::max(1.0, serial.cost) < 1e-12);
            CHECK((par.H - serial.H).cwiseAbs().maxCoeff() / h_scale < 1e-12);
            CHECK((par.g - serial.g).cwiseAbs().maxCoeff() / g_scale < 1e-12);
            CHECK(par.epi == serial.epi);
        }
    }
}

TEST_CASE("repeated runs at a fixed thread count are bitwise identical") {
    InitializationProblem p = make_problem(SolveMode::kStructureless);
    omp_set_num_threads(4);
    Kernels a = run(p, true);
    Kernels b = run(p, true);
    CHECK(a.cost == b.cost);
    CHECK((a.H - b.H).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.g - b.g).cwiseAbs().maxCoeff() == 0.0);
}
#endif

TEST_CASE("solver works with either linearizer backend") {
    SimOptions o;
    o.seed = 79;
    SimulatedDataset ds = simulate_dataset(o);
    BuildConfig cfg;
    const int n = static_cast<int>(ds.bundle.keyframe_times_ns.size());
#ifdef _OPENMP
    omp_set_num_threads(1);
#endif
    cfg.settings.parallel_linearizer = false;
    InitializationProblem ps =
        make_window_problem(ds.bundle, 0, n, ds.bundle.initial, SolveMode::kStructureless, cfg);
    SolveResult rs = solve(ps);
    cfg.settings.parallel_linearizer = true;
    InitializationProblem pp =
        make_window_problem(ds.bundle, 0, n, ds.bundle.initial, SolveMode::kStructureless, cfg);
    SolveResult rp = solve(pp);

    // with one thread the two backends are bitwise identical, so the whole
    // solve path must agree exactly
    REQUIRE(rs.states.size() == rp.states.size());
    CHECK(rs.report.iterations == rp.report.iterations);
    CHECK(rs.report.final_cost == rp.report.final_cost);
    for (size_t k = 0; k < rs.states.size(); ++k)
        CHECK((rs.states[k].p - rp.states[k].p).norm() == 0.0);
}
