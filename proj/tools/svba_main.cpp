// Batch front end: dataset simulation, window refinement, metric evaluation,
// sliding-window benchmarking, and a finite-difference self check.
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "svba/dataio.hpp"
#include "svba/evaluation.hpp"
#include "svba/pipeline.hpp"
#include "svba/simulation.hpp"
#include "svba/solver.hpp"

namespace {

using namespace svba;

// Exit codes: 0 success, 1 validation/usage failure, 2 numerical failure.
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimulateArgs {
    std::string out;
    std::string traj = "sinusoid";
    int keyframes = 10;
    uint64_t seed = 1;
    double amplitude = 1.0;
    double rate = 1.0;
    double imu_rate = 200.0;
    double kf_rate = 2.0;
    int landmarks = 120;
    double pixel_sigma_px = 0.0;
    bool imu_noise = false;
    double perturb_pos = 0.05;
    double perturb_rot_deg = 2.0;
    double perturb_vel = 0.1;
    double perturb_ba = 0.01;
    double perturb_bg = 0.001;
};

TrajectorySpec::Family family_from_name(const std::string& name) {
    if (name == "circle") return TrajectorySpec::Family::kCircle;
    if (name == "figure8") return TrajectorySpec::Family::kFigureEight;
    return TrajectorySpec::Family::kSinusoid3d;
}

void cmd_simulate(const SimulateArgs& a) {
    if (a.keyframes < 2) throw std::invalid_argument("simulate: --keyframes must be >= 2");

    SimOptions opts;
    opts.traj.family = family_from_name(a.traj);
    opts.traj.amplitude = a.amplitude;
    opts.traj.angular_rate = a.rate;
    opts.traj.imu_rate_hz = a.imu_rate;
    opts.traj.keyframe_rate_hz = a.kf_rate;
    const int64_t imu_dt_ns = std::llround(1e9 / a.imu_rate);
    const int64_t kf_dt_ns = imu_dt_ns * std::llround(a.imu_rate / a.kf_rate);
    opts.traj.duration = static_cast<double>((a.keyframes - 1) * kf_dt_ns) * 1e-9;
    if (!opts.traj.valid())
        throw std::invalid_argument("simulate: IMU rate must be at least 10x the keyframe rate");

    opts.scene.landmark_count = a.landmarks;
    opts.pixel_sigma_px = a.pixel_sigma_px;
    opts.imu_noise = a.imu_noise;
    opts.seed = a.seed;
    opts.perturb.pos_sigma = a.perturb_pos;
    opts.perturb.rot_sigma = a.perturb_rot_deg * M_PI / 180.0;
    opts.perturb.vel_sigma = a.perturb_vel;
    opts.perturb.ba_sigma = a.perturb_ba;
    opts.perturb.bg_sigma = a.perturb_bg;

    SimulatedDataset ds = simulate_dataset(opts);
    save_bundle(ds.bundle, a.out);
    std::printf("wrote %s: %d keyframes, %zu IMU samples, %zu tracks\n", a.out.c_str(),
                static_cast<int>(ds.bundle.keyframe_times_ns.size()), ds.bundle.imu.size(),
                ds.bundle.tracks.size());
}

struct RefineArgs {
    std::string in;
    std::string out;
    std::string mode = "structureless";
    std::string pairing = "all";
    double epipolar_sigma = -1.0;
    double pixel_sigma = 1.0;
    double huber_delta = 1.345;
    int max_iters = 50;
    int window = 0;  // 0: all keyframes
    int window_start = 0;
    bool init_from_gt_perturbed = false;
    double perturb_pos = 0.05;
    double perturb_rot_deg = 2.0;
    double perturb_vel = 0.1;
    double perturb_ba = 0.01;
    double perturb_bg = 0.001;
    uint64_t seed = 1;
    bool serial = false;
};

BuildConfig config_from(const RefineArgs& a) {
    BuildConfig cfg;
    cfg.pairing = a.pairing == "consecutive" ? Pairing::kConsecutive : Pairing::kAllPairs;
    cfg.epipolar_sigma = a.epipolar_sigma;
    cfg.pixel_sigma = a.pixel_sigma;
    if (a.huber_delta > 0.0) {
        cfg.loss.kind = RobustLoss::Kind::kHuber;
        cfg.loss.delta = a.huber_delta;
    } else {
        cfg.loss.kind = RobustLoss::Kind::kNone;
    }
    cfg.settings.max_iterations = a.max_iters;
    cfg.settings.parallel_linearizer = !a.serial;
    return cfg;
}

std::vector<KeyframeState> initial_states_for(const DatasetBundle& bundle, const RefineArgs& a) {
    if (bundle.has_initial() && !a.init_from_gt_perturbed) return bundle.initial;
    if (!a.init_from_gt_perturbed)
        throw std::invalid_argument(
            "refine: bundle has no initial.csv; pass --init-from-groundtruth-perturbed to "
            "derive one");
    if (!bundle.has_groundtruth())
        throw std::invalid_argument(
            "refine: --init-from-groundtruth-perturbed needs groundtruth.csv");
    PerturbationSpec spec;
    spec.pos_sigma = a.perturb_pos;
    spec.rot_sigma = a.perturb_rot_deg * M_PI / 180.0;
    spec.vel_sigma = a.perturb_vel;
    spec.ba_sigma = a.perturb_ba;
    spec.bg_sigma = a.perturb_bg;
    spec.seed = a.seed;
    return perturb_states(bundle.groundtruth, spec);
}

void cmd_refine(const RefineArgs& a) {
    DatasetBundle bundle = load_bundle(a.in);
    std::vector<KeyframeState> init = initial_states_for(bundle, a);
    const int n_kf = static_cast<int>(bundle.keyframe_times_ns.size());
    const int window = a.window > 0 ? a.window : n_kf - a.window_start;

    SolveMode mode = a.mode == "structure-based" ? SolveMode::kStructureBased
                                                 : SolveMode::kStructureless;
    InitializationProblem problem =
        make_window_problem(bundle, a.window_start, window, init, mode, config_from(a));
    SolveResult res = solve(problem);
    save_results(res.states, res.report, a.out);

    std::printf("final_cost=%.6e iterations=%d termination=%s solve_ms=%.3f\n",
                res.report.final_cost, res.report.iterations, res.report.termination.c_str(),
                res.report.solve_ms);
    if (res.report.termination == "numerical_failure")
        throw NumericalFailure("refine: solver reported numerical failure");
}

struct EvalArgs {
    std::string estimate;
    std::string truth;
    std::string out;
    std::string aligned_out;
};

void cmd_eval(const EvalArgs& a) {
    std::vector<KeyframeState> est = load_states_csv(a.estimate);
    std::vector<KeyframeState> truth = load_states_csv(a.truth);
    TrajectoryMetrics m = evaluate_trajectory(est, truth);

    std::string csv = "ate_pos_m,ate_rot_deg,vel_rmse_mps\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g\n", m.ate_pos_m, m.ate_rot_deg,
                  m.vel_rmse_mps);
    csv += buf;
    std::fputs(csv.c_str(), stdout);
    if (!a.out.empty()) {
        std::ofstream f(a.out, std::ios::binary);
        if (!f) throw std::runtime_error(a.out + ": cannot open for writing");
        f << csv;
    }
    if (!a.aligned_out.empty()) {
        std::vector<KeyframeState> aligned = apply_alignment(est, m.alignment);
        std::ofstream f(a.aligned_out, std::ios::binary);
        if (!f) throw std::runtime_error(a.aligned_out + ": cannot open for writing");
        for (const KeyframeState& s : aligned) {
            std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n",
                          static_cast<double>(s.t_ns) * 1e-9, s.p.x(), s.p.y(), s.p.z(), s.q.x(),
                          s.q.y(), s.q.z(), s.q.w());
            f << buf;
        }
    }
}

struct BenchArgs {
    RefineArgs refine;  // reuses mode/pairing/sigma/iteration flags
    int window = 10;
    std::string out;
};

void cmd_bench(const BenchArgs& a) {
    if (a.window < 3) throw std::invalid_argument("bench: --window must be >= 3");
    DatasetBundle bundle = load_bundle(a.refine.in);
    SolveMode mode = a.refine.mode == "structure-based" ? SolveMode::kStructureBased
                                                        : SolveMode::kStructureless;
    BenchResult res = run_bench(bundle, a.window, mode, config_from(a.refine));

    std::string csv = "window_index,t_start_ns,ate_pos_m,ate_rot_deg,vel_rmse_mps,solve_ms\n";
    char buf[256];
    for (const BenchRow& r : res.rows) {
        std::snprintf(buf, sizeof(buf), "%d,%" PRId64 ",%.9g,%.9g,%.9g,%.9g\n", r.window_index,
                      r.t_start_ns, r.ate_pos_m, r.ate_rot_deg, r.vel_rmse_mps, r.solve_ms);
        csv += buf;
    }
    std::snprintf(buf, sizeof(buf), "avg,,%.9g,%.9g,%.9g,%.9g\n", res.avg.ate_pos_m,
                  res.avg.ate_rot_deg, res.avg.vel_rmse_mps, res.avg.solve_ms);
    csv += buf;

    std::fputs(csv.c_str(), stdout);
    if (!a.out.empty()) {
        std::ofstream f(a.out, std::ios::binary);
        if (!f) throw std::runtime_error(a.out + ": cannot open for writing");
        f << csv;
    }
}

// ---------------------------------------------------------------------------
// Finite-difference self check.

struct JactestArgs {
    uint64_t seed = 7;
    int trials = 50;
    bool inject_dcdt_sign_flip = false;  // fault injection for the canary test
};

double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

KeyframeState random_state(std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    auto draw3 = [&]() { return Vector3d(n01(rng), n01(rng), n01(rng)); };
    KeyframeState s;
    s.p = draw3();
    s.v = 0.5 * draw3();
    s.q = quat_from_rotvec(0.6 * draw3());
    s.ba = 0.05 * draw3();
    s.bg = 0.01 * draw3();
    return s;
}

int jactest_epipolar(std::mt19937_64& rng, int trials, bool flip, double* worst) {
    std::normal_distribution<double> n01(0.0, 1.0);
    const Extrinsics ext = default_forward_extrinsics();
    int failures = 0;
    const double h = 1e-7;
    for (int t = 0; t < trials; ++t) {
        KeyframeState si = random_state(rng);
        KeyframeState sj = random_state(rng);
        sj.p = si.p + Vector3d(0.3 + std::abs(n01(rng)), n01(rng), 0.3 * n01(rng));
        EpipolarFactor f;
        f.kf_i = 0;
        f.kf_j = 1;
        f.z_i = Vector3d(0.4 * n01(rng), 0.4 * n01(rng), 1.0);
        f.z_j = Vector3d(0.4 * n01(rng), 0.4 * n01(rng), 1.0);
        EpipolarEval e = epipolar_residual(si, sj, f, ext, 0.02, flip);
        if (e.degenerate) continue;
        for (int d = 0; d < 12; ++d) {
            Vector15 delta = Vector15::Zero();
            const int local = d % 6;
            delta.segment<3>(local < 3 ? kIdxP : kIdxTheta)[local % 3] = h;
            KeyframeState pi = si, pj = sj;
            if (d < 6) pi = state_boxplus(si, delta);
            else pj = state_boxplus(sj, delta);
            EpipolarEval ep = epipolar_residual(pi, pj, f, ext, 0.02, flip);
            const double fd = (ep.r - e.r) / h;
            const double an = d < 6 ? e.J_i(0, local) : e.J_j(0, local);
            const double err = std::abs(fd - an) / std::max(1.0, std::abs(fd));
            *worst = std::max(*worst, err);
            if (err > 1e-4) ++failures;
        }
    }
    return failures;
}

int jactest_reprojection(std::mt19937_64& rng, int trials, double* worst) {
    std::normal_distribution<double> n01(0.0, 1.0);
    const Calibration calib = default_sim_calibration();
    int failures = 0;
    const double h = 1e-7;
    for (int t = 0; t < trials; ++t) {
        KeyframeState s = random_state(rng);
        // Put the landmark in front of the camera (optical axis = body x).
        Landmark lm;
        lm.p = s.p + s.q * Vector3d(3.0 + std::abs(n01(rng)), n01(rng), n01(rng));
        ReprojectionEval e =
            reprojection_residual(s, lm.p, Vector2d(360.0, 240.0), calib.intrinsics,
                                  calib.extrinsics);
        if (e.behind) continue;
        for (int d = 0; d < 9; ++d) {
            Vector2d fd;
            if (d < 6) {
                Vector15 delta = Vector15::Zero();
                delta.segment<3>(d < 3 ? kIdxP : kIdxTheta)[d % 3] = h;
                ReprojectionEval ep = reprojection_residual(
                    state_boxplus(s, delta), lm.p, Vector2d(360.0, 240.0), calib.intrinsics,
                    calib.extrinsics);
                fd = (ep.r - e.r) / h;
            } else {
                Vector3d lp = lm.p;
                lp[d - 6] += h;
                ReprojectionEval ep = reprojection_residual(s, lp, Vector2d(360.0, 240.0),
                                                            calib.intrinsics, calib.extrinsics);
                fd = (ep.r - e.r) / h;
            }
            for (int row = 0; row < 2; ++row) {
                const double an = d < 6 ? e.J_pose(row, d) : e.J_lm(row, d - 6);
                const double err = std::abs(fd[row] - an) / std::max(1.0, std::abs(fd[row]));
                *worst = std::max(*worst, err);
                if (err > 1e-4) ++failures;
            }
        }
    }
    return failures;
}

int jactest_imu(std::mt19937_64& rng, int trials, double* worst) {
    std::normal_distribution<double> n01(0.0, 1.0);
    const GravityVector gravity;
    ImuNoiseModel noise;
    int failures = 0;
    const double h = 1e-6;
    for (int t = 0; t < trials; ++t) {
        std::vector<ImuSample> samples;
        for (int k = 0; k < 21; ++k) {
            ImuSample s;
            s.t_ns = k * 5'000'000;
            s.gyro = Vector3d(n01(rng), n01(rng), n01(rng)) * 0.4;
            s.accel = Vector3d(n01(rng), n01(rng), n01(rng)) * 2.0 + Vector3d(0, 0, 9.81);
            samples.push_back(s);
        }
        KeyframeState prev = random_state(rng);
        KeyframeState curr = random_state(rng);
        curr.t_ns = prev.t_ns + samples.back().t_ns;
        PreintegratedImu pre = preintegrate(samples, prev.ba, prev.bg, noise);
        ImuResidual r0 = imu_residual(pre, prev, curr, gravity);
        for (int side = 0; side < 2; ++side) {
            for (int d = 0; d < 15; ++d) {
                Vector15 delta = Vector15::Zero();
                delta[d] = h;
                KeyframeState pp = prev, pc = curr;
                if (side == 0) pp = state_boxplus(prev, delta);
                else pc = state_boxplus(curr, delta);
                ImuResidual r1 = imu_residual(pre, pp, pc, gravity);
                Vector15 fd = (r1.r - r0.r) / h;
                const auto& J = side == 0 ? r0.J_prev : r0.J_curr;
                for (int row = 0; row < 15; ++row) {
                    const double err =
                        std::abs(fd[row] - J(row, d)) / std::max(1.0, std::abs(fd[row]));
                    *worst = std::max(*worst, err);
                    if (err > 1e-4) ++failures;
                }
            }
        }
    }
    return failures;
}

void cmd_jactest(const JactestArgs& a) {
    if (a.trials <= 0) throw std::invalid_argument("jactest: --trials must be positive");
    std::mt19937_64 rng(a.seed);
    double worst = 0.0;
    int failures = 0;
    failures += jactest_epipolar(rng, a.trials, a.inject_dcdt_sign_flip, &worst);
    failures += jactest_reprojection(rng, a.trials, &worst);
    failures += jactest_imu(rng, std::max(1, a.trials / 10), &worst);
    std::printf("jactest: %d finite-difference mismatches, worst relative error %.3e\n", failures,
                worst);
    if (failures > 0) throw NumericalFailure("jactest: analytic Jacobians disagree with finite differences");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structureless visual-inertial window refinement toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file (command-line flags win)");
    int threads = 0;
    app.add_option("--threads", threads, "OpenMP thread count (0: library default)");
    auto set_threads = [&threads] {
#ifdef _OPENMP
        if (threads > 0) omp_set_num_threads(threads);
#endif
    };

    SimulateArgs sim;
    CLI::App* c_sim = app.add_subcommand("simulate", "Write a synthetic dataset bundle");
    c_sim->add_option("--out", sim.out, "output directory")->required();
    c_sim->add_option("--traj", sim.traj, "trajectory family: sinusoid|circle|figure8")
        ->check(CLI::IsMember({"sinusoid", "circle", "figure8"}));
    c_sim->add_option("--keyframes", sim.keyframes, "number of keyframes");
    c_sim->add_option("--seed", sim.seed, "RNG seed");
    c_sim->add_option("--amplitude", sim.amplitude, "trajectory amplitude, m");
    c_sim->add_option("--rate", sim.rate, "trajectory angular rate, rad/s");
    c_sim->add_option("--imu-rate", sim.imu_rate, "IMU rate, Hz");
    c_sim->add_option("--kf-rate", sim.kf_rate, "keyframe rate, Hz");
    c_sim->add_option("--landmarks", sim.landmarks, "number of feature tracks");
    c_sim->add_option("--pixel-sigma-px", sim.pixel_sigma_px, "pixel noise std, px");
    c_sim->add_flag("--imu-noise", sim.imu_noise, "add IMU white noise and bias random walk");
    c_sim->add_option("--perturb-pos", sim.perturb_pos, "initial-guess position sigma, m");
    c_sim->add_option("--perturb-rot-deg", sim.perturb_rot_deg, "initial-guess rotation sigma, deg");
    c_sim->add_option("--perturb-vel", sim.perturb_vel, "initial-guess velocity sigma, m/s");
    c_sim->add_option("--perturb-ba", sim.perturb_ba, "initial-guess accel bias sigma");
    c_sim->add_option("--perturb-bg", sim.perturb_bg, "initial-guess gyro bias sigma");
    c_sim->callback([&] { set_threads(); cmd_simulate(sim); });

    RefineArgs ref;
    CLI::App* c_ref = app.add_subcommand("refine", "Refine a window of keyframe states");
    auto add_refine_flags = [](CLI::App* c, RefineArgs& a) {
        c->add_option("--in", a.in, "dataset directory")->required();
        c->add_option("--mode", a.mode, "structureless|structure-based")
            ->check(CLI::IsMember({"structureless", "structure-based"}));
        c->add_option("--pairing", a.pairing, "epipolar pairing: all|consecutive")
            ->check(CLI::IsMember({"all", "consecutive"}));
        c->add_option("--epipolar-sigma", a.epipolar_sigma,
                      "epipolar residual sigma (<=0: 1.5px / focal)");
        c->add_option("--pixel-sigma", a.pixel_sigma, "reprojection sigma, px");
        c->add_option("--huber-delta", a.huber_delta, "Huber threshold (<=0: disable)");
        c->add_option("--max-iters", a.max_iters, "iteration cap");
        c->add_flag("--serial", a.serial, "use the serial reference linearizer");
        c->add_flag("--init-from-groundtruth-perturbed", a.init_from_gt_perturbed,
                    "derive the initial guess by perturbing groundtruth.csv");
        c->add_option("--perturb-pos", a.perturb_pos, "with --init-from-groundtruth-perturbed");
        c->add_option("--perturb-rot-deg", a.perturb_rot_deg, "");
        c->add_option("--perturb-vel", a.perturb_vel, "");
        c->add_option("--perturb-ba", a.perturb_ba, "");
        c->add_option("--perturb-bg", a.perturb_bg, "");
        c->add_option("--seed", a.seed, "perturbation seed");
    };
    add_refine_flags(c_ref, ref);
    c_ref->add_option("--out", ref.out, "results directory")->required();
    c_ref->add_option("--window", ref.window, "window size (0: all keyframes)");
    c_ref->add_option("--window-start", ref.window_start, "first keyframe of the window");
    c_ref->callback([&] { set_threads(); cmd_refine(ref); });

    EvalArgs eva;
    CLI::App* c_eval = app.add_subcommand("eval", "Score an estimate against ground truth");
    c_eval->add_option("--estimate", eva.estimate, "estimated states CSV")->required();
    c_eval->add_option("--truth", eva.truth, "ground-truth states CSV")->required();
    c_eval->add_option("--out", eva.out, "metrics CSV path");
    c_eval->add_option("--aligned-out", eva.aligned_out, "aligned trajectory TUM path");
    c_eval->callback([&] { set_threads(); cmd_eval(eva); });

    BenchArgs ben;
    CLI::App* c_bench = app.add_subcommand("bench", "Sliding-window benchmark over a bundle");
    add_refine_flags(c_bench, ben.refine);
    c_bench->add_option("--window", ben.window, "window size");
    c_bench->add_option("--out", ben.out, "metrics CSV path");
    c_bench->callback([&] { set_threads(); cmd_bench(ben); });

    JactestArgs jac;
    CLI::App* c_jac = app.add_subcommand("jactest", "Finite-difference Jacobian self check");
    c_jac->add_option("--seed", jac.seed, "RNG seed");
    c_jac->add_option("--trials", jac.trials, "random instances per residual type");
    c_jac->add_flag("--inject-dcdt-sign-flip", jac.inject_dcdt_sign_flip,
                    "fault injection: flip a chain-rule sign (must make the test fail)")
        ->group("");  // hidden
    c_jac->callback([&] { set_threads(); cmd_jactest(jac); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const NumericalFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
