#include "svba/linearizer.hpp"

#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace svba {

namespace {

struct VisualContext {
    const InitializationProblem* p;
    std::span<const KeyframeState> states;
    std::span<const Landmark> landmarks;
    std::vector<FrameCam> frames;
    int n;        // full problem dimension
    int lm_base;  // column offset of the first landmark variable
};

VisualContext make_context(const InitializationProblem& p, std::span<const KeyframeState> states,
                           std::span<const Landmark> landmarks) {
    VisualContext ctx{&p, states, landmarks, {}, 0, 0};
    ctx.frames.reserve(states.size());
    for (const KeyframeState& s : states) {
        ctx.frames.push_back(make_frame_cam(s, p.calib.extrinsics));
    }
    ctx.lm_base = 15 * static_cast<int>(states.size());
    ctx.n = ctx.lm_base + 3 * static_cast<int>(landmarks.size());
    return ctx;
}

// One epipolar factor: whiten, robust-weight, scatter into H/g over the
// [dp_i, dtheta_i, dp_j, dtheta_j] columns. Returns the robust cost term.
double accumulate_epi(const VisualContext& ctx, const EpipolarFactor& f, Eigen::MatrixXd& H,
                      Eigen::VectorXd& g, uint8_t& active) {
    const EpipolarEval e = epipolar_eval(ctx.frames[f.kf_i], ctx.frames[f.kf_j], f.z_i, f.z_j,
                                         ctx.p->settings.min_baseline);
    if (e.degenerate) {
        active = 0;
        return 0.0;
    }
    active = 1;

    const double inv_sigma = 1.0 / f.sigma;
    const double r_w = e.r * inv_sigma;
    const double w = huber_weight(std::abs(r_w), ctx.p->loss);

    const Vector3d seg[4] = {inv_sigma * e.J_i.block<1, 3>(0, 0).transpose(),
                             inv_sigma * e.J_i.block<1, 3>(0, 3).transpose(),
                             inv_sigma * e.J_j.block<1, 3>(0, 0).transpose(),
                             inv_sigma * e.J_j.block<1, 3>(0, 3).transpose()};
    const int col[4] = {15 * f.kf_i, 15 * f.kf_i + kIdxTheta, 15 * f.kf_j,
                        15 * f.kf_j + kIdxTheta};
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            H.block<3, 3>(col[a], col[b]).noalias() += (w * seg[a]) * seg[b].transpose();
        }
        g.segment<3>(col[a]).noalias() += (w * r_w) * seg[a];
    }
    return huber_cost(r_w * r_w, ctx.p->loss);
}

double accumulate_reproj(const VisualContext& ctx, const ReprojectionFactor& f,
                         Eigen::MatrixXd& H, Eigen::VectorXd& g, uint8_t& active) {
    const ReprojectionEval e = reprojection_residual(
        ctx.states[f.kf_index], ctx.landmarks[f.landmark_index].p, f.pixel,
        ctx.p->calib.intrinsics, ctx.p->calib.extrinsics, ctx.p->settings.min_depth);
    if (e.behind) {
        active = 0;
        return 0.0;
    }
    active = 1;

    const double inv_sigma = 1.0 / f.sigma_px;
    const Eigen::Vector2d r_w = e.r * inv_sigma;
    const double w = huber_weight(r_w.norm(), ctx.p->loss);

    // Whitened Jacobian over [dp(3), dtheta(3), landmark(3)].
    Eigen::Matrix<double, 2, 9> J;
    J.block<2, 6>(0, 0) = inv_sigma * e.J_pose;
    J.block<2, 3>(0, 6) = inv_sigma * e.J_lm;
    const int col[3] = {15 * f.kf_index, 15 * f.kf_index + kIdxTheta,
                        ctx.lm_base + 3 * f.landmark_index};
    for (int a = 0; a < 3; ++a) {
        const Eigen::Matrix<double, 2, 3> Ja = J.block<2, 3>(0, 3 * a);
        for (int b = 0; b < 3; ++b) {
            H.block<3, 3>(col[a], col[b]).noalias() +=
                w * Ja.transpose() * J.block<2, 3>(0, 3 * b);
        }
        g.segment<3>(col[a]).noalias() += w * Ja.transpose() * r_w;
    }
    return huber_cost(r_w.squaredNorm(), ctx.p->loss);
}

}  // namespace

double linearize_visual_serial(const InitializationProblem& p,
                               std::span<const KeyframeState> states,
                               std::span<const Landmark> landmarks, Eigen::MatrixXd& H,
                               Eigen::VectorXd& g, std::vector<uint8_t>& epi_active,
                               std::vector<uint8_t>& reproj_active) {
    const VisualContext ctx = make_context(p, states, landmarks);
    epi_active.assign(p.epi_factors.size(), 0);
    reproj_active.assign(p.reproj_factors.size(), 0);

    double cost = 0.0;
    for (size_t i = 0; i < p.epi_factors.size(); ++i) {
        cost += accumulate_epi(ctx, p.epi_factors[i], H, g, epi_active[i]);
    }
    for (size_t i = 0; i < p.reproj_factors.size(); ++i) {
        cost += accumulate_reproj(ctx, p.reproj_factors[i], H, g, reproj_active[i]);
    }
    return cost;
}

double linearize_visual_parallel(const InitializationProblem& p,
                                 std::span<const KeyframeState> states,
                                 std::span<const Landmark> landmarks, Eigen::MatrixXd& H,
                                 Eigen::VectorXd& g, std::vector<uint8_t>& epi_active,
                                 std::vector<uint8_t>& reproj_active) {
#ifndef _OPENMP
    return linearize_visual_serial(p, states, landmarks, H, g, epi_active, reproj_active);
#else
    const VisualContext ctx = make_context(p, states, landmarks);
    epi_active.assign(p.epi_factors.size(), 0);
    reproj_active.assign(p.reproj_factors.size(), 0);

    const int threads = omp_get_max_threads();
    std::vector<Eigen::MatrixXd> H_t(threads);
    std::vector<Eigen::VectorXd> g_t(threads);
    std::vector<double> cost_t(threads, 0.0);

#pragma omp parallel num_threads(threads)
    {
        const int tid = omp_get_thread_num();
        H_t[tid] = Eigen::MatrixXd::Zero(ctx.n, ctx.n);
        g_t[tid] = Eigen::VectorXd::Zero(ctx.n);
        double local = 0.0;
#pragma omp for schedule(static) nowait
        for (long i = 0; i < static_cast<long>(p.epi_factors.size()); ++i) {
            local += accumulate_epi(ctx, p.epi_factors[i], H_t[tid], g_t[tid], epi_active[i]);
        }
#pragma omp for schedule(static)
        for (long i = 0; i < static_cast<long>(p.reproj_factors.size()); ++i) {
            local +=
                accumulate_reproj(ctx, p.reproj_factors[i], H_t[tid], g_t[tid], reproj_active[i]);
        }
        cost_t[tid] = local;
    }

    double cost = 0.0;
    for (int t = 0; t < threads; ++t) {  // fixed reduction order
        H += H_t[t];
        g += g_t[t];
        cost += cost_t[t];
    }
    return cost;
#endif
}

double linearize_imu(const InitializationProblem& p, std::span<const KeyframeState> states,
                     Eigen::MatrixXd& H, Eigen::VectorXd& g) {
    double cost = 0.0;
    for (size_t k = 0; k < p.imu_factors.size(); ++k) {
        const Matrix15 W = p.imu_factors[k].sqrt_information();
        const ImuResidual res =
            imu_residual(p.imu_factors[k], states[k], states[k + 1], p.calib.gravity);
        const Vector15 r_w = W * res.r;
        const Matrix15 Jp = W * res.J_prev;
        const Matrix15 Jc = W * res.J_curr;

        const int a = 15 * static_cast<int>(k);
        const int b = a + 15;
        H.block<15, 15>(a, a).noalias() += Jp.transpose() * Jp;
        H.block<15, 15>(a, b).noalias() += Jp.transpose() * Jc;
        H.block<15, 15>(b, a).noalias() += Jc.transpose() * Jp;
        H.block<15, 15>(b, b).noalias() += Jc.transpose() * Jc;
        g.segment<15>(a).noalias() += Jp.transpose() * r_w;
        g.segment<15>(b).noalias() += Jc.transpose() * r_w;
        cost += r_w.squaredNorm();
    }
    return cost;
}

LinearizedSystem linearize_problem(const InitializationProblem& p,
                                   std::span<const KeyframeState> states,
                                   std::span<const Landmark> landmarks, bool parallel) {
    if (states.size() != p.states.size()) {
        throw std::invalid_argument("linearize: state count does not match problem");
    }
    LinearizedSystem sys;
    const int n = 15 * static_cast<int>(states.size()) + 3 * static_cast<int>(landmarks.size());
    sys.H = Eigen::MatrixXd::Zero(n, n);
    sys.g = Eigen::VectorXd::Zero(n);

    sys.cost = linearize_imu(p, states, sys.H, sys.g);

    Eigen::MatrixXd Hv = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd gv = Eigen::VectorXd::Zero(n);
    const double visual =
        parallel ? linearize_visual_parallel(p, states, landmarks, Hv, gv, sys.epi_active,
                                             sys.reproj_active)
                 : linearize_visual_serial(p, states, landmarks, Hv, gv, sys.epi_active,
                                           sys.reproj_active);
    sys.H += Hv;
    sys.g += gv;
    sys.cost += visual;
    return sys;
}

namespace {

double cost_only(const InitializationProblem& p, std::span<const KeyframeState> states,
                 std::span<const Landmark> landmarks, const std::vector<uint8_t>* epi_mask,
                 const std::vector<uint8_t>* reproj_mask) {
    double cost = 0.0;
    for (size_t k = 0; k < p.imu_factors.size(); ++k) {
        const Matrix15 W = p.imu_factors[k].sqrt_information();
        const ImuResidual res =
            imu_residual(p.imu_factors[k], states[k], states[k + 1], p.calib.gravity);
        cost += (W * res.r).squaredNorm();
    }

    std::vector<FrameCam> frames;
    frames.reserve(states.size());
    for (const KeyframeState& s : states) frames.push_back(make_frame_cam(s, p.calib.extrinsics));

    for (size_t i = 0; i < p.epi_factors.size(); ++i) {
        const EpipolarFactor& f = p.epi_factors[i];
        if (epi_mask && !(*epi_mask)[i]) continue;
        // With a frozen mask, evaluate even below the gate so the comparison
        // against the linearization point stays consistent.
        const double gate = epi_mask ? 1e-12 : p.settings.min_baseline;
        const EpipolarEval e = epipolar_eval(frames[f.kf_i], frames[f.kf_j], f.z_i, f.z_j, gate);
        if (e.degenerate) continue;
        const double r_w = e.r / f.sigma;
        cost += huber_cost(r_w * r_w, p.loss);
    }
    for (size_t i = 0; i < p.reproj_factors.size(); ++i) {
        const ReprojectionFactor& f = p.reproj_factors[i];
        if (reproj_mask && !(*reproj_mask)[i]) continue;
        const double gate = reproj_mask ? 1e-9 : p.settings.min_depth;
        const ReprojectionEval e =
            reprojection_residual(states[f.kf_index], landmarks[f.landmark_index].p, f.pixel,
                                  p.calib.intrinsics, p.calib.extrinsics, gate);
        if (e.behind) continue;
        cost += huber_cost(e.r.squaredNorm() / (f.sigma_px * f.sigma_px), p.loss);
    }
    return cost;
}

}  // namespace

double evaluate_problem_cost(const InitializationProblem& p,
                             std::span<const KeyframeState> states,
                             std::span<const Landmark> landmarks) {
    return cost_only(p, states, landmarks, nullptr, nullptr);
}

double evaluate_problem_cost_masked(const InitializationProblem& p,
                                    std::span<const KeyframeState> states,
                                    std::span<const Landmark> landmarks,
                                    const std::vector<uint8_t>& epi_active,
                                    const std::vector<uint8_t>& reproj_active) {
    return cost_only(p, states, landmarks, &epi_active, &reproj_active);
}

}  // namespace svba
