#include "svba/solver.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace svba {

double yaw_of(const Quaterniond& q) {
    const Matrix3d R = q.toRotationMatrix();
    return std::atan2(R(1, 0), R(0, 0));
}

Quaterniond yaw_quat(double yaw) {
    return Quaterniond(Eigen::AngleAxisd(yaw, Vector3d::UnitZ()));
}

void apply_global_yaw_translation(std::span<KeyframeState> states, double yaw,
                                  const Vector3d& t) {
    const Quaterniond R = yaw_quat(yaw);
    for (KeyframeState& s : states) {
        s.p = R * s.p + t;
        s.v = R * s.v;
        s.q = (R * s.q).normalized();
    }
}

void apply_global_yaw_translation(std::span<Landmark> landmarks, double yaw, const Vector3d& t) {
    const Quaterniond R = yaw_quat(yaw);
    for (Landmark& l : landmarks) l.p = R * l.p + t;
}

namespace {

// Gauge reduction: keep every error dimension except the first keyframe's
// position, and replace its 3-dim orientation block by the 2-dim basis
// orthogonal to the yaw direction d = R0^T e_z (a yaw rotation about gravity
// perturbs the first orientation along d, which must be projected out).
struct GaugeReduction {
    int n = 0;
    int m = 0;
    std::vector<int> plain;                 // kept dimensions, in order
    Eigen::Matrix<double, 3, 2> theta_basis;  // only when reduced

    GaugeReduction(int n_total, const KeyframeState& first, bool reduce) : n(n_total) {
        if (!reduce) {
            m = n;
            plain.resize(n);
            for (int i = 0; i < n; ++i) plain[i] = i;
            return;
        }
        for (int i = kIdxV; i < kIdxTheta; ++i) plain.push_back(i);
        for (int i = kIdxBa; i < kStateDim; ++i) plain.push_back(i);
        for (int i = kStateDim; i < n; ++i) plain.push_back(i);
        const Vector3d d = (first.q.toRotationMatrix().transpose() * Vector3d::UnitZ()).normalized();
        theta_basis.col(0) = d.unitOrthogonal();
        theta_basis.col(1) = d.cross(theta_basis.col(0));
        m = static_cast<int>(plain.size()) + 2;
    }

    bool reduced() const { return m != n; }

    void reduce(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, Eigen::MatrixXd& Hr,
                Eigen::VectorXd& gr) const {
        const int np = static_cast<int>(plain.size());
        Hr.resize(m, m);
        gr.resize(m);
        for (int a = 0; a < np; ++a) {
            gr[a] = g[plain[a]];
            for (int b = 0; b < np; ++b) Hr(a, b) = H(plain[a], plain[b]);
        }
        if (!reduced()) return;
        const auto Ht = H.block(0, kIdxTheta, n, 3);  // columns of the first theta block
        const Eigen::MatrixXd Hcross = Ht * theta_basis;              // n x 2
        const Eigen::Matrix2d Hcorner =
            theta_basis.transpose() * Ht.block<3, 3>(kIdxTheta, 0) * theta_basis;
        for (int a = 0; a < np; ++a) {
            Hr(a, np) = Hcross(plain[a], 0);
            Hr(a, np + 1) = Hcross(plain[a], 1);
            Hr(np, a) = Hr(a, np);
            Hr(np + 1, a) = Hr(a, np + 1);
        }
        Hr.block<2, 2>(np, np) = Hcorner;
        gr.segment<2>(np) = theta_basis.transpose() * g.segment<3>(kIdxTheta);
    }

    Eigen::VectorXd expand(const Eigen::VectorXd& dr) const {
        Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
        const int np = static_cast<int>(plain.size());
        for (int a = 0; a < np; ++a) d[plain[a]] = dr[a];
        if (reduced()) d.segment<3>(kIdxTheta) = theta_basis * dr.segment<2>(np);
        return d;
    }
};

void apply_step(std::span<const KeyframeState> in, std::span<const Landmark> lms_in,
                const Eigen::VectorXd& delta, std::vector<KeyframeState>& out,
                std::vector<Landmark>& lms_out) {
    out.assign(in.begin(), in.end());
    for (size_t k = 0; k < out.size(); ++k) {
        out[k] = state_boxplus(out[k], delta.segment<15>(15 * static_cast<int>(k)));
    }
    lms_out.assign(lms_in.begin(), lms_in.end());
    const int base = 15 * static_cast<int>(out.size());
    for (size_t l = 0; l < lms_out.size(); ++l) {
        lms_out[l].p += delta.segment<3>(base + 3 * static_cast<int>(l));
    }
}

}  // namespace

SolveResult solve(const InitializationProblem& problem) {
    const auto t0 = std::chrono::steady_clock::now();
    const SolverSettings& set = problem.settings;

    SolveResult res;
    res.states = problem.states;
    res.landmarks = problem.landmarks;
    if (res.states.size() < 2) throw std::invalid_argument("solve: need at least 2 keyframes");

    const Vector3d anchor_p = res.states[0].p;
    const double anchor_yaw = yaw_of(res.states[0].q);
    // Floor below which the objective is considered numerically zero; stops
    // the solver from polishing floating-point noise when started at an exact
    // fixed point.
    const double cost_floor = 1e-18;

    SolveReport& rep = res.report;
    double lambda = set.lambda_init;

    std::vector<KeyframeState> best_states = res.states;
    std::vector<Landmark> best_lms = res.landmarks;
    double best_cost = std::numeric_limits<double>::infinity();

    std::vector<KeyframeState> cand_states;
    std::vector<Landmark> cand_lms;

    double cost = 0.0;
    for (int iter = 0; iter <= set.max_iterations; ++iter) {
        LinearizedSystem sys =
            linearize_problem(problem, res.states, res.landmarks, set.parallel_linearizer);
        cost = sys.cost;
        if (iter == 0) {
            rep.initial_cost = cost;
            rep.cost_trace.push_back(cost);
        }
        if (cost < best_cost) {
            best_cost = cost;
            best_states = res.states;
            best_lms = res.landmarks;
        }

        if (cost <= cost_floor) {
            rep.termination = "cost_floor";
            break;
        }

        const GaugeReduction gauge(sys.H.rows() == 0 ? 0 : static_cast<int>(sys.H.rows()),
                                   res.states[0], problem.fix_first_position_yaw);
        Eigen::MatrixXd Hr;
        Eigen::VectorXd gr;
        gauge.reduce(sys.H, sys.g, Hr, gr);

        if (gr.lpNorm<Eigen::Infinity>() < set.grad_tol) {
            rep.termination = "gradient";
            break;
        }
        if (iter == set.max_iterations) {
            rep.termination = "max_iterations";
            break;
        }

        const Eigen::VectorXd D =
            Hr.diagonal().cwiseMax(1e-6);  // damping scale, floored so gated-out
                                           // dimensions stay solvable

        bool accepted = false;
        double cand_cost = 0.0;
        while (!accepted) {
            if (lambda > set.lambda_max) {
                rep.termination = "numerical_failure";
                res.states = best_states;
                res.landmarks = best_lms;
                rep.final_cost = best_cost;
                rep.solve_ms = std::chrono::duration<double, std::milli>(
                                   std::chrono::steady_clock::now() - t0)
                                   .count();
                return res;
            }
            Eigen::MatrixXd A = Hr;
            A.diagonal() += lambda * D;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
            if (ldlt.info() != Eigen::Success) {
                lambda *= set.lambda_up;
                continue;
            }
            const Eigen::VectorXd dr = ldlt.solve(-gr);
            if (!dr.allFinite()) {
                lambda *= set.lambda_up;
                continue;
            }
            apply_step(res.states, res.landmarks, gauge.expand(dr), cand_states, cand_lms);
            cand_cost = evaluate_problem_cost_masked(problem, cand_states, cand_lms,
                                                     sys.epi_active, sys.reproj_active);
            if (std::isfinite(cand_cost) && cand_cost <= cost) {
                accepted = true;
            } else {
                lambda *= set.lambda_up;
            }
        }

        rep.iterations = iter + 1;
        res.states = std::move(cand_states);
        res.landmarks = std::move(cand_lms);
        lambda = std::max(lambda * set.lambda_down, 1e-12);

        if (problem.fix_first_position_yaw) {
            // Exact re-anchoring: undo the (second-order) gauge drift of the
            // accepted step with one rigid yaw+translation of the whole scene.
            const double dyaw = anchor_yaw - yaw_of(res.states[0].q);
            const Vector3d t = anchor_p - yaw_quat(dyaw) * res.states[0].p;
            apply_global_yaw_translation(std::span<KeyframeState>(res.states), dyaw, t);
            apply_global_yaw_translation(std::span<Landmark>(res.landmarks), dyaw, t);
            res.states[0].p = anchor_p;  // exact by construction; make it bitwise
        }

        rep.cost_trace.push_back(cand_cost);
        const double decrease = cost - cand_cost;
        cost = cand_cost;
        if (cost < best_cost) {
            best_cost = cost;
            best_states = res.states;
            best_lms = res.landmarks;
        }
        if (decrease <= set.rel_cost_tol * std::max(cost, 1e-300)) {
            rep.termination = "cost_decrease";
            break;
        }
    }

    if (rep.termination.empty()) rep.termination = "max_iterations";
    rep.final_cost = cost;
    rep.solve_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace svba
