#include "svba/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace svba {

std::vector<std::pair<int, int>> associate_states(std::span<const KeyframeState> estimate,
                                                  std::span<const KeyframeState> truth,
                                                  int64_t tolerance_ns) {
    if (truth.empty()) throw std::invalid_argument("associate_states: empty truth trajectory");
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(estimate.size());
    for (size_t i = 0; i < estimate.size(); ++i) {
        int best = -1;
        int64_t best_dt = tolerance_ns + 1;
        for (size_t j = 0; j < truth.size(); ++j) {
            const int64_t dt = std::abs(estimate[i].t_ns - truth[j].t_ns);
            if (dt < best_dt) {
                best_dt = dt;
                best = static_cast<int>(j);
            }
        }
        if (best < 0 || best_dt > tolerance_ns)
            throw std::runtime_error("associate_states: no truth state within tolerance of t=" +
                                     std::to_string(estimate[i].t_ns) + " ns");
        pairs.emplace_back(static_cast<int>(i), best);
    }
    return pairs;
}

PosyawAlignment align_posyaw(std::span<const KeyframeState> estimate,
                             std::span<const KeyframeState> truth) {
    std::vector<std::pair<int, int>> pairs = associate_states(estimate, truth);
    if (pairs.size() < 2) throw std::invalid_argument("align_posyaw: need at least 2 pairs");

    Vector3d ce = Vector3d::Zero(), ct = Vector3d::Zero();
    for (auto [i, j] : pairs) {
        ce += estimate[i].p;
        ct += truth[j].p;
    }
    ce /= static_cast<double>(pairs.size());
    ct /= static_cast<double>(pairs.size());

    double a = 0.0, b = 0.0;
    for (auto [i, j] : pairs) {
        const Vector3d e = estimate[i].p - ce;
        const Vector3d t = truth[j].p - ct;
        a += e.x() * t.x() + e.y() * t.y();
        b += e.x() * t.y() - e.y() * t.x();
    }

    PosyawAlignment out;
    if (std::hypot(a, b) < 1e-12) {
        out.degenerate = true;
        out.yaw = 0.0;
    } else {
        out.yaw = std::atan2(b, a);
    }
    const Quaterniond rz(Eigen::AngleAxisd(out.yaw, Vector3d::UnitZ()));
    out.t = ct - rz * ce;
    return out;
}

std::vector<KeyframeState> apply_alignment(std::span<const KeyframeState> states,
                                           const PosyawAlignment& alignment) {
    const Quaterniond rz(Eigen::AngleAxisd(alignment.yaw, Vector3d::UnitZ()));
    std::vector<KeyframeState> out(states.begin(), states.end());
    for (KeyframeState& s : out) {
        s.p = rz * s.p + alignment.t;
        s.v = rz * s.v;
        s.q = (rz * s.q).normalized();
    }
    return out;
}

AteResult compute_ate(std::span<const KeyframeState> estimate,
                      std::span<const KeyframeState> truth) {
    std::vector<std::pair<int, int>> pairs = associate_states(estimate, truth);
    if (pairs.empty()) throw std::invalid_argument("compute_ate: no associated pairs");

    double pos_sq = 0.0, rot_sq = 0.0;
    for (auto [i, j] : pairs) {
        pos_sq += (estimate[i].p - truth[j].p).squaredNorm();
        const double ang = quat_boxminus(estimate[i].q, truth[j].q).norm();
        rot_sq += ang * ang;
    }
    const double n = static_cast<double>(pairs.size());
    AteResult out;
    out.pos_rmse_m = std::sqrt(pos_sq / n);
    out.rot_rmse_deg = std::sqrt(rot_sq / n) * 180.0 / M_PI;
    return out;
}

double compute_velocity_rmse(std::span<const KeyframeState> estimate,
                             std::span<const KeyframeState> truth) {
    std::vector<std::pair<int, int>> pairs = associate_states(estimate, truth);
    if (pairs.empty()) throw std::invalid_argument("compute_velocity_rmse: no associated pairs");
    double sq = 0.0;
    for (auto [i, j] : pairs) {
        const double d = estimate[i].v.norm() - truth[j].v.norm();
        sq += d * d;
    }
    return std::sqrt(sq / static_cast<double>(pairs.size()));
}

TrajectoryMetrics evaluate_trajectory(std::span<const KeyframeState> estimate,
                                      std::span<const KeyframeState> truth) {
    TrajectoryMetrics m;
    m.alignment = align_posyaw(estimate, truth);
    std::vector<KeyframeState> aligned = apply_alignment(estimate, m.alignment);
    const AteResult ate = compute_ate(aligned, truth);
    m.ate_pos_m = ate.pos_rmse_m;
    m.ate_rot_deg = ate.rot_rmse_deg;
    m.vel_rmse_mps = compute_velocity_rmse(estimate, truth);
    return m;
}

double aggregate_solve_time_ms(std::span<const double> solve_ms) {
    if (solve_ms.empty()) throw std::invalid_argument("aggregate_solve_time_ms: empty list");
    return std::accumulate(solve_ms.begin(), solve_ms.end(), 0.0) /
           static_cast<double>(solve_ms.size());
}

}  // namespace svba
