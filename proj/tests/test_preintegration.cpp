#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Cholesky>
#include <functional>
#include <random>

#include "svba/preintegration.hpp"

using namespace svba;

namespace {

std::vector<ImuSample> constant_stream(const Vector3d& gyro, const Vector3d& accel, double dur_s,
                                       int n) {
    std::vector<ImuSample> s(n);
    for (int i = 0; i < n; ++i) {
        s[i].t_ns = static_cast<int64_t>(std::llround(i * dur_s * 1e9 / (n - 1)));
        s[i].gyro = gyro;
        s[i].accel = accel;
    }
    return s;
}

// Band-limited deterministic test signals (body rates and specific force).
struct SmoothSignal {
    uint64_t seed;
    double gyro_scale = 0.25;
    double accel_scale = 0.8;

    void eval(double t, Vector3d* gyro, Vector3d* accel) const {
        std::mt19937_64 r(seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        auto comp = [&](double scale) {
            double c1 = u(r), f1 = 1.0 + u(r), p1 = M_PI * u(r);
            double c2 = u(r), f2 = 2.0 + u(r), p2 = M_PI * u(r);
            return scale * (c1 * std::sin(f1 * t + p1) + 0.5 * c2 * std::sin(f2 * t + p2));
        };
        for (int k = 0; k < 3; ++k) (*gyro)[k] = comp(gyro_scale);
        for (int k = 0; k < 3; ++k) (*accel)[k] = comp(accel_scale);
        (*accel)[2] += 9.81;
    }

    std::vector<ImuSample> sample(double dur_s, double rate_hz) const {
        const int64_t dt_ns = std::llround(1e9 / rate_hz);
        const int n = static_cast<int>(std::llround(dur_s * rate_hz)) + 1;
        std::vector<ImuSample> out(n);
        for (int i = 0; i < n; ++i) {
            out[i].t_ns = i * dt_ns;
            eval(static_cast<double>(out[i].t_ns) * 1e-9, &out[i].gyro, &out[i].accel);
        }
        return out;
    }
};

// RK4 on the continuous preintegration ODE: alpha' = beta, beta' = R(q) a(t),
// q' = q * [0, w(t)/2], independent of the midpoint discretization under test.
void rk4_reference(const SmoothSignal& sig, double dur_s, int steps, Vector3d* alpha,
                   Vector3d* beta, Quaterniond* gamma) {
    Eigen::Matrix<double, 10, 1> y;  // [alpha, beta, qw qx qy qz] padded
    y.setZero();
    y[6] = 1.0;
    auto deriv = [&](double t, const Eigen::Matrix<double, 10, 1>& s) {
        Vector3d w, a;
        sig.eval(t, &w, &a);
        Quaterniond q(s[6], s[7], s[8], s[9]);
        Eigen::Matrix<double, 10, 1> d;
        d.segment<3>(0) = s.segment<3>(3);
        d.segment<3>(3) = q * a;
        Quaterniond qd = q * Quaterniond(0.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z());
        d[6] = qd.w();
        d[7] = qd.x();
        d[8] = qd.y();
        d[9] = qd.z();
        return d;
    };
    const double h = dur_s / steps;
    double t = 0.0;
    for (int i = 0; i < steps; ++i) {
        auto k1 = deriv(t, y);
        auto k2 = deriv(t + 0.5 * h, y + 0.5 * h * k1);
        auto k3 = deriv(t + 0.5 * h, y + 0.5 * h * k2);
        auto k4 = deriv(t + h, y + h * k3);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        y.segment<4>(6).normalize();
        t += h;
    }
    *alpha = y.segment<3>(0);
    *beta = y.segment<3>(3);
    *gamma = Quaterniond(y[6], y[7], y[8], y[9]).normalized();
}

}  // namespace

TEST_CASE("constant acceleration closed form") {
    auto s = constant_stream(Vector3d::Zero(), Vector3d(1, 0, 0), 1.0, 201);
    PreintegratedImu p = preintegrate(s, Vector3d::Zero(), Vector3d::Zero(), ImuNoiseModel{});
    CHECK((p.alpha - Vector3d(0.5, 0, 0)).norm() < 1e-12);
    CHECK((p.beta - Vector3d(1, 0, 0)).norm() < 1e-12);
    CHECK(quat_boxminus(p.gamma, Quaterniond::Identity()).norm() < 1e-12);
    CHECK(p.dt_total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pure rotation closed form") {
    auto s = constant_stream(Vector3d(0, 0, M_PI), Vector3d::Zero(), 1.0, 201);
    PreintegratedImu p = preintegrate(s, Vector3d::Zero(), Vector3d::Zero(), ImuNoiseModel{});
    Quaterniond expect = quat_from_rotvec(Vector3d(0, 0, M_PI));
    CHECK(quat_boxminus(p.gamma, expect).norm() < 1e-9);
    CHECK(p.beta.norm() < 1e-12);
    CHECK(p.alpha.norm() < 1e-12);
}

TEST_CASE("200 Hz stream matches oversampled RK4 reference") {
    for (uint64_t seed : {11u, 12u, 13u}) {
        SmoothSignal sig{seed};
        auto samples = sig.sample(0.5, 200.0);
        PreintegratedImu p = preintegrate(samples, Vector3d::Zero(), Vector3d::Zero(),
                                          ImuNoiseModel{});
        Vector3d alpha, beta;
        Quaterniond gamma;
        rk4_reference(sig, 0.5, 100 * 100, &alpha, &beta, &gamma);
        CHECK((p.alpha - alpha).norm() < 1e-5);
        CHECK((p.beta - beta).norm() < 1e-5);
        CHECK(quat_boxminus(p.gamma, gamma).norm() < 1e-5);
    }
}

TEST_CASE("input validation") {
    ImuNoiseModel noise;
    std::vector<ImuSample> one(1);
    CHECK_THROWS_AS(preintegrate(one, Vector3d::Zero(), Vector3d::Zero(), noise),
                    std::invalid_argument);
    auto s = constant_stream(Vector3d::Zero(), Vector3d::Zero(), 1.0, 5);
    s[2].t_ns = s[1].t_ns;  // non-monotone
    CHECK_THROWS_AS(preintegrate(s, Vector3d::Zero(), Vector3d::Zero(), noise),
                    std::invalid_argument);
    ImuNoiseModel bad;
    bad.gyro_noise = 0.0;
    auto ok = constant_stream(Vector3d::Zero(), Vector3d::Zero(), 1.0, 5);
    CHECK_THROWS_AS(preintegrate(ok, Vector3d::Zero(), Vector3d::Zero(), bad),
                    std::invalid_argument);
}

TEST_CASE("covariance shape invariants") {
    SmoothSignal sig{21};
    auto samples = sig.sample(0.5, 200.0);
    PreintegratedImu p =
        preintegrate(samples, Vector3d(0.01, 0, 0), Vector3d(0, 0.002, 0), ImuNoiseModel{});
    CHECK((p.covariance - p.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::LLT<Matrix15> llt(p.covariance);
    CHECK(llt.info() == Eigen::Success);
    CHECK(std::abs(p.gamma.norm() - 1.0) < 1e-12);
    // whitener really is a square root of the information matrix
    Matrix15 W = p.sqrt_information();
    CHECK((W.transpose() * W * p.covariance - Matrix15::Identity()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("bias correction is first order accurate") {
    SmoothSignal sig{31};
    auto samples = sig.sample(0.5, 200.0);
    const Vector3d ba0(0.02, -0.01, 0.015), bg0(0.001, 0.002, -0.001);
    PreintegratedImu p = preintegrate(samples, ba0, bg0, ImuNoiseModel{});

    SUBCASE("zero delta is exact") {
        BiasCorrected c = correct_for_bias_delta(p, ba0, bg0);
        CHECK((c.alpha - p.alpha).norm() == 0.0);
        CHECK((c.beta - p.beta).norm() == 0.0);
        CHECK(quat_boxminus(c.gamma, p.gamma).norm() < 1e-15);
    }

    SUBCASE("gyro bias delta vs re-preintegration") {
        const Vector3d dbg(1e-3, 0, 0);
        BiasCorrected c = correct_for_bias_delta(p, ba0, bg0 + dbg);
        PreintegratedImu p2 = preintegrate(samples, ba0, bg0 + dbg, ImuNoiseModel{});
        CHECK(quat_boxminus(c.gamma, p2.gamma).norm() < 1e-6);
        CHECK((c.alpha - p2.alpha).norm() < 1e-5);
        CHECK((c.beta - p2.beta).norm() < 1e-5);
    }

    SUBCASE("accel bias delta vs re-preintegration") {
        const Vector3d dba(1e-2, 0, 0);
        BiasCorrected c = correct_for_bias_delta(p, ba0 + dba, bg0);
        PreintegratedImu p2 = preintegrate(samples, ba0 + dba, bg0, ImuNoiseModel{});
        CHECK((c.alpha - p2.alpha).norm() < 1e-5);
        CHECK((c.beta - p2.beta).norm() < 1e-5);
    }
}

TEST_CASE("split and compose equals one-shot") {
    SmoothSignal sig{41};
    auto samples = sig.sample(0.5, 200.0);
    const Vector3d ba(0.01, 0.02, -0.01), bg(0.002, -0.001, 0.001);
    PreintegratedImu full = preintegrate(samples, ba, bg, ImuNoiseModel{});

    const size_t cut = 37;  // interior sample, shared by both halves
    std::vector<ImuSample> first(samples.begin(), samples.begin() + cut + 1);
    std::vector<ImuSample> second(samples.begin() + cut, samples.end());
    PreintegratedImu a = preintegrate(first, ba, bg, ImuNoiseModel{});
    PreintegratedImu b = preintegrate(second, ba, bg, ImuNoiseModel{});
    PreintegratedImu joined = compose(a, b);

    CHECK((joined.alpha - full.alpha).norm() < 1e-8);
    CHECK((joined.beta - full.beta).norm() < 1e-8);
    CHECK(quat_boxminus(joined.gamma, full.gamma).norm() < 1e-8);
    CHECK(joined.dt_total == doctest::Approx(full.dt_total).epsilon(1e-12));
    const double cs = full.covariance.cwiseAbs().maxCoeff();
    CHECK((joined.covariance - full.covariance).cwiseAbs().maxCoeff() < 1e-6 * cs);
    CHECK((joined.jacobian - full.jacobian).cwiseAbs().maxCoeff() < 1e-8);

    CHECK_THROWS_AS(compose(a, preintegrate(second, ba + Vector3d(0.1, 0, 0), bg, ImuNoiseModel{})),
                    std::invalid_argument);
}

namespace {

// World-frame midpoint chain over the samples: produces the state pair the
// residual should call consistent.
KeyframeState propagate_chain(const KeyframeState& s0, std::span<const ImuSample> samples,
                              const Vector3d& g_vec) {
    KeyframeState s = s0;
    for (size_t i = 0; i + 1 < samples.size(); ++i) {
        const double dt = static_cast<double>(samples[i + 1].t_ns - samples[i].t_ns) * 1e-9;
        const Vector3d w_mid = 0.5 * (samples[i].gyro + samples[i + 1].gyro) - s0.bg;
        const Quaterniond q1 = (s.q * quat_from_rotvec(w_mid * dt)).normalized();
        const Vector3d acc =
            0.5 * (s.q * (samples[i].accel - s0.ba) + q1 * (samples[i + 1].accel - s0.ba)) + g_vec;
        s.p += s.v * dt + 0.5 * acc * dt * dt;
        s.v += acc * dt;
        s.q = q1;
        s.t_ns = samples[i + 1].t_ns;
    }
    return s;
}

KeyframeState random_state(std::mt19937_64& r) {
    std::normal_distribution<double> n(0.0, 1.0);
    auto v3 = [&]() { return Vector3d(n(r), n(r), n(r)); };
    KeyframeState s;
    s.p = v3();
    s.v = 0.5 * v3();
    s.q = quat_from_rotvec(0.7 * v3());
    s.ba = 0.05 * v3();
    s.bg = 0.01 * v3();
    return s;
}

}  // namespace

TEST_CASE("residual vanishes on kinematically consistent states") {
    SmoothSignal sig{51};
    auto samples = sig.sample(0.5, 200.0);
    const GravityVector gravity;
    std::mt19937_64 r(7);
    KeyframeState prev = random_state(r);
    prev.t_ns = samples.front().t_ns;
    KeyframeState curr = propagate_chain(prev, samples, gravity.vec());
    curr.ba = prev.ba;
    curr.bg = prev.bg;

    PreintegratedImu p = preintegrate(samples, prev.ba, prev.bg, ImuNoiseModel{});
    ImuResidual res = imu_residual(p, prev, curr, gravity);
    CHECK(res.r.norm() < 1e-8);
}

TEST_CASE("residual Jacobians match central finite differences") {
    const GravityVector gravity;
    std::mt19937_64 r(61);
    const double h = 1e-6;
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
        SmoothSignal sig{100 + static_cast<uint64_t>(inst)};
        auto samples = sig.sample(0.3, 100.0);
        KeyframeState prev = random_state(r);
        KeyframeState curr = random_state(r);
        PreintegratedImu p = preintegrate(samples, prev.ba, prev.bg, ImuNoiseModel{});
        ImuResidual res = imu_residual(p, prev, curr, gravity);

        for (int side = 0; side < 2; ++side) {
            Eigen::Matrix<double, 15, 15> fd;
            for (int d = 0; d < 15; ++d) {
                Vector15 delta = Vector15::Zero();
                delta[d] = h;
                KeyframeState pp = side == 0 ? state_boxplus(prev, delta) : prev;
                KeyframeState pc = side == 1 ? state_boxplus(curr, delta) : curr;
                ImuResidual rp = imu_residual(p, pp, pc, gravity);
                delta[d] = -h;
                KeyframeState mp = side == 0 ? state_boxplus(prev, delta) : prev;
                KeyframeState mc = side == 1 ? state_boxplus(curr, delta) : curr;
                ImuResidual rm = imu_residual(p, mp, mc, gravity);
                fd.col(d) = (rp.r - rm.r) / (2 * h);
            }
            const auto& J = side == 0 ? res.J_prev : res.J_curr;
            const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
            const double err = (J - fd).cwiseAbs().maxCoeff() / scale;
            worst = std::max(worst, err);
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("covariance is statistically consistent") {
    // chi-square of preintegration errors under the propagated covariance,
    // 15 DoF: mean over 1000 noisy re-integrations must sit near 15.
    SmoothSignal sig{71};
    auto clean = sig.sample(0.5, 200.0);
    ImuNoiseModel noise;  // EuRoC-class defaults
    const Vector3d ba0(0.01, -0.02, 0.01), bg0(0.002, 0.001, -0.002);
    PreintegratedImu ref = preintegrate(clean, ba0, bg0, noise);
    Matrix15 info = ref.covariance.inverse();

    std::mt19937_64 r(500);
    std::normal_distribution<double> n01(0.0, 1.0);
    auto v3 = [&]() { return Vector3d(n01(r), n01(r), n01(r)); };

    double chi_sum = 0.0;
    const int trials = 1000;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<ImuSample> noisy = clean;
        Vector3d ba = ba0, bg = bg0;
        for (size_t k = 0; k < noisy.size(); ++k) {
            const double dt =
                k == 0 ? static_cast<double>(noisy[1].t_ns - noisy[0].t_ns) * 1e-9
                       : static_cast<double>(noisy[k].t_ns - noisy[k - 1].t_ns) * 1e-9;
            if (k > 0) {
                ba += noise.accel_walk * std::sqrt(dt) * v3();
                bg += noise.gyro_walk * std::sqrt(dt) * v3();
            }
            noisy[k].accel += (ba - ba0) + noise.accel_noise / std::sqrt(dt) * v3();
            noisy[k].gyro += (bg - bg0) + noise.gyro_noise / std::sqrt(dt) * v3();
        }
        PreintegratedImu p = preintegrate(noisy, ba0, bg0, noise);
        Vector15 e;
        e.segment<3>(kIdxP) = p.alpha - ref.alpha;
        e.segment<3>(kIdxV) = p.beta - ref.beta;
        e.segment<3>(kIdxTheta) = quat_boxminus(p.gamma, ref.gamma);
        e.segment<3>(kIdxBa) = ba - ba0;
        e.segment<3>(kIdxBg) = bg - bg0;
        chi_sum += e.dot(info * e);
    }
    const double mean = chi_sum / trials;
    CHECK(mean > 12.0);
    CHECK(mean < 18.0);
}
