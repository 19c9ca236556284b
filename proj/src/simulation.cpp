#include "svba/simulation.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace svba {
namespace {

// Family-specific channel scales and frequency multipliers: p_k(t) =
// amplitude * scale_k * sin(freq_k * rate * t + phase_k), except the circle,
// which is handled directly.
struct Channels {
    double scale[3];
    double freq[3];
    double phase[3];
};

Channels channels_for(TrajectorySpec::Family family) {
    switch (family) {
        case TrajectorySpec::Family::kSinusoid3d:
            return Channels{{1.0, 0.8, 0.4}, {1.0, 0.9, 1.3}, {0.0, M_PI / 3.0, 0.0}};
        case TrajectorySpec::Family::kFigureEight:
            return Channels{{1.0, 0.5, 0.3}, {1.0, 2.0, 0.9}, {0.0, 0.0, 0.0}};
        case TrajectorySpec::Family::kCircle:
        default:
            return Channels{{1.0, 1.0, 0.0}, {1.0, 1.0, 0.0}, {M_PI / 2.0, 0.0, 0.0}};
    }
}

Quaterniond euler_zyx_quat(const Vector3d& rpy) {
    return Quaterniond(Eigen::AngleAxisd(rpy.z(), Vector3d::UnitZ()) *
                       Eigen::AngleAxisd(rpy.y(), Vector3d::UnitY()) *
                       Eigen::AngleAxisd(rpy.x(), Vector3d::UnitX()));
}

// Body angular velocity for the ZYX Euler parameterization R = Rz Ry Rx.
Vector3d euler_zyx_body_rates(const Vector3d& rpy, const Vector3d& rpy_rate) {
    const double sphi = std::sin(rpy.x()), cphi = std::cos(rpy.x());
    const double sth = std::sin(rpy.y()), cth = std::cos(rpy.y());
    const double dphi = rpy_rate.x(), dth = rpy_rate.y(), dpsi = rpy_rate.z();
    return Vector3d(dphi - sth * dpsi, cphi * dth + sphi * cth * dpsi,
                    -sphi * dth + cphi * cth * dpsi);
}

}  // namespace

Vector3d GroundTruth::position(double t) const {
    const double A = spec.amplitude, w = spec.angular_rate;
    if (is_static()) t = 0.0;
    const Channels ch = channels_for(spec.family);
    Vector3d p;
    for (int k = 0; k < 3; ++k) p[k] = A * ch.scale[k] * std::sin(ch.freq[k] * w * t + ch.phase[k]);
    return p;
}

Vector3d GroundTruth::velocity(double t) const {
    if (is_static()) return Vector3d::Zero();
    const double A = spec.amplitude, w = spec.angular_rate;
    const Channels ch = channels_for(spec.family);
    Vector3d v;
    for (int k = 0; k < 3; ++k) {
        const double wk = ch.freq[k] * w;
        v[k] = A * ch.scale[k] * wk * std::cos(wk * t + ch.phase[k]);
    }
    return v;
}

Vector3d GroundTruth::accel_world(double t) const {
    if (is_static()) return Vector3d::Zero();
    const double A = spec.amplitude, w = spec.angular_rate;
    const Channels ch = channels_for(spec.family);
    Vector3d a;
    for (int k = 0; k < 3; ++k) {
        const double wk = ch.freq[k] * w;
        a[k] = -A * ch.scale[k] * wk * wk * std::sin(wk * t + ch.phase[k]);
    }
    return a;
}

void GroundTruth::euler_and_rates(double t, Vector3d& rpy, Vector3d& rpy_rate) const {
    const double w = spec.angular_rate;
    const Vector3d v = velocity(t);
    const Vector3d a = accel_world(t);
    const double vxy2 = v.x() * v.x() + v.y() * v.y();
    // Yaw follows the horizontal velocity heading; small roll/pitch bob keeps
    // all gyro axes exercised.
    rpy.x() = 0.12 * std::sin(0.9 * w * t);
    rpy.y() = 0.10 * std::sin(1.1 * w * t + 0.5);
    rpy.z() = std::atan2(v.y(), v.x());
    rpy_rate.x() = 0.12 * 0.9 * w * std::cos(0.9 * w * t);
    rpy_rate.y() = 0.10 * 1.1 * w * std::cos(1.1 * w * t + 0.5);
    rpy_rate.z() = vxy2 > 1e-12 ? (v.x() * a.y() - v.y() * a.x()) / vxy2 : 0.0;
}

Quaterniond GroundTruth::attitude(double t) const {
    if (is_static()) return Quaterniond::Identity();
    Vector3d rpy, rpy_rate;
    euler_and_rates(t, rpy, rpy_rate);
    return euler_zyx_quat(rpy);
}

Vector3d GroundTruth::omega_body(double t) const {
    if (is_static()) return Vector3d::Zero();
    Vector3d rpy, rpy_rate;
    euler_and_rates(t, rpy, rpy_rate);
    return euler_zyx_body_rates(rpy, rpy_rate);
}

GroundTruth generate_ground_truth(const TrajectorySpec& spec, const GravityVector& gravity) {
    if (!spec.valid())
        throw std::invalid_argument(
            "trajectory spec: duration must be positive and the IMU rate at least 10x the "
            "keyframe rate");

    GroundTruth gt;
    gt.spec = spec;
    gt.gravity = gravity;

    const int64_t imu_dt_ns = std::llround(1e9 / spec.imu_rate_hz);
    const int64_t samples_per_kf = std::llround(spec.imu_rate_hz / spec.keyframe_rate_hz);
    const int64_t kf_dt_ns = imu_dt_ns * samples_per_kf;
    const int n_kf =
        static_cast<int>(std::floor(spec.duration * 1e9 / static_cast<double>(kf_dt_ns) + 1e-6)) +
        1;
    if (n_kf < 2) throw std::invalid_argument("trajectory spec: fewer than 2 keyframes");

    const int n_imu = static_cast<int>((n_kf - 1) * samples_per_kf) + 1;
    gt.imu_times_ns.reserve(n_imu);
    for (int i = 0; i < n_imu; ++i) gt.imu_times_ns.push_back(i * imu_dt_ns);
    gt.kf_times_ns.reserve(n_kf);
    for (int k = 0; k < n_kf; ++k) gt.kf_times_ns.push_back(k * kf_dt_ns);

    const Vector3d g_vec = gravity.vec();
    gt.ideal_samples.reserve(n_imu);
    for (int64_t t_ns : gt.imu_times_ns) {
        const double t = static_cast<double>(t_ns) * 1e-9;
        ImuSample s;
        s.t_ns = t_ns;
        s.gyro = gt.omega_body(t);
        s.accel = gt.attitude(t).conjugate() * (gt.accel_world(t) - g_vec);
        gt.ideal_samples.push_back(s);
    }

    // Discrete ground truth: the same midpoint scheme preintegration uses,
    // run on the ideal samples in the world frame. Keyframe states therefore
    // satisfy the IMU factors of a noise-free dataset to rounding error.
    KeyframeState s;
    s.t_ns = gt.imu_times_ns.front();
    s.p = gt.position(0.0);
    s.v = gt.velocity(0.0);
    s.q = gt.attitude(0.0);
    gt.kf_states.reserve(n_kf);
    size_t next_kf = 0;
    auto record = [&](const KeyframeState& st) {
        if (next_kf < gt.kf_times_ns.size() && st.t_ns == gt.kf_times_ns[next_kf]) {
            gt.kf_states.push_back(st);
            ++next_kf;
        }
    };
    record(s);
    for (int i = 0; i + 1 < n_imu; ++i) {
        const ImuSample& s0 = gt.ideal_samples[i];
        const ImuSample& s1 = gt.ideal_samples[i + 1];
        const double dt = static_cast<double>(s1.t_ns - s0.t_ns) * 1e-9;
        const Vector3d w_mid = 0.5 * (s0.gyro + s1.gyro);
        const Quaterniond q1 = (s.q * quat_from_rotvec(w_mid * dt)).normalized();
        const Vector3d acc = 0.5 * (s.q * s0.accel + q1 * s1.accel) + g_vec;
        s.p += s.v * dt + 0.5 * acc * dt * dt;
        s.v += acc * dt;
        s.q = q1;
        s.t_ns = s1.t_ns;
        record(s);
    }
    if (gt.kf_states.size() != static_cast<size_t>(n_kf))
        throw std::logic_error("keyframe grid does not align with the IMU grid");
    return gt;
}

std::vector<ImuSample> synthesize_imu(const GroundTruth& gt, const ImuNoiseModel& noise,
                                      const Vector3d& true_ba, const Vector3d& true_bg,
                                      uint64_t seed, bool add_noise) {
    if (add_noise && !noise.valid())
        throw std::invalid_argument("synthesize_imu: noise densities must be positive");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    auto draw3 = [&]() { return Vector3d(n01(rng), n01(rng), n01(rng)); };

    std::vector<ImuSample> out;
    out.reserve(gt.ideal_samples.size());
    Vector3d ba = true_ba;
    Vector3d bg = true_bg;
    for (size_t k = 0; k < gt.ideal_samples.size(); ++k) {
        ImuSample s = gt.ideal_samples[k];
        double dt = 0.0;
        if (k > 0) dt = static_cast<double>(s.t_ns - gt.ideal_samples[k - 1].t_ns) * 1e-9;
        else if (gt.ideal_samples.size() > 1)
            dt = static_cast<double>(gt.ideal_samples[1].t_ns - s.t_ns) * 1e-9;
        if (add_noise && k > 0) {
            ba += noise.accel_walk * std::sqrt(dt) * draw3();
            bg += noise.gyro_walk * std::sqrt(dt) * draw3();
        }
        s.gyro += bg;
        s.accel += ba;
        if (add_noise && dt > 0.0) {
            s.gyro += noise.gyro_noise / std::sqrt(dt) * draw3();
            s.accel += noise.accel_noise / std::sqrt(dt) * draw3();
        }
        out.push_back(s);
    }
    return out;
}

TrackSet synthesize_tracks(const GroundTruth& gt, const SceneSpec& scene, const Calibration& calib,
                           double pixel_sigma_px, uint64_t seed) {
    if (scene.landmark_count <= 0)
        throw std::invalid_argument("synthesize_tracks: landmark_count must be positive");

    const size_t n_kf = gt.kf_states.size();
    std::vector<FrameCam> frames;
    frames.reserve(n_kf);
    for (const KeyframeState& s : gt.kf_states) frames.push_back(make_frame_cam(s, calib.extrinsics));

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);

    auto project = [&](const FrameCam& f, const Vector3d& lm) -> std::optional<Vector2d> {
        const Vector3d pc = f.Rc.transpose() * (lm - f.c);
        if (pc.z() < scene.min_depth || pc.z() > scene.max_depth) return std::nullopt;
        const Vector2d uv =
            project_to_pixel(Vector2d(pc.x() / pc.z(), pc.y() / pc.z()), calib.intrinsics);
        if (!calib.intrinsics.in_image(uv)) return std::nullopt;
        return uv;
    };

    TrackSet set;
    const int max_attempts = scene.landmark_count * 4000;
    int attempts = 0;
    while (static_cast<int>(set.landmarks.size()) < scene.landmark_count) {
        if (++attempts > max_attempts)
            throw std::runtime_error(
                "synthesize_tracks: could not place enough landmarks visible from >= 2 keyframes; "
                "enlarge the scene box or depth range");
        Vector3d lm;
        for (int k = 0; k < 3; ++k)
            lm[k] = scene.box_min[k] + u01(rng) * (scene.box_max[k] - scene.box_min[k]);

        std::vector<std::pair<int, Vector2d>> views;
        for (size_t i = 0; i < n_kf; ++i)
            if (auto uv = project(frames[i], lm)) views.emplace_back(static_cast<int>(i), *uv);
        if (views.size() < 2) continue;

        FeatureTrack track;
        track.feature_id = static_cast<int64_t>(set.landmarks.size());
        for (auto& [kf, uv] : views) {
            TrackObservation obs;
            obs.kf_index = kf;
            obs.pixel = uv;
            if (pixel_sigma_px > 0.0)
                obs.pixel += pixel_sigma_px * Vector2d(n01(rng), n01(rng));
            std::optional<Vector3d> bearing = back_project(obs.pixel, calib.intrinsics);
            if (!bearing) continue;
            obs.bearing = *bearing;
            track.obs.push_back(obs);
        }
        if (track.obs.size() < 2) continue;
        set.landmarks.push_back(lm);
        set.tracks.push_back(std::move(track));
    }
    return set;
}

std::vector<KeyframeState> perturb_states(std::span<const KeyframeState> truth,
                                          const PerturbationSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    auto draw3 = [&]() { return Vector3d(n01(rng), n01(rng), n01(rng)); };

    std::vector<KeyframeState> out(truth.begin(), truth.end());
    for (KeyframeState& s : out) {
        Vector15 d;
        d.segment<3>(kIdxP) = spec.pos_sigma * draw3();
        d.segment<3>(kIdxV) = spec.vel_sigma * draw3();
        d.segment<3>(kIdxTheta) = spec.rot_sigma * draw3();
        d.segment<3>(kIdxBa) = spec.ba_sigma * draw3();
        d.segment<3>(kIdxBg) = spec.bg_sigma * draw3();
        s = state_boxplus(s, d);
    }
    return out;
}

SimulatedDataset simulate_dataset(const SimOptions& opts) {
    // Independent sub-streams so that toggling one stage's randomness leaves
    // the others' draws unchanged.
    std::mt19937_64 master(opts.seed);
    const uint64_t imu_seed = master();
    const uint64_t track_seed = master();
    uint64_t perturb_seed = master();
    if (opts.perturb.seed != 0) perturb_seed = opts.perturb.seed;

    GroundTruth gt = generate_ground_truth(opts.traj, opts.calib.gravity);

    SimulatedDataset ds;
    ds.bundle.calib = opts.calib;
    ds.bundle.keyframe_times_ns = gt.kf_times_ns;
    ds.bundle.imu =
        synthesize_imu(gt, opts.calib.noise, opts.true_ba, opts.true_bg, imu_seed, opts.imu_noise);

    TrackSet tracks = synthesize_tracks(gt, opts.scene, opts.calib, opts.pixel_sigma_px, track_seed);
    ds.bundle.tracks = std::move(tracks.tracks);
    ds.landmarks = std::move(tracks.landmarks);

    ds.bundle.groundtruth = gt.kf_states;
    for (KeyframeState& s : ds.bundle.groundtruth) {
        s.ba = opts.true_ba;
        s.bg = opts.true_bg;
    }

    PerturbationSpec perturb = opts.perturb;
    perturb.seed = perturb_seed;
    ds.bundle.initial = perturb_states(ds.bundle.groundtruth, perturb);
    return ds;
}

}  // namespace svba
