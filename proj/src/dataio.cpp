#include "svba/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace svba {
namespace {

[[noreturn]] void fail(const std::filesystem::path& path, int line, const std::string& msg) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + msg);
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& msg) {
    throw std::runtime_error(path.string() + ": " + msg);
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

double parse_double(const std::string& s, const std::filesystem::path& path, int line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        fail(path, line, "expected a number, got '" + s + "'");
    return v;
}

int64_t parse_int64(const std::string& s, const std::filesystem::path& path, int line) {
    int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        fail(path, line, "expected an integer, got '" + s + "'");
    return v;
}

// Visits every non-comment, non-blank line as (line_number, fields).
template <typename Fn>
void for_each_row(const std::filesystem::path& path, int expected_fields, Fn&& fn) {
    std::ifstream in(path);
    if (!in) fail(path, "cannot open file");
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(raw);
        if (s.empty() || s[0] == '#') continue;
        std::vector<std::string> fields = split(s, ',');
        if (static_cast<int>(fields.size()) != expected_fields)
            fail(path, line,
                 "expected " + std::to_string(expected_fields) + " fields, got " +
                     std::to_string(fields.size()));
        fn(line, fields);
    }
}

std::vector<KeyframeState> load_states(const std::filesystem::path& path) {
    std::vector<KeyframeState> states;
    for_each_row(path, 17, [&](int line, const std::vector<std::string>& f) {
        KeyframeState s;
        s.t_ns = parse_int64(f[0], path, line);
        double v[16];
        for (int i = 0; i < 16; ++i) v[i] = parse_double(f[i + 1], path, line);
        s.p = Vector3d(v[0], v[1], v[2]);
        s.q = Quaterniond(v[3], v[4], v[5], v[6]);  // wxyz
        if (std::abs(s.q.norm() - 1.0) > 1e-6) fail(path, line, "quaternion is not unit length");
        s.q.normalize();
        s.v = Vector3d(v[7], v[8], v[9]);
        s.ba = Vector3d(v[10], v[11], v[12]);
        s.bg = Vector3d(v[13], v[14], v[15]);
        if (!states.empty() && s.t_ns <= states.back().t_ns)
            fail(path, line, "timestamps must be strictly increasing");
        states.push_back(s);
    });
    return states;
}

void write_or_fail(std::ofstream& out, const std::filesystem::path& path) {
    if (!out) fail(path, "cannot open file for writing");
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void save_states(std::span<const KeyframeState> states, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    write_or_fail(out, path);
    out << "# timestamp_ns, px, py, pz, qw, qx, qy, qz, vx, vy, vz, bax, bay, baz, bgx, bgy, "
           "bgz\n";
    for (const KeyframeState& s : states) {
        out << s.t_ns << ',' << fmt_double(s.p.x()) << ',' << fmt_double(s.p.y()) << ','
            << fmt_double(s.p.z()) << ',' << fmt_double(s.q.w()) << ',' << fmt_double(s.q.x())
            << ',' << fmt_double(s.q.y()) << ',' << fmt_double(s.q.z()) << ','
            << fmt_double(s.v.x()) << ',' << fmt_double(s.v.y()) << ',' << fmt_double(s.v.z())
            << ',' << fmt_double(s.ba.x()) << ',' << fmt_double(s.ba.y()) << ','
            << fmt_double(s.ba.z()) << ',' << fmt_double(s.bg.x()) << ',' << fmt_double(s.bg.y())
            << ',' << fmt_double(s.bg.z()) << '\n';
    }
}

}  // namespace

std::vector<ImuSample> load_imu_csv(const std::filesystem::path& path) {
    std::vector<ImuSample> imu;
    for_each_row(path, 7, [&](int line, const std::vector<std::string>& f) {
        ImuSample s;
        s.t_ns = parse_int64(f[0], path, line);
        s.gyro = Vector3d(parse_double(f[1], path, line), parse_double(f[2], path, line),
                          parse_double(f[3], path, line));
        s.accel = Vector3d(parse_double(f[4], path, line), parse_double(f[5], path, line),
                           parse_double(f[6], path, line));
        if (!imu.empty() && s.t_ns <= imu.back().t_ns)
            fail(path, line, "timestamps must be strictly increasing");
        imu.push_back(s);
    });
    return imu;
}

std::vector<KeyframeState> load_states_csv(const std::filesystem::path& path) {
    return load_states(path);
}

void save_states_csv(std::span<const KeyframeState> states, const std::filesystem::path& path) {
    save_states(states, path);
}

Calibration load_calibration(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(path, "cannot open file");

    std::map<std::string, std::pair<std::string, int>> kv;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(raw);
        if (s.empty() || s[0] == '#') continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos) fail(path, line, "expected 'key = value'");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (key.empty() || value.empty()) fail(path, line, "expected 'key = value'");
        if (kv.count(key)) fail(path, line, "duplicate key '" + key + "'");
        kv[key] = {value, line};
    }

    Calibration calib;
    auto take = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) fail(path, "missing key '" + key + "'");
        auto res = it->second;
        kv.erase(it);
        return res;
    };
    auto take_double = [&](const std::string& key) {
        auto [value, ln] = take(key);
        return parse_double(value, path, ln);
    };
    auto take_vec = [&](const std::string& key, int n) {
        auto [value, ln] = take(key);
        std::vector<std::string> parts = split(value, ' ');
        parts.erase(std::remove_if(parts.begin(), parts.end(),
                                   [](const std::string& p) { return p.empty(); }),
                    parts.end());
        if (static_cast<int>(parts.size()) != n)
            fail(path, ln, "expected " + std::to_string(n) + " values for '" + key + "'");
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = parse_double(parts[i], path, ln);
        return v;
    };

    calib.intrinsics.fx = take_double("fx");
    calib.intrinsics.fy = take_double("fy");
    calib.intrinsics.cx = take_double("cx");
    calib.intrinsics.cy = take_double("cy");
    calib.intrinsics.k1 = take_double("k1");
    calib.intrinsics.k2 = take_double("k2");
    calib.intrinsics.p1 = take_double("p1");
    calib.intrinsics.p2 = take_double("p2");
    calib.intrinsics.width = static_cast<int>(take_double("width"));
    calib.intrinsics.height = static_cast<int>(take_double("height"));
    Eigen::VectorXd q = take_vec("extrinsic_q_wxyz", 4);
    calib.extrinsics.q = Quaterniond(q[0], q[1], q[2], q[3]).normalized();
    Eigen::VectorXd p = take_vec("extrinsic_p_xyz", 3);
    calib.extrinsics.p = Vector3d(p[0], p[1], p[2]);
    calib.gravity.magnitude = take_double("gravity_magnitude");
    calib.noise.gyro_noise = take_double("gyro_noise_density");
    calib.noise.accel_noise = take_double("accel_noise_density");
    calib.noise.gyro_walk = take_double("gyro_random_walk");
    calib.noise.accel_walk = take_double("accel_random_walk");

    if (!kv.empty()) {
        auto& [key, rest] = *kv.begin();
        fail(path, rest.second, "unknown key '" + key + "'");
    }
    return calib;
}

void save_calibration(const Calibration& calib, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    write_or_fail(out, path);
    const CameraIntrinsics& c = calib.intrinsics;
    out << "# pinhole radtan camera, camera-to-IMU extrinsics, gravity, IMU noise\n";
    out << "fx = " << fmt_double(c.fx) << "\nfy = " << fmt_double(c.fy)
        << "\ncx = " << fmt_double(c.cx) << "\ncy = " << fmt_double(c.cy)
        << "\nk1 = " << fmt_double(c.k1) << "\nk2 = " << fmt_double(c.k2)
        << "\np1 = " << fmt_double(c.p1) << "\np2 = " << fmt_double(c.p2)
        << "\nwidth = " << c.width << "\nheight = " << c.height << "\n";
    const Quaterniond& q = calib.extrinsics.q;
    out << "extrinsic_q_wxyz = " << fmt_double(q.w()) << ' ' << fmt_double(q.x()) << ' '
        << fmt_double(q.y()) << ' ' << fmt_double(q.z()) << "\n";
    const Vector3d& p = calib.extrinsics.p;
    out << "extrinsic_p_xyz = " << fmt_double(p.x()) << ' ' << fmt_double(p.y()) << ' '
        << fmt_double(p.z()) << "\n";
    out << "gravity_magnitude = " << fmt_double(calib.gravity.magnitude) << "\n";
    out << "gyro_noise_density = " << fmt_double(calib.noise.gyro_noise) << "\n";
    out << "accel_noise_density = " << fmt_double(calib.noise.accel_noise) << "\n";
    out << "gyro_random_walk = " << fmt_double(calib.noise.gyro_walk) << "\n";
    out << "accel_random_walk = " << fmt_double(calib.noise.accel_walk) << "\n";
}

DatasetBundle load_bundle(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw std::runtime_error(dir.string() + ": not a directory");

    auto require = [&](const char* name) {
        std::filesystem::path p = dir / name;
        if (!std::filesystem::exists(p)) fail(p, "missing file");
        return p;
    };

    DatasetBundle b;
    b.calib = load_calibration(require("calib.txt"));
    b.imu = load_imu_csv(require("imu.csv"));

    std::filesystem::path kf_path = require("keyframes.csv");
    for_each_row(kf_path, 1, [&](int line, const std::vector<std::string>& f) {
        int64_t t = parse_int64(f[0], kf_path, line);
        if (!b.keyframe_times_ns.empty() && t <= b.keyframe_times_ns.back())
            fail(kf_path, line, "timestamps must be strictly increasing");
        b.keyframe_times_ns.push_back(t);
    });
    if (b.keyframe_times_ns.empty()) fail(kf_path, "no keyframes");
    if (b.imu.empty()) fail(dir / "imu.csv", "no IMU samples");
    if (b.imu.front().t_ns > b.keyframe_times_ns.front() ||
        b.imu.back().t_ns < b.keyframe_times_ns.back())
        fail(dir / "imu.csv", "IMU stream does not span the keyframe interval");

    std::unordered_map<int64_t, int> kf_index;
    for (size_t i = 0; i < b.keyframe_times_ns.size(); ++i)
        kf_index[b.keyframe_times_ns[i]] = static_cast<int>(i);

    // tracks.csv rows may appear in any order; group by feature id, then
    // sort each track's observations by keyframe index.
    std::filesystem::path tr_path = require("tracks.csv");
    std::map<int64_t, FeatureTrack> by_id;
    std::unordered_map<int64_t, std::unordered_set<int>> seen;
    for_each_row(tr_path, 4, [&](int line, const std::vector<std::string>& f) {
        int64_t id = parse_int64(f[0], tr_path, line);
        int64_t t = parse_int64(f[1], tr_path, line);
        auto it = kf_index.find(t);
        if (it == kf_index.end())
            fail(tr_path, line, "keyframe timestamp " + std::to_string(t) + " is not in keyframes.csv");
        if (!seen[id].insert(it->second).second)
            fail(tr_path, line, "duplicate observation for feature " + std::to_string(id));
        TrackObservation obs;
        obs.kf_index = it->second;
        obs.pixel = Vector2d(parse_double(f[2], tr_path, line), parse_double(f[3], tr_path, line));
        std::optional<Vector3d> bearing = back_project(obs.pixel, b.calib.intrinsics);
        if (!bearing) fail(tr_path, line, "pixel cannot be back-projected with this calibration");
        obs.bearing = *bearing;
        FeatureTrack& track = by_id[id];
        track.feature_id = id;
        track.obs.push_back(obs);
    });
    for (auto& [id, track] : by_id) {
        std::sort(track.obs.begin(), track.obs.end(),
                  [](const TrackObservation& a, const TrackObservation& c) {
                      return a.kf_index < c.kf_index;
                  });
        b.tracks.push_back(std::move(track));
    }

    std::filesystem::path gt_path = dir / "groundtruth.csv";
    if (std::filesystem::exists(gt_path)) b.groundtruth = load_states(gt_path);
    std::filesystem::path init_path = dir / "initial.csv";
    if (std::filesystem::exists(init_path)) b.initial = load_states(init_path);
    for (const auto* states : {&b.groundtruth, &b.initial}) {
        if (states->empty()) continue;
        if (states->size() != b.keyframe_times_ns.size())
            fail(states == &b.groundtruth ? gt_path : init_path,
                 "state count does not match keyframes.csv");
        for (size_t i = 0; i < states->size(); ++i)
            if ((*states)[i].t_ns != b.keyframe_times_ns[i])
                fail(states == &b.groundtruth ? gt_path : init_path,
                     "state timestamps do not match keyframes.csv");
    }
    return b;
}

void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_calibration(bundle.calib, dir / "calib.txt");

    {
        std::ofstream out(dir / "imu.csv", std::ios::binary);
        write_or_fail(out, dir / "imu.csv");
        out << "# timestamp_ns, wx, wy, wz, ax, ay, az\n";
        for (const ImuSample& s : bundle.imu)
            out << s.t_ns << ',' << fmt_double(s.gyro.x()) << ',' << fmt_double(s.gyro.y()) << ','
                << fmt_double(s.gyro.z()) << ',' << fmt_double(s.accel.x()) << ','
                << fmt_double(s.accel.y()) << ',' << fmt_double(s.accel.z()) << '\n';
    }
    {
        std::ofstream out(dir / "keyframes.csv", std::ios::binary);
        write_or_fail(out, dir / "keyframes.csv");
        out << "# timestamp_ns\n";
        for (int64_t t : bundle.keyframe_times_ns) out << t << '\n';
    }
    {
        std::ofstream out(dir / "tracks.csv", std::ios::binary);
        write_or_fail(out, dir / "tracks.csv");
        out << "# feature_id, keyframe_timestamp_ns, u_px, v_px\n";
        for (const FeatureTrack& track : bundle.tracks)
            for (const TrackObservation& obs : track.obs)
                out << track.feature_id << ','
                    << bundle.keyframe_times_ns.at(obs.kf_index) << ','
                    << fmt_double(obs.pixel.x()) << ',' << fmt_double(obs.pixel.y()) << '\n';
    }
    if (!bundle.groundtruth.empty()) save_states(bundle.groundtruth, dir / "groundtruth.csv");
    if (!bundle.initial.empty()) save_states(bundle.initial, dir / "initial.csv");
}

void save_results(std::span<const KeyframeState> states, const SolveReport& report,
                  const std::filesystem::path& dir) {
    if (states.empty()) throw std::invalid_argument("save_results: no states");
    std::filesystem::create_directories(dir);

    {
        std::filesystem::path path = dir / "trajectory.tum";
        std::ofstream out(path, std::ios::binary);
        write_or_fail(out, path);
        char buf[256];
        for (const KeyframeState& s : states) {
            std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n",
                          static_cast<double>(s.t_ns) * 1e-9, s.p.x(), s.p.y(), s.p.z(), s.q.x(),
                          s.q.y(), s.q.z(), s.q.w());
            out << buf;
        }
    }
    save_states(states, dir / "states.csv");

    nlohmann::json j;
    j["initial_cost"] = report.initial_cost;
    j["final_cost"] = report.final_cost;
    j["iterations"] = report.iterations;
    j["termination"] = report.termination;
    j["solve_ms"] = report.solve_ms;
    j["cost_trace"] = report.cost_trace;
    std::filesystem::path path = dir / "report.json";
    std::ofstream out(path, std::ios::binary);
    write_or_fail(out, path);
    out << j.dump(2) << '\n';
}

}  // namespace svba
