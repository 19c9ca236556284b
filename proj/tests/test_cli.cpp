#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "svba/dataio.hpp"
#include "svba/evaluation.hpp"

using namespace svba;
namespace fs = std::filesystem;

namespace {

const std::string kCli = SVBA_CLI_PATH;

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args, const fs::path& log) {
    const std::string cmd = kCli + " " + args + " > " + log.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    if (rc == -1) return -1;
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

size_t count_lines(const std::string& text) {
    return static_cast<size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("simulate writes a complete bundle and is seed-deterministic") {
    fs::path root = fresh_dir("svba_cli_sim");
    fs::path a = root / "a", b = root / "b", log = root / "log.txt";

    REQUIRE(run("simulate --out " + a.string() + " --seed 5", log) == 0);
    CHECK(read_file(log).find("wrote") != std::string::npos);
    for (const char* f :
         {"imu.csv", "keyframes.csv", "tracks.csv", "calib.txt", "groundtruth.csv",
          "initial.csv"})
        CHECK(fs::exists(a / f));

    REQUIRE(run("simulate --out " + b.string() + " --seed 5", log) == 0);
    for (const char* f : {"imu.csv", "keyframes.csv", "tracks.csv", "groundtruth.csv",
                          "initial.csv"})
        CHECK(read_file(a / f) == read_file(b / f));

    SUBCASE("a different seed changes the data") {
        fs::path c = root / "c";
        REQUIRE(run("simulate --out " + c.string() + " --seed 6", log) == 0);
        CHECK(read_file(a / "initial.csv") != read_file(c / "initial.csv"));
    }

    SUBCASE("invalid specs exit 1") {
        CHECK(run("simulate --out " + (root / "x").string() + " --keyframes 1", log) == 1);
        CHECK(run("simulate --out " + (root / "y").string() + " --imu-rate 15 --kf-rate 2", log) ==
              1);
    }
}

TEST_CASE("refine recovers a perturbed noiseless dataset end to end") {
    fs::path root = fresh_dir("svba_cli_refine");
    fs::path data = root / "data", out = root / "out", log = root / "log.txt";
    REQUIRE(run("simulate --out " + data.string() + " --seed 11", log) == 0);

    REQUIRE(run("refine --in " + data.string() + " --out " + out.string(), log) == 0);
    const std::string printed = read_file(log);
    CHECK(printed.find("final_cost=") != std::string::npos);
    CHECK(printed.find("termination=") != std::string::npos);
    REQUIRE(fs::exists(out / "states.csv"));
    REQUIRE(fs::exists(out / "trajectory.tum"));
    REQUIRE(fs::exists(out / "report.json"));

    auto est = load_states_csv(out / "states.csv");
    auto truth = load_states_csv(data / "groundtruth.csv");
    TrajectoryMetrics m = evaluate_trajectory(est, truth);
    CHECK(m.ate_pos_m < 1e-3);
    CHECK(m.ate_rot_deg < 0.01);
    CHECK(m.vel_rmse_mps < 1e-3);

    SUBCASE("the structure-based mode lands on the same trajectory") {
        fs::path out2 = root / "out_sb";
        REQUIRE(run("refine --in " + data.string() + " --out " + out2.string() +
                        " --mode structure-based",
                    log) == 0);
        auto est2 = load_states_csv(out2 / "states.csv");
        auto a1 = apply_alignment(est, align_posyaw(est, truth));
        auto a2 = apply_alignment(est2, align_posyaw(est2, truth));
        REQUIRE(a1.size() == a2.size());
        for (size_t k = 0; k < a1.size(); ++k) {
            CHECK((a1[k].p - a2[k].p).norm() < 1e-4);
            CHECK(quat_boxminus(a1[k].q, a2[k].q).norm() < 1e-4);
        }
    }

    SUBCASE("missing initial states is a usage error unless derived on the fly") {
        fs::remove(data / "initial.csv");
        fs::path out3 = root / "out3";
        CHECK(run("refine --in " + data.string() + " --out " + out3.string(), log) == 1);
        CHECK(run("refine --in " + data.string() + " --out " + out3.string() +
                      " --init-from-groundtruth-perturbed --seed 3",
                  log) == 0);
        CHECK(fs::exists(out3 / "states.csv"));
    }
}

TEST_CASE("eval scores a trajectory against itself as zero") {
    fs::path root = fresh_dir("svba_cli_eval");
    fs::path data = root / "data", log = root / "log.txt";
    REQUIRE(run("simulate --out " + data.string() + " --seed 13", log) == 0);

    fs::path metrics = root / "metrics.csv";
    fs::path aligned = root / "aligned.tum";
    REQUIRE(run("eval --estimate " + (data / "groundtruth.csv").string() + " --truth " +
                    (data / "groundtruth.csv").string() + " --out " + metrics.string() +
                    " --aligned-out " + aligned.string(),
                log) == 0);

    const std::string csv = read_file(metrics);
    CHECK(csv.rfind("ate_pos_m,ate_rot_deg,vel_rmse_mps\n", 0) == 0);
    std::istringstream values(csv.substr(csv.find('\n') + 1));
    std::string cell;
    while (std::getline(values, cell, ',')) CHECK(std::abs(std::stod(cell)) < 1e-9);
    CHECK(count_lines(read_file(aligned)) == 10);
}

TEST_CASE("bench emits the sliding-window table") {
    fs::path root = fresh_dir("svba_cli_bench");
    fs::path data = root / "data", log = root / "log.txt";
    // 30 keyframes on a circle: every 10-keyframe window keeps a smooth
    // heading, so all 21 window positions are well posed
    REQUIRE(run("simulate --out " + data.string() +
                    " --traj circle --keyframes 30 --amplitude 2 --seed 17",
                log) == 0);

    fs::path csv_path = root / "bench.csv";
    REQUIRE(run("bench --in " + data.string() + " --window 10 --out " + csv_path.string(), log) ==
            0);
    const std::string csv = read_file(csv_path);
    CHECK(csv.rfind("window_index,t_start_ns,ate_pos_m,ate_rot_deg,vel_rmse_mps,solve_ms\n", 0) ==
          0);
    CHECK(count_lines(csv) == 1 + 21 + 1);  // header, 21 windows, avg
    CHECK(csv.find("\navg,,") != std::string::npos);
    // stdout carries the same table
    CHECK(read_file(log).find("window_index,t_start_ns") != std::string::npos);

    SUBCASE("window below the minimum is rejected") {
        CHECK(run("bench --in " + data.string() + " --window 2", log) == 1);
    }
}

TEST_CASE("jactest self check and fault injection") {
    fs::path root = fresh_dir("svba_cli_jactest");
    fs::path log = root / "log.txt";
    CHECK(run("jactest --trials 20", log) == 0);
    CHECK(read_file(log).find("worst relative error") != std::string::npos);
    // the deliberately broken chain-rule sign must be caught
    CHECK(run("jactest --trials 20 --inject-dcdt-sign-flip", log) == 2);
    CHECK(run("jactest --trials 0", log) == 1);
}

TEST_CASE("usage errors exit 1") {
    fs::path root = fresh_dir("svba_cli_usage");
    fs::path log = root / "log.txt";
    CHECK(run("no-such-command", log) == 1);
    CHECK(run("refine --out /tmp/nowhere", log) == 1);   // missing required --in
    CHECK(run("", log) == 1);                            // missing subcommand
    CHECK(run("--help", log) == 0);
    CHECK(read_file(log).find("simulate") != std::string::npos);
}

TEST_CASE("config file supplies defaults that flags override") {
    fs::path root = fresh_dir("svba_cli_config");
    fs::path log = root / "log.txt";
    fs::path cfg = root / "svba.ini";
    {
        std::ofstream f(cfg);
        f << "[simulate]\n"
          << "keyframes=12\n"
          << "seed=21\n";
    }

    fs::path a = root / "a";
    REQUIRE(run("--config " + cfg.string() + " simulate --out " + a.string(), log) == 0);
    CHECK(load_bundle(a).keyframe_times_ns.size() == 12);

    fs::path b = root / "b";
    REQUIRE(run("--config " + cfg.string() + " simulate --out " + b.string() + " --keyframes 8",
                log) == 0);
    CHECK(load_bundle(b).keyframe_times_ns.size() == 8);
}
