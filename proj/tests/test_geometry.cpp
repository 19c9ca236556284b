#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "svba/geometry.hpp"

using namespace svba;

namespace {
std::mt19937_64 rng(42);
Vector3d rand_vec(double scale) {
    std::normal_distribution<double> n(0.0, scale);
    return Vector3d(n(rng), n(rng), n(rng));
}
Quaterniond rand_quat() { return quat_from_rotvec(rand_vec(1.0)); }
}  // namespace

TEST_CASE("quat exp/log basics") {
    CHECK(quat_exp(Vector3d::Zero()).isApprox(Quaterniond::Identity()));

    // half-turn about x: boxplus(identity, [pi,0,0]) = exp(pi/2 x) = (0,1,0,0)
    Quaterniond h = quat_boxplus(Quaterniond::Identity(), Vector3d(M_PI, 0, 0));
    CHECK(std::abs(h.w()) < 1e-12);
    CHECK(h.x() == doctest::Approx(1.0).epsilon(1e-12));

    // log of the half-turn
    Vector3d back = quat_boxminus(Quaterniond(0, 1, 0, 0), Quaterniond::Identity());
    CHECK((back - Vector3d(M_PI, 0, 0)).norm() < 1e-12);

    // tiny angles hit the Taylor branch
    Vector3d tiny(1e-12, -2e-12, 3e-13);
    CHECK((quat_to_rotvec(quat_from_rotvec(tiny)) - tiny).norm() < 1e-18);
}

TEST_CASE("boxplus/boxminus are mutually inverse") {
    for (int i = 0; i < 200; ++i) {
        Quaterniond q = rand_quat();
        Vector3d d = rand_vec(0.8);
        if (d.norm() >= M_PI) continue;
        Vector3d rec = quat_boxminus(quat_boxplus(q, d), q);
        CHECK((rec - d).norm() < 1e-9);
        CHECK(quat_boxminus(q, q).norm() < 1e-12);
        CHECK(quat_boxplus(q, Vector3d::Zero()).coeffs().isApprox(q.coeffs()));
    }
}

TEST_CASE("boxminus takes the short geodesic") {
    for (int i = 0; i < 100; ++i) {
        Quaterniond q1 = rand_quat();
        Quaterniond q2 = rand_quat();
        CHECK(quat_boxminus(q1, q2).norm() <= M_PI + 1e-12);
        // sign of a quaternion is irrelevant
        Quaterniond neg(-q1.w(), -q1.x(), -q1.y(), -q1.z());
        CHECK((quat_boxminus(q1, q2) - quat_boxminus(neg, q2)).norm() < 1e-12);
    }
}

TEST_CASE("rotation matrices are orthonormal") {
    for (int i = 0; i < 50; ++i) {
        Matrix3d R = rand_quat().toRotationMatrix();
        CHECK((R.transpose() * R - Matrix3d::Identity()).norm() < 1e-9);
        CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("SO3 right Jacobian matches its defining expansion") {
    for (int i = 0; i < 100; ++i) {
        Vector3d phi = rand_vec(1.0);
        Matrix3d Jr = so3_right_jacobian(phi);
        CHECK((so3_right_jacobian_inv(phi) * Jr - Matrix3d::Identity()).norm() < 1e-9);

        // Exp(phi + d) ~ Exp(phi) Exp(Jr d)
        Vector3d d = rand_vec(1e-5);
        Quaterniond lhs = quat_from_rotvec(phi + d);
        Quaterniond rhs = quat_from_rotvec(phi) * quat_from_rotvec(Jr * d);
        CHECK(quat_boxminus(lhs, rhs).norm() < 1e-9);
    }
    // small-angle limit
    CHECK((so3_right_jacobian(Vector3d::Zero()) - Matrix3d::Identity()).norm() < 1e-12);
}

TEST_CASE("skew is the cross product matrix") {
    Vector3d a = rand_vec(1.0), b = rand_vec(1.0);
    CHECK((skew(a) * b - a.cross(b)).norm() < 1e-15);
    CHECK((skew(a) + skew(a).transpose()).norm() == 0.0);
}

TEST_CASE("pose transform and inverse") {
    CHECK((Pose::Identity().transform(Vector3d(1, 2, 3)) - Vector3d(1, 2, 3)).norm() == 0.0);

    Pose rot90;
    rot90.q = quat_from_rotvec(Vector3d(0, 0, M_PI / 2));
    CHECK((rot90.transform(Vector3d(1, 0, 0)) - Vector3d(0, 1, 0)).norm() < 1e-12);

    for (int i = 0; i < 50; ++i) {
        Pose p{rand_quat(), rand_vec(2.0)};
        Vector3d x = rand_vec(3.0);
        CHECK((p.inverse().transform(p.transform(x)) - x).norm() < 1e-12);
        Pose ident = p.compose(p.inverse());
        CHECK(ident.p.norm() < 1e-9);
        CHECK(quat_boxminus(ident.q, Quaterniond::Identity()).norm() < 1e-9);

        // composition associativity acting on points
        Pose q{rand_quat(), rand_vec(2.0)};
        CHECK((p.compose(q).transform(x) - p.transform(q.transform(x))).norm() < 1e-10);
    }
}

TEST_CASE("camera pose from IMU pose and extrinsics") {
    Extrinsics ident;
    Pose cam = imu_pose_to_camera_pose(Pose::Identity(), ident);
    CHECK(cam.p.norm() == 0.0);
    CHECK(quat_boxminus(cam.q, Quaterniond::Identity()).norm() == 0.0);

    Extrinsics shift;
    shift.p = Vector3d(0.1, 0, 0);
    CHECK((imu_pose_to_camera_pose(Pose::Identity(), shift).p - Vector3d(0.1, 0, 0)).norm() == 0.0);

    Pose imu;
    imu.q = quat_from_rotvec(Vector3d(0, 0, M_PI));
    CHECK((imu_pose_to_camera_pose(imu, shift).p - Vector3d(-0.1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("projection pipeline") {
    CameraIntrinsics intr;  // EuRoC-class, zero distortion by default

    SUBCASE("principal point maps to the optical axis") {
        auto b = back_project(Vector2d(intr.cx, intr.cy), intr);
        REQUIRE(b.has_value());
        CHECK((*b - Vector3d(0, 0, 1)).norm() < 1e-12);
    }

    SUBCASE("pinhole inversion") {
        CameraIntrinsics simple;
        simple.fx = simple.fy = 100;
        simple.cx = simple.cy = 0;
        auto b = back_project(Vector2d(100, 0), simple);
        REQUIRE(b.has_value());
        CHECK((*b - Vector3d(1, 0, 1)).norm() < 1e-12);
    }

    SUBCASE("distorted round trips") {
        CameraIntrinsics dist = intr;
        dist.k1 = -0.28340811;
        dist.k2 = 0.07395907;
        dist.p1 = 0.00019359;
        dist.p2 = 1.76187114e-05;
        std::uniform_real_distribution<double> ux(0.0, dist.width - 1.0);
        std::uniform_real_distribution<double> uy(0.0, dist.height - 1.0);
        for (int i = 0; i < 500; ++i) {
            Vector2d u(ux(rng), uy(rng));
            auto b = back_project(u, dist);
            REQUIRE(b.has_value());
            Vector2d re = project_to_pixel(Vector2d(b->x(), b->y()), dist);
            CHECK((re - u).norm() < 1e-6);
        }
        // forward-then-inverse on normalized points
        std::uniform_real_distribution<double> un(-0.6, 0.6);
        for (int i = 0; i < 500; ++i) {
            Vector2d n(un(rng), un(rng));
            Vector2d d = distort_normalized(n, dist);
            auto n2 = undistort_pixel(Vector2d(dist.fx * d.x() + dist.cx, dist.fy * d.y() + dist.cy),
                                      dist);
            REQUIRE(n2.has_value());
            CHECK((*n2 - n).norm() < 1e-8);
        }
    }

    SUBCASE("distortion Jacobian matches finite differences") {
        CameraIntrinsics dist = intr;
        dist.k1 = -0.2;
        dist.k2 = 0.05;
        dist.p1 = 1e-3;
        dist.p2 = -5e-4;
        for (int i = 0; i < 100; ++i) {
            Vector2d n = Vector2d(rand_vec(0.3).x(), rand_vec(0.3).y());
            Eigen::Matrix2d J = distort_jacobian(n, dist);
            const double h = 1e-7;
            for (int c = 0; c < 2; ++c) {
                Vector2d np = n, nm = n;
                np[c] += h;
                nm[c] -= h;
                Vector2d fd = (distort_normalized(np, dist) - distort_normalized(nm, dist)) / (2 * h);
                CHECK((fd - J.col(c)).norm() < 1e-6);
            }
        }
    }

    SUBCASE("image bounds") {
        CHECK(intr.in_image(Vector2d(0, 0)));
        CHECK(intr.in_image(Vector2d(751.5, 479.5)));
        CHECK_FALSE(intr.in_image(Vector2d(-0.1, 10)));
        CHECK_FALSE(intr.in_image(Vector2d(752.0, 10)));
    }
}

TEST_CASE("gravity vector") {
    GravityVector g;
    CHECK((g.vec() - Vector3d(0, 0, -9.81)).norm() == 0.0);
    GravityVector g2{9.80665};
    CHECK(g2.vec().norm() == doctest::Approx(9.80665).epsilon(1e-15));
    CHECK(g2.vec().z() < 0);
}
