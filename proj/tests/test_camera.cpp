#include <catch2/catch_amalgamated.hpp>
#include <nlohmann/json.hpp>

#include "pivot/camera.hpp"
#include "test_util.hpp"

using namespace pivot;

TEST_CASE("point on the optical axis projects to the principal point") {
    const CameraModel cam = testutil::basic_camera();
    const Eigen::Vector2d px = project(cam, {0.0, 0.0, 1.0});
    REQUIRE(px.x() == cam.cx);
    REQUIRE(px.y() == cam.cy);
}

TEST_CASE("hand pinhole computation") {
    // u = fx * x / z + cx = 500 * 0.1 / 1 + 320 = 370
    const CameraModel cam = testutil::basic_camera();
    const Eigen::Vector2d px = project(cam, {0.1, 0.0, 1.0});
    REQUIRE(px.x() == Catch::Approx(370.0).margin(1e-12));
    REQUIRE(px.y() == Catch::Approx(240.0).margin(1e-12));
}

TEST_CASE("non-positive depth is rejected") {
    const CameraModel cam = testutil::basic_camera();
    REQUIRE_THROWS_AS(project(cam, {0.1, 0.0, 0.0}), NonPositiveDepth);
    REQUIRE_THROWS_AS(project(cam, {0.1, 0.0, -1.0}), NonPositiveDepth);
}

TEST_CASE("project then unproject recovers random in-frustum points") {
    CameraModel cam = testutil::basic_camera();
    // A non-trivial rigid extrinsic: rotation about z plus a translation.
    const double c = std::cos(0.3), s = std::sin(0.3);
    cam.extrinsic << c, -s, 0, 0.2,
                     s,  c, 0, -0.1,
                     0,  0, 1, 1.5,
                     0,  0, 0, 1;
    Rng rng(11);
    for (int i = 0; i < 500; ++i) {
        const Eigen::Vector3d p{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                                rng.uniform(-0.5, 0.5)};
        const Eigen::Vector3d p_cam = cam.to_camera_frame(p);
        const Eigen::Vector2d px = project(cam, p);
        const Eigen::Vector3d back = unproject(cam, px, p_cam.z());
        REQUIRE((back - p).norm() <= 1e-9 * std::max(1.0, p.norm()));
    }
}

TEST_CASE("camera config uses the exact documented field names") {
    const nlohmann::json j = {
        {"fx", 500.0}, {"fy", 510.0}, {"cx", 320.0}, {"cy", 240.0},
        {"image_w", 640}, {"image_h", 480},
        {"extrinsic", {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 2.0, 0, 0, 0, 1}}};
    const CameraModel cam = CameraModel::from_json(j);
    REQUIRE(cam.fy == 510.0);
    REQUIRE(cam.extrinsic(2, 3) == 2.0);

    nlohmann::json missing = j;
    missing.erase("fx");
    REQUIRE_THROWS_AS(CameraModel::from_json(missing), ConfigError);

    nlohmann::json bad = j;
    bad["extrinsic"] = {1, 2, 3};
    REQUIRE_THROWS_AS(CameraModel::from_json(bad), ConfigError);
}

TEST_CASE("camera validation") {
    CameraModel cam = testutil::basic_camera();
    cam.fx = 0.0;
    REQUIRE_THROWS_AS(cam.validate(), ConfigError);
    cam = testutil::basic_camera();
    cam.cx = 1000.0;
    REQUIRE_THROWS_AS(cam.validate(), ConfigError);
}
