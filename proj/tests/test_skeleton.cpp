#include <doctest.h>

#include <numbers>

#include "fusion/error.h"
#include "fusion/math.h"
#include "fusion/skeleton.h"
#include "test_support.h"

using namespace fusion;

TEST_CASE("quaternion basics") {
  const Quat q = from_axis_angle({0, 0, 1}, std::numbers::pi / 2);
  const Vec3 v = rotate(q, {1, 0, 0});
  CHECK(v.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(v.y == doctest::Approx(1.0));
  CHECK(angle_between(q, Quat{-q.w, -q.x, -q.y, -q.z}) == doctest::Approx(0.0));
  CHECK(normalized(q * inverse(q)).w == doctest::Approx(1.0));
}

TEST_CASE("slerp endpoints are exact and the midpoint halves the angle") {
  const Quat a = Quat::identity();
  const Quat b = from_axis_angle({0, 1, 0}, deg_to_rad(90));
  CHECK(slerp(a, b, 0.0) == a);
  CHECK(slerp(a, b, 1.0) == b);
  CHECK(angle_between(slerp(a, b, 0.5), from_axis_angle({0, 1, 0}, deg_to_rad(45))) < 1e-6);
}

TEST_CASE("zxy euler round trip outside the gimbal band") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-170.0, 170.0), x(-80.0, 80.0);
  for (int i = 0; i < 2000; ++i) {
    const Quat q = euler_deg_zxy(x(rng), u(rng), u(rng));
    const auto zxy = quat_to_euler_zxy(q);
    const Quat back = euler_to_quat({Axis::Z, Axis::X, Axis::Y}, zxy);
    REQUIRE(angle_between(q, back) < 1e-9);
  }
}

TEST_CASE("zxy decomposition at gimbal lock still reproduces the rotation") {
  const Quat q = euler_deg_zxy(90.0, 30.0, 10.0);
  const auto zxy = quat_to_euler_zxy(q);
  CHECK(zxy[2] == 0.0);
  CHECK(angle_between(q, euler_to_quat({Axis::Z, Axis::X, Axis::Y}, zxy)) < 1e-6);
}

TEST_CASE("interpolate_pose endpoints, midpoint and symmetry") {
  PoseFrame a = PoseFrame::identity(2);
  PoseFrame b = PoseFrame::identity(2);
  b.rotations[1] = from_axis_angle({1, 0, 0}, deg_to_rad(90));
  b.root_translation = {2, 0, 0};
  CHECK(interpolate_pose(a, b, 0.0) == a);
  CHECK(interpolate_pose(a, b, 1.0) == b);
  const PoseFrame mid = interpolate_pose(a, b, 0.5);
  CHECK(angle_between(mid.rotations[1], from_axis_angle({1, 0, 0}, deg_to_rad(45))) < 1e-6);
  CHECK(mid.root_translation.x == doctest::Approx(1.0));

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> t(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const PoseFrame p = testing::random_pose(rng, 5);
    const PoseFrame q = testing::random_pose(rng, 5);
    const double s = t(rng);
    const PoseFrame x = interpolate_pose(p, q, s);
    const PoseFrame y = interpolate_pose(q, p, 1.0 - s);
    for (std::size_t j = 0; j < 5; ++j) {
      REQUIRE(std::abs(x.rotations[j].norm() - 1.0) < 1e-6);
      REQUIRE(angle_between(x.rotations[j], y.rotations[j]) < 1e-6);
    }
  }
}

TEST_CASE("interpolate_pose rejects different joint counts") {
  CHECK_THROWS_AS(interpolate_pose(PoseFrame::identity(2), PoseFrame::identity(3), 0.5), Error);
}

TEST_CASE("skeleton validation") {
  auto mk = [](std::vector<Joint> j) { return Skeleton(std::move(j)); };
  CHECK_NOTHROW(mk({{"root", -1, {}, {}, {}}, {"a", 0, {}, {}, {}}}));
  CHECK_THROWS_AS(mk({{"root", -1, {}, {}, {}}, {"a", 2, {}, {}, {}}, {"b", 0, {}, {}, {}}}), Error);
  CHECK_THROWS_AS(mk({{"root", -1, {}, {}, {}}, {"root", 0, {}, {}, {}}}), Error);
  CHECK_THROWS_AS(mk({{"root", -1, {}, {}, {}}, {"x", -1, {}, {}, {}}}), Error);
  CHECK_THROWS_AS(mk({{"root", -1, Quat{2, 0, 0, 0}, {}, {}}}), Error);
}

TEST_CASE("humanoid skeleton") {
  const Skeleton s = make_humanoid_skeleton();
  CHECK(s.joint(0).name == "Hips");
  for (const char* name : {"Spine", "Chest", "Neck", "Head", "Jaw", "LeftUpperArm", "RightHand",
                           "LeftIndexProximal", "RightLittleDistal", "LeftToes"}) {
    CHECK(s.find(name).has_value());
  }
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s.joint(i).parent < static_cast<int>(i));
  try {
    s.index_of("Tail");
    FAIL("expected SkeletonMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SkeletonMismatch);
  }
  const PoseFrame rest = rest_pose(s);
  CHECK_NOTHROW(check_pose(s, rest));
  CHECK_THROWS_AS(check_pose(s, PoseFrame::identity(3)), Error);
}
