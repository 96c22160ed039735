#include "fusion/skeleton.h"

#include <cmath>
#include <set>

#include "fusion/error.h"

namespace fusion {

Skeleton::Skeleton(std::vector<Joint> joints) : joints_(std::move(joints)) {
  std::set<std::string> names;
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    const Joint& j = joints_[i];
    if (i == 0) {
      if (j.parent != -1) throw Error(ErrorKind::SkeletonMismatch, "first joint must be the root");
    } else if (j.parent < 0 || static_cast<std::size_t>(j.parent) >= i) {
      throw Error(ErrorKind::SkeletonMismatch, "joint '" + j.name + "' must follow its parent (single root)");
    }
    if (!names.insert(j.name).second) {
      throw Error(ErrorKind::SkeletonMismatch, "duplicate joint name '" + j.name + "'");
    }
    if (std::fabs(j.rest_rotation.norm() - 1.0) > 1e-6) {
      throw Error(ErrorKind::SkeletonMismatch, "rest rotation of '" + j.name + "' is not unit length");
    }
  }
}

std::optional<std::size_t> Skeleton::find(std::string_view name) const {
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    if (joints_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Skeleton::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw Error(ErrorKind::SkeletonMismatch, "skeleton has no joint named '" + std::string(name) + "'");
}

std::vector<std::size_t> Skeleton::children(std::size_t index) const {
  std::vector<std::size_t> out;
  for (std::size_t i = index + 1; i < joints_.size(); ++i) {
    if (joints_[i].parent == static_cast<int>(index)) out.push_back(i);
  }
  return out;
}

PoseFrame rest_pose(const Skeleton& skeleton) {
  PoseFrame pose;
  pose.rotations.reserve(skeleton.size());
  for (const Joint& j : skeleton.joints()) pose.rotations.push_back(j.rest_rotation);
  if (skeleton.size() > 0) pose.root_translation = skeleton.joint(0).rest_offset;
  return pose;
}

PoseFrame interpolate_pose(const PoseFrame& a, const PoseFrame& b, double t) {
  if (a.rotations.size() != b.rotations.size()) {
    throw Error(ErrorKind::SkeletonMismatch, "cannot interpolate poses of " + std::to_string(a.rotations.size()) +
                                                 " and " + std::to_string(b.rotations.size()) + " joints");
  }
  if (t <= 0.0) return a;
  if (t >= 1.0) return b;
  PoseFrame out;
  out.rotations.resize(a.rotations.size());
  for (std::size_t i = 0; i < a.rotations.size(); ++i) {
    out.rotations[i] = slerp(a.rotations[i], b.rotations[i], t);
  }
  out.root_translation = lerp(a.root_translation, b.root_translation, t);
  return out;
}

void check_pose(const Skeleton& skeleton, const PoseFrame& pose) {
  if (pose.rotations.size() != skeleton.size()) {
    throw Error(ErrorKind::SkeletonMismatch, "pose has " + std::to_string(pose.rotations.size()) +
                                                 " joints, skeleton has " + std::to_string(skeleton.size()));
  }
}

Skeleton make_humanoid_skeleton() {
  std::vector<Joint> joints;
  auto add = [&joints](std::string name, int parent, Vec3 offset) {
    joints.push_back({std::move(name), parent, Quat::identity(), offset, std::nullopt});
    return static_cast<int>(joints.size() - 1);
  };
  auto leaf = [&joints](int index, Vec3 end) { joints[static_cast<std::size_t>(index)].end_site = end; };

  const int hips = add("Hips", -1, {0.0, 0.95, 0.0});
  for (const char* side : {"Left", "Right"}) {
    const double s = std::string(side) == "Left" ? 1.0 : -1.0;
    const int upper = add(std::string(side) + "UpperLeg", hips, {0.09 * s, -0.05, 0.0});
    const int lower = add(std::string(side) + "LowerLeg", upper, {0.0, -0.42, 0.0});
    const int foot = add(std::string(side) + "Foot", lower, {0.0, -0.41, 0.0});
    leaf(add(std::string(side) + "Toes", foot, {0.0, -0.05, 0.12}), {0.0, 0.0, 0.05});
  }
  const int spine = add("Spine", hips, {0.0, 0.10, 0.0});
  const int chest = add("Chest", spine, {0.0, 0.15, 0.0});
  const int neck = add("Neck", chest, {0.0, 0.22, 0.0});
  const int head = add("Head", neck, {0.0, 0.10, 0.0});
  leaf(add("Jaw", head, {0.0, 0.02, 0.05}), {0.0, -0.04, 0.06});
  leaf(add("LeftEye", head, {0.03, 0.07, 0.08}), {0.0, 0.0, 0.02});
  leaf(add("RightEye", head, {-0.03, 0.07, 0.08}), {0.0, 0.0, 0.02});

  static constexpr const char* kFingers[] = {"Thumb", "Index", "Middle", "Ring", "Little"};
  static constexpr const char* kSegments[] = {"Proximal", "Intermediate", "Distal"};
  for (const char* side : {"Left", "Right"}) {
    const double s = std::string(side) == "Left" ? 1.0 : -1.0;
    const int shoulder = add(std::string(side) + "Shoulder", chest, {0.04 * s, 0.19, 0.0});
    const int upper = add(std::string(side) + "UpperArm", shoulder, {0.12 * s, 0.0, 0.0});
    const int lower = add(std::string(side) + "LowerArm", upper, {0.28 * s, 0.0, 0.0});
    const int hand = add(std::string(side) + "Hand", lower, {0.25 * s, 0.0, 0.0});
    for (int f = 0; f < 5; ++f) {
      const double spread = 0.02 * (f - 2);
      int parent = hand;
      Vec3 offset = f == 0 ? Vec3{0.02 * s, -0.01, 0.03} : Vec3{0.08 * s, 0.0, spread};
      for (int seg = 0; seg < 3; ++seg) {
        parent = add(std::string(side) + kFingers[f] + kSegments[seg], parent, offset);
        offset = {0.03 * s, 0.0, 0.0};
      }
      leaf(parent, {0.02 * s, 0.0, 0.0});
    }
  }
  return Skeleton(std::move(joints));
}

}  // namespace fusion
