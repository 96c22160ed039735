/// @file
/// @brief Skeleton, pose and clip types shared by the pose, blend and BVH code.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fusion/math.h"

namespace fusion {

struct Joint {
  std::string name;
  int parent = -1;  ///< -1 for the root; otherwise an earlier index
  Quat rest_rotation;
  Vec3 rest_offset;  ///< meters, relative to the parent
  std::optional<Vec3> end_site;  ///< BVH end-site offset for leaves, meters

  friend bool operator==(const Joint&, const Joint&) = default;
};

class Skeleton {
 public:
  Skeleton() = default;
  /// Validates topology: exactly one root at index 0, parents precede
  /// children, unique names, unit rest rotations.
  explicit Skeleton(std::vector<Joint> joints);

  std::size_t size() const { return joints_.size(); }
  const std::vector<Joint>& joints() const { return joints_; }
  const Joint& joint(std::size_t i) const { return joints_.at(i); }

  std::optional<std::size_t> find(std::string_view name) const;
  /// Like find() but throws SkeletonMismatch naming the joint.
  std::size_t index_of(std::string_view name) const;

  std::vector<std::size_t> children(std::size_t index) const;

  friend bool operator==(const Skeleton&, const Skeleton&) = default;

 private:
  std::vector<Joint> joints_;
};

struct PoseFrame {
  std::vector<Quat> rotations;  ///< local rotation per joint
  Vec3 root_translation;        ///< meters

  static PoseFrame identity(std::size_t joint_count) {
    return {std::vector<Quat>(joint_count, Quat::identity()), {}};
  }

  friend bool operator==(const PoseFrame&, const PoseFrame&) = default;
};

/// Rest pose of a skeleton: rest rotations and the root's rest offset.
PoseFrame rest_pose(const Skeleton& skeleton);

struct AnimationClip {
  std::vector<PoseFrame> frames;
  double frame_rate = 30.0;
  bool loop = false;

  /// Time of the last frame for clamped playback.
  double last_frame_time() const {
    return frames.empty() ? 0.0 : static_cast<double>(frames.size() - 1) / frame_rate;
  }
  /// Loop period: the last frame wraps back to the first.
  double loop_period() const { return static_cast<double>(frames.size()) / frame_rate; }

  friend bool operator==(const AnimationClip&, const AnimationClip&) = default;
};

/// Per-joint shortest-arc slerp, root translation lerp. t = 0 and t = 1
/// return copies of `a` and `b`.
PoseFrame interpolate_pose(const PoseFrame& a, const PoseFrame& b, double t);

/// Throws SkeletonMismatch when the frame does not fit the skeleton.
void check_pose(const Skeleton& skeleton, const PoseFrame& pose);

/// Default humanoid rig with humanoid-style bone names (Hips, Spine, Chest,
/// LeftUpperArm, RightIndexProximal, Jaw, ...). Offsets in meters.
Skeleton make_humanoid_skeleton();

}  // namespace fusion
