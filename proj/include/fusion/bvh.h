/// @file
/// @brief BVH motion-capture reader/writer and joint renaming.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "fusion/skeleton.h"

namespace fusion::bvh {

enum class Channel { Xposition, Yposition, Zposition, Xrotation, Yrotation, Zrotation };

struct BvhData {
  Skeleton skeleton;
  AnimationClip clip;
  std::vector<std::vector<Channel>> channels;  ///< per joint, file order
};

/// BVH files are conventionally authored in centimeters.
inline constexpr double kCentimeters = 0.01;

/// Parses HIERARCHY + MOTION. Offsets and root positions are multiplied by
/// `unit_scale` to get meters. Rotation channels are composed in the order
/// they are listed. A Frame Time within 6-decimal rounding of 1/n for an
/// integer n yields exactly n Hz.
BvhData parse_bvh(const std::string& text, double unit_scale = kCentimeters);
BvhData read_bvh_file(const std::string& path, double unit_scale = kCentimeters);

/// Writes offsets in centimeters, root channels
/// "Xposition Yposition Zposition Zrotation Xrotation Yrotation", every other
/// joint "Zrotation Xrotation Yrotation", all numbers with 6 decimals.
/// Joints are emitted depth first, children in index order.
std::string export_bvh(const Skeleton& skeleton, const AnimationClip& clip);

/// Renames joints; names absent from the map pass through. Throws
/// DuplicateTargetName when two joints would share a name.
Skeleton map_joint_names(const Skeleton& skeleton, const std::map<std::string, std::string>& name_map);

/// YAML mapping of source name -> target name.
std::map<std::string, std::string> load_name_map(const std::string& path);

}  // namespace fusion::bvh
