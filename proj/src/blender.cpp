#include "fusion/blender.h"

#include <algorithm>
#include <cmath>

#include "fusion/error.h"

namespace fusion {

namespace {

PoseFrame sample_clip(const AnimationClip& clip, double u) {
  const std::size_t n = clip.frames.size();
  if (n == 0) throw Error(ErrorKind::EmptyClip, "clip has no frames");
  if (n == 1) return clip.frames.front();

  if (clip.loop) {
    const double period = clip.loop_period();
    u = std::fmod(u, period);
    if (u < 0.0) u += period;
  } else {
    if (u <= 0.0) return clip.frames.front();
    if (u >= clip.last_frame_time()) return clip.frames.back();
  }
  const double pos = u * clip.frame_rate;
  auto index = static_cast<std::size_t>(std::floor(pos));
  if (index >= n) index = n - 1;
  const double frac = pos - static_cast<double>(index);
  const std::size_t next = clip.loop ? (index + 1) % n : std::min(index + 1, n - 1);
  return interpolate_pose(clip.frames[index], clip.frames[next], frac);
}

void check_layer_pose(const std::string& layer, const PoseFrame& pose, const Skeleton& skeleton) {
  if (pose.rotations.size() != skeleton.size()) {
    throw Error(ErrorKind::SkeletonMismatch, "layer '" + layer + "' produced " +
                                                 std::to_string(pose.rotations.size()) + " joints, skeleton has " +
                                                 std::to_string(skeleton.size()));
  }
}

}  // namespace

AvatarMask::AvatarMask(std::vector<double> weights) : weights_(std::move(weights)) {
  for (double& w : weights_) w = std::clamp(w, 0.0, 1.0);
}

AvatarMask AvatarMask::from_joints(const Skeleton& skeleton, const std::map<std::string, double>& weights) {
  std::vector<double> w(skeleton.size(), 0.0);
  for (const auto& [name, value] : weights) w[skeleton.index_of(name)] = value;
  return AvatarMask(std::move(w));
}

PoseFrame evaluate_layer(const Layer& layer, double t) {
  const double u = t + layer.time_offset_s;
  if (const auto* clip = std::get_if<AnimationClip>(&layer.source)) return sample_clip(*clip, u);
  const auto& stream = std::get<PoseStream>(layer.source);
  if (!stream.sample) throw Error(ErrorKind::EmptyClip, "layer '" + layer.name + "' has no pose source");
  return stream.sample(u);
}

PoseFrame additive_reference(const Layer& layer) {
  if (const auto* clip = std::get_if<AnimationClip>(&layer.source)) {
    if (clip->frames.empty()) throw Error(ErrorKind::EmptyClip, "clip has no frames");
    return clip->frames.front();
  }
  return std::get<PoseStream>(layer.source).reference;
}

PoseFrame blend(const LayerStack& stack, const Skeleton& skeleton, double t) {
  PoseFrame out = evaluate_layer(stack.base, t);
  check_layer_pose("base", out, skeleton);
  const std::size_t n = skeleton.size();

  for (const Layer& layer : stack.layers) {
    if (layer.weight <= 0.0) continue;
    if (layer.mask.size() != n) {
      throw Error(ErrorKind::SkeletonMismatch, "mask of layer '" + layer.name + "' has " +
                                                   std::to_string(layer.mask.size()) + " weights for " +
                                                   std::to_string(n) + " joints");
    }
    const double layer_weight = std::min(layer.weight, 1.0);
    const PoseFrame pose = evaluate_layer(layer, t);
    check_layer_pose(layer.name, pose, skeleton);

    if (layer.mode == BlendMode::Override) {
      for (std::size_t j = 0; j < n; ++j) {
        const double f = layer.mask[j] * layer_weight;
        if (f <= 0.0) continue;
        out.rotations[j] = f >= 1.0 ? pose.rotations[j] : slerp(out.rotations[j], pose.rotations[j], f);
      }
      if (layer.drives_root) {
        const double f = layer.mask[0] * layer_weight;
        if (f > 0.0) out.root_translation = lerp(out.root_translation, pose.root_translation, f);
      }
    } else {
      const PoseFrame ref = additive_reference(layer);
      check_layer_pose(layer.name, ref, skeleton);
      for (std::size_t j = 0; j < n; ++j) {
        const double f = layer.mask[j] * layer_weight;
        if (f <= 0.0) continue;
        const Quat delta = inverse(ref.rotations[j]) * pose.rotations[j];
        out.rotations[j] = normalized(out.rotations[j] * slerp(Quat::identity(), delta, f));
      }
      if (layer.drives_root) {
        const double f = layer.mask[0] * layer_weight;
        if (f > 0.0) out.root_translation = out.root_translation + (pose.root_translation - ref.root_translation) * f;
      }
    }
  }
  return out;
}

StackDiagnostics validate_stack(const LayerStack& stack, const Skeleton& skeleton) {
  StackDiagnostics diag;
  const std::size_t n = skeleton.size();

  auto check_sizes = [&](const Layer& layer, const std::string& label) {
    if (layer.mask.size() != n) diag.size_mismatches.push_back({label, "mask", layer.mask.size(), n});
    if (const auto* clip = std::get_if<AnimationClip>(&layer.source)) {
      for (const PoseFrame& f : clip->frames) {
        if (f.rotations.size() != n) {
          diag.size_mismatches.push_back({label, "pose", f.rotations.size(), n});
          break;
        }
      }
    }
  };
  check_sizes(stack.base, "base");
  for (const Layer& layer : stack.layers) check_sizes(layer, layer.name);

  std::vector<std::vector<std::size_t>> full_overrides(n);
  std::vector<bool> reached(n, false);
  for (std::size_t li = 0; li < stack.layers.size(); ++li) {
    const Layer& layer = stack.layers[li];
    const std::size_t m = std::min(layer.mask.size(), n);
    for (std::size_t j = 0; j < m; ++j) {
      const double f = layer.mask[j] * layer.weight;
      if (f > 0.0) reached[j] = true;
      if (layer.mode == BlendMode::Override && f >= 1.0) full_overrides[j].push_back(li);
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (full_overrides[j].size() > 1) diag.conflicts.push_back({j, skeleton.joint(j).name, full_overrides[j]});
    if (!reached[j]) diag.unmapped_joints.push_back(skeleton.joint(j).name);
  }
  return diag;
}

}  // namespace fusion
