/// @file
/// @brief Masked animation layers: override and additive blending of poses.
///
/// A LayerStack starts from a full-body base layer; every following layer
/// contributes per joint with factor mask_weight * layer_weight, either by
/// slerping the running pose toward its own (override) or by composing a
/// delta relative to its reference pose (additive). Later layers win.

#pragma once

#include <functional>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "fusion/skeleton.h"

namespace fusion {

class AvatarMask {
 public:
  AvatarMask() = default;
  /// Weights are clamped to [0, 1].
  explicit AvatarMask(std::vector<double> weights);

  static AvatarMask full(std::size_t joint_count) { return AvatarMask(std::vector<double>(joint_count, 1.0)); }
  static AvatarMask none(std::size_t joint_count) { return AvatarMask(std::vector<double>(joint_count, 0.0)); }
  /// Named joints get their weight, all others 0. Unknown names throw
  /// SkeletonMismatch.
  static AvatarMask from_joints(const Skeleton& skeleton, const std::map<std::string, double>& weights);

  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
};

/// A procedurally generated pose source (e.g. performance or viseme track).
struct PoseStream {
  std::function<PoseFrame(double)> sample;
  PoseFrame reference;  ///< additive basis for this stream
};

enum class BlendMode { Override, Additive };

struct Layer {
  std::string name;
  std::variant<AnimationClip, PoseStream> source;
  AvatarMask mask;
  BlendMode mode = BlendMode::Override;
  double weight = 1.0;
  double time_offset_s = 0.0;
  /// Root translation is blended only for layers that opt in (and the base).
  bool drives_root = false;
};

struct LayerStack {
  Layer base;
  std::vector<Layer> layers;
};

/// Samples a layer at t + time_offset_s. Clips interpolate between frames,
/// wrap when looping and clamp to the last frame otherwise.
PoseFrame evaluate_layer(const Layer& layer, double t);

/// The pose the additive delta is measured against: a clip's first frame, or
/// the stream's declared reference.
PoseFrame additive_reference(const Layer& layer);

PoseFrame blend(const LayerStack& stack, const Skeleton& skeleton, double t);

struct StackDiagnostics {
  struct Conflict {
    std::size_t joint;
    std::string joint_name;
    std::vector<std::size_t> layers;  ///< indices into LayerStack::layers
  };
  struct SizeMismatch {
    std::string layer;  ///< "base" or the layer name
    std::string what;   ///< "mask" or "pose"
    std::size_t found;
    std::size_t expected;
  };
  std::vector<Conflict> conflicts;
  std::vector<std::string> unmapped_joints;  ///< no overlay layer reaches these
  std::vector<SizeMismatch> size_mismatches;

  bool clean() const { return conflicts.empty() && size_mismatches.empty(); }
};

/// Report-only checks: joints driven by more than one full-weight override,
/// joints no overlay touches, and mask/pose sizes that do not fit.
StackDiagnostics validate_stack(const LayerStack& stack, const Skeleton& skeleton);

}  // namespace fusion
