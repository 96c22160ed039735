/// @file
/// @brief End-to-end fusion pass: notes -> chords -> events -> performance
/// layer over a mocap base -> baked clip.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fusion/blender.h"
#include "fusion/pose_model.h"
#include "fusion/scheduler.h"
#include "fusion/skeleton.h"
#include "fusion/smf.h"

namespace fusion {

/// Humanoid body-part masks by name: full_body, upper_body, arms, hands,
/// fingers, head, face. Joints missing from the skeleton are skipped.
/// Throws ConfigError for an unknown name.
AvatarMask named_mask(const Skeleton& skeleton, std::string_view name);

/// Event sink that turns attack/strike/release events into pose keys.
///
/// A strike lands exactly on its target pose; the approach starts at the
/// matching attack (or the previous strike, whichever is later). A release
/// returns to the profile's rest pose unless another attack is already
/// pending.
class PerformanceAnimator {
 public:
  PerformanceAnimator(const Skeleton& skeleton, const InstrumentProfile& profile);

  bool on_event(const AnimationEvent& event);
  EventSink sink() {
    return [this](const AnimationEvent& e) { return on_event(e); };
  }

  PoseFrame sample(double t) const;
  const PoseFrame& rest() const { return rest_; }
  /// A layer driving the profile's masked joints with this animator.
  Layer layer(const Skeleton& skeleton) const;

 private:
  struct Key {
    double time_s;
    PoseFrame pose;
  };
  struct Pending {
    double time_s;
    std::string note_code;
  };

  PoseFrame target_pose(std::string_view note_code) const;
  void add_key(double t, PoseFrame pose);
  void truncate_after(double t);

  const Skeleton* skeleton_;
  const InstrumentProfile* profile_;
  PoseFrame rest_;
  std::vector<Key> keys_;
  std::vector<Pending> pending_;
  double last_strike_s_ = 0.0;
};

/// Ordered extra layers from a YAML stack description:
///
///     layers:
///       - name: breathe
///         clip: breathe.bvh   # relative to the stack file
///         mask: upper_body    # named mask or {joint: weight}
///         mode: additive      # override | additive
///         weight: 0.5
///
/// Clips must carry the same joint names as `skeleton` after `name_map`.
std::vector<Layer> load_layer_stack(const std::string& path, const Skeleton& skeleton,
                                    const std::map<std::string, std::string>& name_map = {});

/// Frames needed to cover `duration_s` at `fps`, at least one.
std::size_t render_frame_count(double duration_s, double fps);

struct RenderResult {
  std::vector<ChordEvent> chords;
  EventTimeline events;
  double duration_s = 0.0;
  AnimationClip clip;
};

/// Runs the whole pass. The performance layer goes on top of `extra_layers`,
/// the optional face layer on top of that.
RenderResult render(const smf::NoteTimeline& timeline, const InstrumentProfile& profile, const Skeleton& skeleton,
                    const AnimationClip& base, const std::vector<Layer>& extra_layers, double fps,
                    const std::optional<Layer>& face = std::nullopt);

/// Finds a data file: the path itself, then each FUSION_PROFILE_PATH entry,
/// then the installed data directory under `subdir`. Bare names also try a
/// ".yaml" suffix. Throws IoError when nothing matches.
std::string resolve_data_file(const std::string& name, std::string_view subdir);

}  // namespace fusion
