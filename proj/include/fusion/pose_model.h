/// @file
/// @brief Instrument profiles: grouping notes into chords and mapping them to
/// hand/body pose targets, plus viseme-track ingestion as a face layer.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fusion/blender.h"
#include "fusion/skeleton.h"
#include "fusion/smf.h"

namespace fusion {

/// Joint-name keyed rotation targets; joints not listed are left alone.
struct PoseTarget {
  std::map<std::string, Quat> joints;
  /// Lateral hand displacement the target encodes (linear fallback only).
  double lateral_offset_m = 0.0;

  friend bool operator==(const PoseTarget&, const PoseTarget&) = default;
};

enum class Instrument { Guitar, Bass, Piano, Drums };

std::string_view instrument_name(Instrument instrument);
Instrument parse_instrument(std::string_view name);

struct ChordShape {
  std::string id;
  std::set<int> pitches;
  bool pitch_classes = true;  ///< pitches are 0-11 classes, else absolute MIDI pitches
  PoseTarget pose;
  double transition_s = 0.15;
};

/// How single notes (and unmatched groups) are posed.
struct FallbackRule {
  enum class Kind { Linear, GmDrums };
  Kind kind = Kind::Linear;

  // Linear: the hand slides sideways by spacing_m per semitone from
  // reference_pitch; the slide is realized as a rotation of `joint` about
  // `axis` by atan(offset / reach_m), i.e. the hand stays on a straight line
  // (keyboard, fretboard) reach_m in front of the pivot.
  std::string joint;
  Vec3 axis{0.0, 1.0, 0.0};
  int reference_pitch = 60;
  double spacing_m = 0.0;
  double reach_m = 0.5;
  PoseTarget base_pose;

  // GmDrums: General MIDI percussion note -> kit piece -> strike pose.
  std::map<std::string, PoseTarget> pieces;
  std::string default_piece;

  double transition_s = 0.1;
};

struct SustainRule {
  std::optional<double> fixed_s;  ///< drums: constant strike-to-release time
  double max_s = 2.0;             ///< others: min(note duration, max_s)
};

struct InstrumentProfile {
  Instrument instrument = Instrument::Piano;
  std::string name;
  std::string layer;  ///< target layer name for compiled events
  std::optional<std::set<std::uint8_t>> channels;
  double chord_window_s = 0.030;
  int min_shape_overlap = 2;
  double release_transition_s = 0.2;
  SustainRule sustain;
  std::map<std::string, double> mask;  ///< controlled joints and their weights
  PoseTarget rest;                     ///< pose held between notes
  std::vector<ChordShape> shapes;
  FallbackRule fallback;

  const ChordShape* find_shape(std::string_view id) const;
};

/// Checks internal consistency (unique, non-numeric shape ids; non-empty
/// pitch sets; pose joints inside the mask). Throws ConfigError.
void validate_profile(const InstrumentProfile& profile);

InstrumentProfile parse_profile(const std::string& yaml_text);
InstrumentProfile load_profile(const std::string& path);

struct ChordEvent {
  double onset_s = 0.0;
  std::string shape_id;  ///< empty for a fallback (single-note) event
  std::vector<smf::NoteEvent> member_notes;
  std::uint8_t peak_velocity = 0;

  bool is_fallback() const { return shape_id.empty(); }
};

/// Greedy onset grouping: a note joins the open group when its onset lies
/// within chord_window_s of the group's first onset. Groups are matched to
/// the shape with the largest pitch overlap (ties: smallest id) if the
/// overlap reaches min_shape_overlap; otherwise each member becomes its own
/// fallback event.
std::vector<ChordEvent> detect_chords(const smf::NoteTimeline& timeline, const InstrumentProfile& profile);

struct MappedPose {
  PoseTarget target;
  double transition_s = 0.0;
};

MappedPose map_event_to_pose(const InstrumentProfile& profile, const ChordEvent& event);

/// Resolves the note code carried by an animation event: a decimal pitch
/// for fallback events, otherwise a shape id.
MappedPose resolve_note_code(const InstrumentProfile& profile, std::string_view note_code);

/// General MIDI kit piece for a percussion note, or empty when unmapped.
std::string_view gm_drum_piece(int pitch);

/// Writes `target` into `pose` for joints present in the skeleton; unknown
/// names throw SkeletonMismatch.
void apply_target(const Skeleton& skeleton, const PoseTarget& target, PoseFrame& pose);

struct VisemeKey {
  double time_s = 0.0;
  std::string viseme;
  double weight = 0.0;
};

struct VisemeTrack {
  std::vector<VisemeKey> keys;
};

/// Viseme id -> face-joint delta rotations.
using VisemeSet = std::map<std::string, PoseTarget>;

inline constexpr double kVisemeRampSeconds = 0.1;

/// Parses `time_s viseme_id weight` lines (`#` comments allowed).
VisemeTrack parse_viseme_track(const std::string& text);
VisemeSet parse_viseme_set(const std::string& yaml_text);

/// Per-viseme weights at time t: piecewise linear between keys, ramping in
/// from zero over kVisemeRampSeconds before the first key and back to zero
/// over the same span after the last.
std::map<std::string, double> viseme_weights(const VisemeTrack& track, double t);

/// Additive face layer (reference = identity) confined to `face_mask`.
Layer viseme_to_face_layer(const VisemeTrack& track, const VisemeSet& visemes, const Skeleton& skeleton,
                           const AvatarMask& face_mask);

}  // namespace fusion
