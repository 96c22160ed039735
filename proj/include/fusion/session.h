/// @file
/// @brief Device capacity model and a deterministic multi-avatar session
/// simulator (proxemics, excitement, salutes) with a replayable event log.
///
/// The event log doubles as the wire format. A log is a header line carrying
/// the full configuration and step count, followed by one event per line:
///
///     time_s <TAB> kind <TAB> actor <TAB> payload
///
/// Replay re-simulates from the header's seed, re-injecting events marked
/// `src=ext`, and checks that every regenerated line matches the input.

#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fusion/math.h"

namespace fusion::session {

// ---------------------------------------------------------------------------
// Capacity model
// ---------------------------------------------------------------------------

struct KneePoint {
  int avatars = 0;
  double fps = 0.0;
  friend bool operator==(const KneePoint&, const KneePoint&) = default;
};

struct AvatarBudget {
  int polygons = 30000;
  int materials_min = 6;
  int materials_max = 14;
  friend bool operator==(const AvatarBudget&, const AvatarBudget&) = default;
};

/// Frame rate is flat at target_fps up to drop_threshold_avatars, then
/// follows the knee points linearly and holds the last value beyond them.
struct DeviceProfile {
  std::string name;
  double target_fps = 72.0;
  int drop_threshold_avatars = 0;
  std::vector<KneePoint> curve;  ///< strictly increasing avatars, all above the threshold
  AvatarBudget budget;

  /// Largest avatar count the curve describes.
  int domain_max() const { return curve.empty() ? drop_threshold_avatars : curve.back().avatars; }

  friend bool operator==(const DeviceProfile&, const DeviceProfile&) = default;
};

/// Throws ConfigError unless the curve is monotone non-increasing and sits
/// beyond the flat region.
void validate_device(const DeviceProfile& device);
DeviceProfile parse_device_profile(const std::string& yaml_text);
DeviceProfile load_device_profile(const std::string& path);

double capacity_fps(const DeviceProfile& device, int avatar_count);

/// Largest count in [0, domain_max] whose fps is at least `fps_floor`.
int max_avatars_at(const DeviceProfile& device, double fps_floor);

/// Perceived latency bands: >= 60 fps smooth, >= 40 slight delay, below that
/// obvious delay.
enum class PerceptionBand { Smooth, SlightDelay, ObviousDelay };
PerceptionBand perception_band(double fps);
const char* band_name(PerceptionBand band);

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

enum class EventKind { Join, Leave, Note, Salute, SpeakStart, SpeakStop, Effect };
const char* event_kind_name(EventKind kind);

struct SessionEvent {
  double time_s = 0.0;
  EventKind kind = EventKind::Join;
  int actor = 0;
  std::string payload;  ///< space separated key=value pairs
  friend bool operator==(const SessionEvent&, const SessionEvent&) = default;
};

struct AvatarAgent {
  int id = 0;
  Vec2 position;
  double radius = 0.4;
  std::optional<std::string> instrument;
  bool speaking = false;
  double excitement = 0.0;
  bool is_npc = false;
  double session_time_s = 0.0;
  double planned_leave_s = 0.0;

  // steering and bookkeeping
  Vec2 waypoint;
  double speed = 0.0;
  bool above_threshold = false;
  int gifts = 0;
  std::size_t npc_cursor = 0;

  friend bool operator==(const AvatarAgent&, const AvatarAgent&) = default;
};

struct SessionConfig {
  std::uint64_t seed = 1;
  double dt = 0.05;
  int agents = 4;  ///< initial agents, NPCs included
  int npcs = 0;
  int cap = 0;     ///< 0: the device's max avatars at target fps
  bool communication_mode = false;

  double world_half_extent = 4.0;  ///< square world [-h, h]^2, meters
  double radius = 0.4;
  double conversation_range_m = 2.0;
  int audible_cap = 11;

  double excitement_gain = 5.0;
  double excitement_decay = 0.2;  ///< per second
  double effect_threshold = 80.0;

  double salute_bonus_s = 180.0;
  double stay_min_s = 300.0;  ///< planned stay drawn from [min, max)
  double stay_max_s = 600.0;

  double note_rate_hz = 2.0;
  double speak_toggle_rate_hz = 0.1;
  double salute_rate_hz = 0.05;
  double min_speed = 0.3;
  double max_speed = 1.0;
  double npc_note_interval_s = 0.5;

  DeviceProfile device;

  friend bool operator==(const SessionConfig&, const SessionConfig&) = default;
};

/// The device profile used when a config does not name one (Quest 2 knees).
DeviceProfile default_device();

struct SessionState {
  SessionConfig config;
  std::vector<AvatarAgent> agents;  ///< ordered by id
  double time_s = 0.0;
  std::uint64_t steps = 0;
  std::mt19937_64 rng;
  std::vector<SessionEvent> event_log;
  std::deque<SessionEvent> pending;  ///< injected, applied at the next step
  std::set<std::pair<int, int>> saluted;  ///< ordered (initiator, target)

  AvatarAgent* find(int id);
  const AvatarAgent* find(int id) const;
  int effective_cap() const;

  friend bool operator==(const SessionState&, const SessionState&) = default;
};

/// Seeds the RNG, places the initial agents without overlap and logs their
/// joins at t = 0. The first non-NPC agents take guitar, bass, drums and
/// piano; NPCs play piano from a fixed pattern and never initiate salutes.
SessionState make_session(const SessionConfig& config);

/// Queues an external event; it is stamped and applied at the next step.
void inject(SessionState& state, SessionEvent event);

SessionState step_session(SessionState state, double dt);

/// Adds gain * intensity(velocity) per note, clamps to [0, 100], emits one
/// effect per upward threshold crossing, then decays by (1 - decay * dt).
SessionState update_excitement(SessionState state, const std::vector<SessionEvent>& notes, double dt);

/// Extends both agents' planned stay by the salute bonus once per ordered
/// pair. Throws OutOfRange beyond the conversation range.
SessionState salute(SessionState state, int a, int b);

struct CommReport {
  std::size_t agent_count = 0;
  std::vector<int> crowded_listeners;  ///< hear more than audible_cap speakers in range
  std::vector<int> isolated_speakers;  ///< speaking with nobody in range
  bool count_advisory = false;         ///< communication mode and count outside [5, 11]
  double fps_estimate = 0.0;
  PerceptionBand band = PerceptionBand::Smooth;

  bool clean() const { return crowded_listeners.empty() && isolated_speakers.empty() && !count_advisory; }
};

CommReport validate_comm_quality(const SessionState& state);

/// Runs `steps` steps of config.dt, queueing each injection at the first
/// step boundary at or after its time.
SessionState run_session(const SessionConfig& config, std::uint64_t steps,
                         const std::vector<SessionEvent>& injections = {});

std::string format_event(const SessionEvent& event);
/// Header plus every logged event; byte-stable for identical runs.
std::string format_log(const SessionState& state);
/// Parses bare event lines (no header), e.g. an injection file.
std::vector<SessionEvent> parse_events(const std::string& text);

/// Reconstructs the final state of a logged session. Throws CorruptLogError
/// with the first offending line.
SessionState replay(const std::string& log_text);

/// Human-readable final-state summary used by the CLI.
std::string summarize(const SessionState& state);

}  // namespace fusion::session
