/// @file
/// @brief Compiles chord events into timed animation events and dispatches
/// them against an injected clock.

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fusion/pose_model.h"

namespace fusion {

struct AnimationEvent {
  double time_s = 0.0;
  std::string function;   ///< "attack", "strike" or "release"
  std::string note_code;  ///< decimal pitch (fallback) or shape id
  std::uint8_t velocity = 0;
  std::string target_layer;

  friend bool operator==(const AnimationEvent&, const AnimationEvent&) = default;
};

inline constexpr const char* kAttack = "attack";
inline constexpr const char* kStrike = "strike";
inline constexpr const char* kRelease = "release";

struct EventTimeline {
  std::vector<AnimationEvent> events;  ///< sorted by time, stable in source order
  double duration_s = 0.0;

  friend bool operator==(const EventTimeline&, const EventTimeline&) = default;
};

/// Three events per chord: attack at onset - transition (clamped to 0),
/// strike at onset, release at onset + sustain. Sustain is the profile's
/// fixed value (drums) or min(chord duration, max_s), and never runs past a
/// later chord's attack (nor before the strike).
EventTimeline compile_events(const std::vector<ChordEvent>& chords, const InstrumentProfile& profile);

/// One event per line: time_s (6 decimals) TAB function TAB note_code TAB
/// velocity TAB layer.
std::string serialize_timeline(const EventTimeline& timeline);
EventTimeline parse_timeline(const std::string& text);

/// Linear velocity-to-intensity rule, clamped to [0, 1].
double effect_intensity(int velocity);

class Clock {
 public:
  virtual ~Clock() = default;
  /// Seconds since the clock's origin.
  virtual double now() const = 0;
  /// Blocks (or advances) until now() >= t.
  virtual void wait_until(double t) = 0;
};

/// Exact clock for tests and replay: waiting jumps straight to the target.
class SimulatedClock final : public Clock {
 public:
  double now() const override { return now_; }
  void wait_until(double t) override {
    if (t > now_) now_ = t;
  }

 private:
  double now_ = 0.0;
};

/// Steady wall clock polling at a fixed tick.
class WallClock final : public Clock {
 public:
  explicit WallClock(std::chrono::microseconds tick = std::chrono::milliseconds(10));
  double now() const override;
  void wait_until(double t) override;

 private:
  std::chrono::steady_clock::time_point origin_;
  std::chrono::microseconds tick_;
};

/// Returns false to reject an event, which aborts the dispatch.
using EventSink = std::function<bool(const AnimationEvent&)>;

struct DispatchReport {
  std::size_t delivered = 0;
  std::vector<double> lateness_s;  ///< per event, clock time minus event time
  double max_lateness_s = 0.0;
};

/// Delivers every event once, in order, no earlier than its time. Throws
/// DispatchAborted (SinkRejected) carrying the delivered count.
DispatchReport run(const EventTimeline& timeline, const EventSink& sink, Clock& clock);

}  // namespace fusion
