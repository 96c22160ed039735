/// @file
/// @brief Standard MIDI File reader producing a tempo-resolved note timeline.
///
/// Covers the subset of SMF needed to drive avatar performance: chunk
/// framing, VLQ delta times, running status, Set Tempo (0x51) and End of
/// Track (0x2F). SysEx and other meta events are skipped with their declared
/// lengths honored. SMPTE time division is rejected.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace fusion::smf {

struct VlqResult {
  std::uint32_t value = 0;
  std::size_t consumed = 0;
  friend bool operator==(const VlqResult&, const VlqResult&) = default;
};

/// Decodes one variable-length quantity from the front of `bytes`.
/// Throws VlqOverrun when four bytes all carry the continuation bit and
/// TruncatedInput when the input ends mid-quantity.
VlqResult decode_vlq(std::span<const std::uint8_t> bytes);

struct SmfHeader {
  std::uint16_t format = 0;
  std::uint16_t track_count = 0;
  std::uint16_t division = 0;  ///< ticks per quarter note
  friend bool operator==(const SmfHeader&, const SmfHeader&) = default;
};

enum class EventKind : std::uint8_t { NoteOn, NoteOff, Meta, OtherChannel, SysEx };

inline constexpr std::uint8_t kMetaSetTempo = 0x51;
inline constexpr std::uint8_t kMetaEndOfTrack = 0x2F;

struct RawTrackEvent {
  std::uint32_t delta_ticks = 0;
  std::uint64_t tick = 0;  ///< absolute tick within the track
  EventKind kind = EventKind::Meta;
  std::uint8_t status = 0;     ///< full status byte (0xFF for meta, 0xF0/0xF7 for sysex)
  std::uint8_t channel = 0;    ///< meaningful for channel kinds only
  std::uint8_t meta_type = 0;  ///< meaningful for Meta only
  /// Channel kinds: data bytes (note, velocity). Meta/SysEx: payload.
  std::vector<std::uint8_t> data;

  friend bool operator==(const RawTrackEvent&, const RawTrackEvent&) = default;
};

using Track = std::vector<RawTrackEvent>;

struct SmfFile {
  SmfHeader header;
  std::vector<Track> tracks;
};

/// Parses a complete .mid image. Every MTrk must end with End of Track;
/// unknown chunk types are skipped; NoteOn with velocity 0 becomes NoteOff.
SmfFile parse_smf(std::span<const std::uint8_t> bytes);

SmfFile read_smf_file(const std::string& path);

struct TempoSegment {
  std::uint64_t start_tick = 0;
  std::uint32_t us_per_quarter = 500000;
  friend bool operator==(const TempoSegment&, const TempoSegment&) = default;
};

struct TempoMap {
  std::vector<TempoSegment> segments;
  friend bool operator==(const TempoMap&, const TempoMap&) = default;
};

inline constexpr std::uint32_t kDefaultTempo = 500000;

/// Anomalies that are reported rather than raised.
struct Diagnostics {
  std::size_t ignored_tempo_events = 0;  ///< tempo outside the conductor track
  std::size_t malformed_tempo_events = 0;
  std::size_t orphan_note_offs = 0;
  std::size_t unterminated_notes = 0;
  std::size_t zero_duration_notes = 0;
  std::vector<std::string> messages;
};

/// Builds a tempo map from the tempo events of a single track. Later events
/// at the same tick replace earlier ones; tick 0 defaults to 120 BPM.
TempoMap tempo_map_from_track(const Track& track, Diagnostics* diagnostics = nullptr);

/// Tempo map for a whole file. Formats 0 and 1 read track 0 only (tempo in
/// other tracks is ignored and counted); format 2 callers should use
/// tempo_map_from_track per track, but this returns track 0's map.
TempoMap build_tempo_map(const SmfFile& file, Diagnostics* diagnostics = nullptr);

double ticks_to_seconds(const TempoMap& map, std::uint16_t division, std::uint64_t tick);

struct NoteEvent {
  double onset_s = 0.0;
  double duration_s = 0.0;
  std::uint8_t pitch = 0;
  std::uint8_t velocity = 0;
  std::uint8_t channel = 0;
  std::uint16_t track = 0;
  friend bool operator==(const NoteEvent&, const NoteEvent&) = default;

  double end_s() const { return onset_s + duration_s; }
};

struct NoteTimeline {
  std::vector<NoteEvent> notes;  ///< sorted stably by (onset_s, track, pitch)
  double end_s = 0.0;
  friend bool operator==(const NoteTimeline&, const NoteTimeline&) = default;
};

/// Pairs note-ons with note-offs FIFO per (track, channel, pitch). Notes still
/// open at End of Track are closed there; zero-length notes are dropped.
NoteTimeline extract_notes(const SmfFile& file, const TempoMap& map,
                           const std::optional<std::set<std::uint8_t>>& channel_filter = std::nullopt,
                           Diagnostics* diagnostics = nullptr);

}  // namespace fusion::smf
