/// @file
/// @brief SMF chunk/event decoding, tempo map and note pairing.

#include "fusion/smf.h"

#include <algorithm>
#include <deque>
#include <fstream>
#include <iterator>
#include <map>
#include <tuple>

#include "fusion/error.h"

namespace fusion::smf {

namespace {

constexpr std::size_t kMaxVlqBytes = 4;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

std::uint16_t read_be16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return b[at] == tag[0] && b[at + 1] == tag[1] && b[at + 2] == tag[2] && b[at + 3] == tag[3];
}

std::size_t channel_data_length(std::uint8_t status) {
  const std::uint8_t high = status & 0xF0;
  return (high == 0xC0 || high == 0xD0) ? 1 : 2;
}

/// Cursor over one MTrk body; all reads are bounds checked against the chunk.
class TrackReader {
 public:
  TrackReader(std::span<const std::uint8_t> body, std::size_t track_index)
      : body_(body), track_index_(track_index) {}

  Track read() {
    Track events;
    std::uint64_t tick = 0;
    std::uint8_t running = 0;
    while (true) {
      if (pos_ >= body_.size()) {
        fail(ErrorKind::TruncatedChunk, "track ends without End of Track");
      }
      const VlqResult delta = vlq();
      tick += delta.value;

      RawTrackEvent ev;
      ev.delta_ticks = delta.value;
      ev.tick = tick;

      std::uint8_t status = byte();
      if (status < 0x80) {
        if (running == 0) {
          fail(ErrorKind::DanglingRunningStatus, "data byte with no running status");
        }
        --pos_;  // the byte is the first data byte
        status = running;
      }

      if (status < 0xF0) {
        running = status;
        read_channel_event(ev, status);
      } else if (status == 0xFF) {
        running = 0;
        ev.kind = EventKind::Meta;
        ev.status = status;
        ev.meta_type = byte();
        const std::uint32_t len = vlq().value;
        ev.data = bytes(len);
        const bool end_of_track = ev.meta_type == kMetaEndOfTrack;
        events.push_back(std::move(ev));
        if (end_of_track) break;
        continue;
      } else if (status == 0xF0 || status == 0xF7) {
        running = 0;
        ev.kind = EventKind::SysEx;
        ev.status = status;
        const std::uint32_t len = vlq().value;
        ev.data = bytes(len);
      } else {
        fail(ErrorKind::StructureError, "system message 0x" + hex(status) + " is not valid in a file");
      }
      events.push_back(std::move(ev));
    }
    return events;
  }

 private:
  void read_channel_event(RawTrackEvent& ev, std::uint8_t status) {
    ev.status = status;
    ev.channel = status & 0x0F;
    ev.data = bytes(channel_data_length(status));
    for (std::uint8_t d : ev.data) {
      if (d & 0x80) fail(ErrorKind::StructureError, "status byte inside channel message data");
    }
    switch (status & 0xF0) {
      case 0x90:
        ev.kind = ev.data[1] == 0 ? EventKind::NoteOff : EventKind::NoteOn;
        break;
      case 0x80:
        ev.kind = EventKind::NoteOff;
        break;
      default:
        ev.kind = EventKind::OtherChannel;
        break;
    }
  }

  VlqResult vlq() {
    try {
      const VlqResult r = decode_vlq(body_.subspan(pos_));
      pos_ += r.consumed;
      return r;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::TruncatedInput) {
        fail(ErrorKind::TruncatedChunk, "quantity runs past chunk end");
      }
      throw;
    }
  }

  std::uint8_t byte() {
    if (pos_ >= body_.size()) fail(ErrorKind::TruncatedChunk, "event runs past chunk end");
    return body_[pos_++];
  }

  std::vector<std::uint8_t> bytes(std::size_t n) {
    if (n > body_.size() - pos_) fail(ErrorKind::TruncatedChunk, "event data runs past chunk end");
    std::vector<std::uint8_t> out(body_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  body_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

  static std::string hex(std::uint8_t v) {
    const char* digits = "0123456789ABCDEF";
    return {digits[v >> 4], digits[v & 0xF]};
  }

  [[noreturn]] void fail(ErrorKind kind, const std::string& what) const {
    throw Error(kind, "track " + std::to_string(track_index_) + " offset " +
                          std::to_string(pos_) + ": " + what);
  }

  std::span<const std::uint8_t> body_;
  std::size_t track_index_;
  std::size_t pos_ = 0;
};

}  // namespace

VlqResult decode_vlq(std::span<const std::uint8_t> bytes) {
  std::uint32_t value = 0;
  for (std::size_t i = 0; i < kMaxVlqBytes; ++i) {
    if (i >= bytes.size()) throw Error(ErrorKind::TruncatedInput, "input ends inside a VLQ");
    const std::uint8_t b = bytes[i];
    value = (value << 7) | (b & 0x7F);
    if ((b & 0x80) == 0) return {value, i + 1};
  }
  throw Error(ErrorKind::VlqOverrun, "VLQ longer than 4 bytes");
}

SmfFile parse_smf(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || !tag_is(bytes, 0, "MThd")) {
    throw Error(ErrorKind::BadMagic, "missing MThd chunk");
  }
  const std::uint32_t header_len = read_be32(bytes, 4);
  if (header_len < 6 || bytes.size() - 8 < header_len) {
    throw Error(ErrorKind::TruncatedChunk, "MThd chunk shorter than declared or than 6 bytes");
  }

  SmfFile file;
  file.header.format = read_be16(bytes, 8);
  file.header.track_count = read_be16(bytes, 10);
  const std::uint16_t division = read_be16(bytes, 12);
  if (division & 0x8000) {
    throw Error(ErrorKind::SmpteDivisionUnsupported, "SMPTE time division is not supported");
  }
  file.header.division = division;

  if (file.header.format > 2) {
    throw Error(ErrorKind::StructureError, "unknown SMF format " + std::to_string(file.header.format));
  }
  if (file.header.division == 0) throw Error(ErrorKind::StructureError, "division must be positive");
  if (file.header.track_count == 0) throw Error(ErrorKind::StructureError, "file declares no tracks");
  if (file.header.format == 0 && file.header.track_count != 1) {
    throw Error(ErrorKind::StructureError, "format 0 requires exactly one track");
  }

  std::size_t pos = 8 + header_len;
  while (pos < bytes.size() && file.tracks.size() < file.header.track_count) {
    if (bytes.size() - pos < 8) throw Error(ErrorKind::TruncatedChunk, "chunk header runs past end of file");
    const std::uint32_t len = read_be32(bytes, pos + 4);
    if (bytes.size() - pos - 8 < len) {
      throw Error(ErrorKind::TruncatedChunk, "chunk at offset " + std::to_string(pos) + " runs past end of file");
    }
    if (tag_is(bytes, pos, "MTrk")) {
      TrackReader reader(bytes.subspan(pos + 8, len), file.tracks.size());
      file.tracks.push_back(reader.read());
    }
    pos += 8 + len;
  }
  if (file.tracks.size() != file.header.track_count) {
    throw Error(ErrorKind::StructureError, "header declares " + std::to_string(file.header.track_count) +
                                               " tracks, found " + std::to_string(file.tracks.size()));
  }
  return file;
}

SmfFile read_smf_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_smf(data);
}

TempoMap tempo_map_from_track(const Track& track, Diagnostics* diagnostics) {
  std::vector<TempoSegment> raw;
  for (const RawTrackEvent& ev : track) {
    if (ev.kind != EventKind::Meta || ev.meta_type != kMetaSetTempo) continue;
    if (ev.data.size() != 3) {
      if (diagnostics) {
        ++diagnostics->malformed_tempo_events;
        diagnostics->messages.push_back("tempo event at tick " + std::to_string(ev.tick) + " has length " +
                                        std::to_string(ev.data.size()));
      }
      continue;
    }
    const std::uint32_t us = (std::uint32_t{ev.data[0]} << 16) | (std::uint32_t{ev.data[1]} << 8) | ev.data[2];
    if (us == 0) {
      if (diagnostics) ++diagnostics->malformed_tempo_events;
      continue;
    }
    if (!raw.empty() && raw.back().start_tick == ev.tick) {
      raw.back().us_per_quarter = us;
    } else {
      raw.push_back({ev.tick, us});
    }
  }
  TempoMap map;
  if (raw.empty() || raw.front().start_tick != 0) map.segments.push_back({0, kDefaultTempo});
  map.segments.insert(map.segments.end(), raw.begin(), raw.end());
  return map;
}

TempoMap build_tempo_map(const SmfFile& file, Diagnostics* diagnostics) {
  if (file.tracks.empty()) return TempoMap{{{0, kDefaultTempo}}};
  if (file.header.format == 1 && diagnostics) {
    for (std::size_t t = 1; t < file.tracks.size(); ++t) {
      for (const RawTrackEvent& ev : file.tracks[t]) {
        if (ev.kind == EventKind::Meta && ev.meta_type == kMetaSetTempo) {
          ++diagnostics->ignored_tempo_events;
          diagnostics->messages.push_back("tempo event in track " + std::to_string(t) + " at tick " +
                                          std::to_string(ev.tick) + " ignored");
        }
      }
    }
  }
  return tempo_map_from_track(file.tracks.front(), diagnostics);
}

double ticks_to_seconds(const TempoMap& map, std::uint16_t division, std::uint64_t tick) {
  // Accumulate tick*microseconds exactly as an integer and divide once.
  unsigned __int128 numerator = 0;
  const auto& segs = map.segments;
  for (std::size_t i = 0; i < segs.size() && segs[i].start_tick < tick; ++i) {
    const std::uint64_t seg_end = (i + 1 < segs.size()) ? std::min<std::uint64_t>(segs[i + 1].start_tick, tick) : tick;
    numerator += static_cast<unsigned __int128>(seg_end - segs[i].start_tick) * segs[i].us_per_quarter;
  }
  const auto whole = static_cast<std::uint64_t>(numerator / division);
  const auto rest = static_cast<std::uint64_t>(numerator % division);
  // whole microseconds plus the sub-microsecond remainder
  return (static_cast<double>(whole) + static_cast<double>(rest) / division) / 1e6;
}

NoteTimeline extract_notes(const SmfFile& file, const TempoMap& map,
                           const std::optional<std::set<std::uint8_t>>& channel_filter,
                           Diagnostics* diagnostics) {
  struct Open {
    std::uint64_t tick;
    std::uint8_t velocity;
  };
  struct Pending {
    std::uint64_t on_tick;
    std::uint64_t off_tick;
    std::uint8_t pitch;
    std::uint8_t velocity;
    std::uint8_t channel;
    std::uint16_t track;
  };

  NoteTimeline timeline;
  const std::uint16_t division = file.header.division;

  for (std::size_t t = 0; t < file.tracks.size(); ++t) {
    const Track& track = file.tracks[t];
    const TempoMap local = file.header.format == 2 ? tempo_map_from_track(track) : TempoMap{};
    const TempoMap& tempo = file.header.format == 2 ? local : map;
    const auto seconds = [&](std::uint64_t tick) { return ticks_to_seconds(tempo, division, tick); };

    std::map<std::pair<std::uint8_t, std::uint8_t>, std::deque<Open>> open;
    std::vector<Pending> done;
    std::uint64_t end_tick = 0;

    for (const RawTrackEvent& ev : track) {
      end_tick = ev.tick;
      if (ev.kind != EventKind::NoteOn && ev.kind != EventKind::NoteOff) continue;
      if (channel_filter && !channel_filter->contains(ev.channel)) continue;
      const auto key = std::make_pair(ev.channel, ev.data[0]);
      if (ev.kind == EventKind::NoteOn) {
        open[key].push_back({ev.tick, ev.data[1]});
        continue;
      }
      auto it = open.find(key);
      if (it == open.end() || it->second.empty()) {
        if (diagnostics) ++diagnostics->orphan_note_offs;
        continue;
      }
      const Open on = it->second.front();
      it->second.pop_front();
      done.push_back({on.tick, ev.tick, ev.data[0], on.velocity, ev.channel, static_cast<std::uint16_t>(t)});
    }
    for (auto& [key, queue] : open) {
      for (const Open& on : queue) {
        if (diagnostics) ++diagnostics->unterminated_notes;
        done.push_back({on.tick, end_tick, key.second, on.velocity, key.first, static_cast<std::uint16_t>(t)});
      }
    }
    // restore emission order (by note-on) before converting
    std::stable_sort(done.begin(), done.end(),
                     [](const Pending& a, const Pending& b) { return a.on_tick < b.on_tick; });

    for (const Pending& p : done) {
      if (p.off_tick == p.on_tick) {
        if (diagnostics) ++diagnostics->zero_duration_notes;
        continue;
      }
      const double onset = seconds(p.on_tick);
      timeline.notes.push_back({onset, seconds(p.off_tick) - onset, p.pitch, p.velocity, p.channel, p.track});
    }
    timeline.end_s = std::max(timeline.end_s, seconds(end_tick));
  }

  std::stable_sort(timeline.notes.begin(), timeline.notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return std::tie(a.onset_s, a.track, a.pitch) < std::tie(b.onset_s, b.track, b.pitch);
  });
  for (const NoteEvent& n : timeline.notes) timeline.end_s = std::max(timeline.end_s, n.end_s());
  if (diagnostics && diagnostics->zero_duration_notes > 0) {
    diagnostics->messages.push_back(std::to_string(diagnostics->zero_duration_notes) +
                                    " zero-duration notes dropped");
  }
  return timeline;
}

}  // namespace fusion::smf
