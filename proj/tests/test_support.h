// Shared test helpers: a minimal SMF writer, random poses/stacks and the
// brute-force oracles the property suites compare against.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "fusion/blender.h"
#include "fusion/math.h"
#include "fusion/skeleton.h"
#include "fusion/smf.h"

#ifndef FUSION_TEST_DATA
#define FUSION_TEST_DATA "data"
#endif

namespace testing {

using Bytes = std::vector<std::uint8_t>;

inline Bytes encode_vlq(std::uint32_t v) {
  Bytes out{static_cast<std::uint8_t>(v & 0x7F)};
  while ((v >>= 7) != 0) out.insert(out.begin(), static_cast<std::uint8_t>(0x80 | (v & 0x7F)));
  return out;
}

inline void put_be(Bytes& b, std::uint32_t v, int n) {
  for (int i = n - 1; i >= 0; --i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

/// One event at an absolute tick; `bytes` is the full message with status.
struct WEvent {
  std::uint32_t tick;
  Bytes bytes;
};

inline WEvent note_on(std::uint32_t tick, int ch, int pitch, int vel) {
  return {tick, {static_cast<std::uint8_t>(0x90 | ch), static_cast<std::uint8_t>(pitch), static_cast<std::uint8_t>(vel)}};
}
inline WEvent note_off(std::uint32_t tick, int ch, int pitch, bool as_zero_on = false) {
  if (as_zero_on) return {tick, {static_cast<std::uint8_t>(0x90 | ch), static_cast<std::uint8_t>(pitch), 0}};
  return {tick, {static_cast<std::uint8_t>(0x80 | ch), static_cast<std::uint8_t>(pitch), 64}};
}
inline WEvent tempo(std::uint32_t tick, std::uint32_t us) {
  return {tick, {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(us >> 16), static_cast<std::uint8_t>(us >> 8),
                 static_cast<std::uint8_t>(us)}};
}

/// Serializes a track (events must be tick-sorted); appends End of Track at
/// `end_tick` (or the last event's tick). Running status is used for
/// consecutive channel messages with the same status when requested.
inline Bytes track_chunk(const std::vector<WEvent>& events, bool running_status, std::uint32_t end_tick = 0) {
  Bytes body;
  std::uint32_t last = 0;
  std::uint8_t status = 0;
  for (const WEvent& e : events) {
    const Bytes d = encode_vlq(e.tick - last);
    body.insert(body.end(), d.begin(), d.end());
    last = e.tick;
    const std::uint8_t s = e.bytes[0];
    if (s < 0xF0 && running_status && s == status) {
      body.insert(body.end(), e.bytes.begin() + 1, e.bytes.end());
    } else {
      body.insert(body.end(), e.bytes.begin(), e.bytes.end());
    }
    status = s < 0xF0 ? s : 0;  // meta and sysex cancel running status
  }
  const Bytes d = encode_vlq(std::max(end_tick, last) - last);
  body.insert(body.end(), d.begin(), d.end());
  body.insert(body.end(), {0xFF, 0x2F, 0x00});
  Bytes chunk{'M', 'T', 'r', 'k'};
  put_be(chunk, static_cast<std::uint32_t>(body.size()), 4);
  chunk.insert(chunk.end(), body.begin(), body.end());
  return chunk;
}

inline Bytes smf_file(int format, int division, const std::vector<Bytes>& tracks) {
  Bytes out{'M', 'T', 'h', 'd'};
  put_be(out, 6, 4);
  put_be(out, static_cast<std::uint32_t>(format), 2);
  put_be(out, static_cast<std::uint32_t>(tracks.size()), 2);
  put_be(out, static_cast<std::uint32_t>(division), 2);
  for (const Bytes& t : tracks) out.insert(out.end(), t.begin(), t.end());
  return out;
}

/// Exact rational number for the tempo oracle.
struct Rational {
  __int128 num = 0;
  __int128 den = 1;

  static __int128 gcd(__int128 a, __int128 b) {
    if (a < 0) a = -a;
    while (b != 0) {
      const __int128 t = a % b;
      a = b;
      b = t;
    }
    return a == 0 ? 1 : a;
  }
  Rational reduced() const {
    const __int128 g = gcd(num, den);
    return {num / g, den / g};
  }
  Rational operator+(const Rational& o) const { return Rational{num * o.den + o.num * den, den * o.den}.reduced(); }
  double to_double() const {
    const __int128 whole = num / den;
    const __int128 rest = num % den;
    return static_cast<double>(whole) + static_cast<double>(rest) / static_cast<double>(den);
  }
};

/// Seconds at `tick` by walking (tick, us_per_quarter) changes in order,
/// summing each stretch as ticks * us / (division * 10^6).
inline Rational oracle_seconds(std::vector<std::pair<std::uint64_t, std::uint32_t>> changes, int division,
                               std::uint64_t tick) {
  std::stable_sort(changes.begin(), changes.end(), [](auto a, auto b) { return a.first < b.first; });
  std::uint64_t at = 0;
  std::uint32_t us = 500000;
  Rational total;
  for (const auto& [t, u] : changes) {
    if (t >= tick) break;
    total = total + Rational{static_cast<__int128>(t - at) * us, static_cast<__int128>(division) * 1000000};
    at = t;
    us = u;
  }
  return total + Rational{static_cast<__int128>(tick - at) * us, static_cast<__int128>(division) * 1000000};
}

/// Pairing oracle over a single-track event list at a fixed 120 BPM tempo:
/// each off scans all earlier ons of the same (channel, pitch) for the
/// oldest unmatched one. O(n^2) by construction.
struct OracleNote {
  std::uint64_t on;
  std::uint64_t off;
  int pitch;
  int velocity;
  int channel;
  friend bool operator==(const OracleNote&, const OracleNote&) = default;
  friend bool operator<(const OracleNote& a, const OracleNote& b) {
    return std::tie(a.on, a.pitch, a.channel, a.off, a.velocity) <
           std::tie(b.on, b.pitch, b.channel, b.off, b.velocity);
  }
};

inline std::vector<OracleNote> oracle_pairs(const std::vector<WEvent>& events, std::uint64_t end_tick) {
  std::vector<bool> used(events.size(), false);
  std::vector<OracleNote> out;
  auto is_on = [](const WEvent& e) { return (e.bytes[0] & 0xF0) == 0x90 && e.bytes[2] != 0; };
  auto is_off = [](const WEvent& e) {
    return (e.bytes[0] & 0xF0) == 0x80 || ((e.bytes[0] & 0xF0) == 0x90 && e.bytes[2] == 0);
  };
  for (std::size_t j = 0; j < events.size(); ++j) {
    if (!is_off(events[j])) continue;
    for (std::size_t i = 0; i < j; ++i) {
      if (used[i] || !is_on(events[i])) continue;
      if ((events[i].bytes[0] & 0x0F) != (events[j].bytes[0] & 0x0F) || events[i].bytes[1] != events[j].bytes[1]) continue;
      used[i] = true;
      out.push_back({events[i].tick, events[j].tick, events[i].bytes[1], events[i].bytes[2], events[i].bytes[0] & 0x0F});
      break;
    }
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (is_on(events[i]) && !used[i]) {
      out.push_back({events[i].tick, end_tick, events[i].bytes[1], events[i].bytes[2], events[i].bytes[0] & 0x0F});
    }
  }
  std::erase_if(out, [](const OracleNote& n) { return n.on == n.off; });
  std::sort(out.begin(), out.end());
  return out;
}

/// Parser output mapped back to ticks (division 480 at 120 BPM: 960 ticks/s).
inline std::vector<OracleNote> parsed_pairs(const fusion::smf::NoteTimeline& timeline) {
  std::vector<OracleNote> out;
  for (const auto& n : timeline.notes) {
    out.push_back({static_cast<std::uint64_t>(std::llround(n.onset_s * 960.0)),
                   static_cast<std::uint64_t>(std::llround(n.end_s() * 960.0)), n.pitch, n.velocity, n.channel});
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline fusion::smf::NoteTimeline parse_notes(const Bytes& file_bytes) {
  const auto file = fusion::smf::parse_smf(file_bytes);
  return fusion::smf::extract_notes(file, fusion::smf::build_tempo_map(file));
}

// --- random poses -----------------------------------------------------------

inline fusion::Quat random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return fusion::normalized(fusion::Quat{n(rng), n(rng), n(rng), n(rng)});
}

inline fusion::PoseFrame random_pose(std::mt19937_64& rng, std::size_t joints) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  fusion::PoseFrame f;
  for (std::size_t i = 0; i < joints; ++i) f.rotations.push_back(random_quat(rng));
  f.root_translation = {u(rng), u(rng) + 1.0, u(rng)};
  return f;
}

/// Rotations within `max_rad` of identity: keeps relative angles below pi,
/// where fractional slerp is continuous.
inline fusion::PoseFrame random_small_pose(std::mt19937_64& rng, std::size_t joints, double max_rad) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> a(-max_rad, max_rad);
  fusion::PoseFrame f;
  for (std::size_t i = 0; i < joints; ++i) f.rotations.push_back(fusion::from_axis_angle({n(rng), n(rng), n(rng)}, a(rng)));
  f.root_translation = {a(rng), 1.0, a(rng)};
  return f;
}

inline fusion::AnimationClip random_clip(std::mt19937_64& rng, std::size_t joints, std::size_t frames) {
  fusion::AnimationClip c;
  c.frame_rate = 30.0;
  for (std::size_t k = 0; k < frames; ++k) c.frames.push_back(random_pose(rng, joints));
  return c;
}

inline fusion::AvatarMask random_mask(std::mt19937_64& rng, std::size_t joints) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w;
  for (std::size_t i = 0; i < joints; ++i) {
    const double r = u(rng);
    w.push_back(r < 0.3 ? 0.0 : r < 0.6 ? 1.0 : u(rng));
  }
  return fusion::AvatarMask(std::move(w));
}

/// Rotation distance that ignores the q / -q sign ambiguity.
inline double quat_distance(const fusion::Quat& a, const fusion::Quat& b) { return fusion::angle_between(a, b); }

}  // namespace testing
