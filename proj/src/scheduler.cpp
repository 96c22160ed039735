#include "fusion/scheduler.h"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>
#include <thread>

#include "fusion/error.h"

namespace fusion {

namespace {

double chord_duration(const ChordEvent& chord) {
  double end = chord.onset_s;
  for (const auto& n : chord.member_notes) end = std::max(end, n.end_s());
  return end - chord.onset_s;
}

std::string note_code_of(const ChordEvent& chord) {
  if (!chord.is_fallback()) return chord.shape_id;
  return std::to_string(chord.member_notes.front().pitch);
}

std::string format_time(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", t);
  return buf;
}

}  // namespace

EventTimeline compile_events(const std::vector<ChordEvent>& chords, const InstrumentProfile& profile) {
  EventTimeline out;
  const std::size_t n = chords.size();

  std::vector<MappedPose> mapped;
  mapped.reserve(n);
  for (const ChordEvent& c : chords) mapped.push_back(map_event_to_pose(profile, c));

  std::vector<double> attack(n);
  for (std::size_t i = 0; i < n; ++i) attack[i] = std::max(0.0, chords[i].onset_s - mapped[i].transition_s);

  // earliest attack among the chords that follow i
  std::vector<double> next_attack(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = n; i-- > 1;) next_attack[i - 1] = std::min(attack[i], next_attack[i]);

  double duration = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const ChordEvent& c = chords[i];
    const double sustain = profile.sustain.fixed_s ? *profile.sustain.fixed_s
                                                   : std::min(chord_duration(c), profile.sustain.max_s);
    const double release = std::max(c.onset_s, std::min(c.onset_s + sustain, next_attack[i]));
    const std::string code = note_code_of(c);
    out.events.push_back({attack[i], kAttack, code, c.peak_velocity, profile.layer});
    out.events.push_back({c.onset_s, kStrike, code, c.peak_velocity, profile.layer});
    out.events.push_back({release, kRelease, code, c.peak_velocity, profile.layer});
    duration = std::max({duration, release, c.onset_s + chord_duration(c)});
  }
  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const AnimationEvent& a, const AnimationEvent& b) { return a.time_s < b.time_s; });
  out.duration_s = duration;
  return out;
}

std::string serialize_timeline(const EventTimeline& timeline) {
  std::string out;
  for (const AnimationEvent& e : timeline.events) {
    out += format_time(e.time_s);
    out += '\t';
    out += e.function;
    out += '\t';
    out += e.note_code;
    out += '\t';
    out += std::to_string(e.velocity);
    out += '\t';
    out += e.target_layer;
    out += '\n';
  }
  return out;
}

EventTimeline parse_timeline(const std::string& text) {
  EventTimeline timeline;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 5) {
      throw Error(ErrorKind::ConfigError, "event line " + std::to_string(line_no) + ": expected 5 tab-separated fields");
    }
    AnimationEvent e;
    try {
      e.time_s = std::stod(fields[0]);
      const int vel = std::stoi(fields[3]);
      if (vel < 0 || vel > 127) throw std::out_of_range("velocity");
      e.velocity = static_cast<std::uint8_t>(vel);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ConfigError, "event line " + std::to_string(line_no) + ": bad number");
    }
    if (e.time_s < 0.0 || (!timeline.events.empty() && e.time_s < timeline.events.back().time_s)) {
      throw Error(ErrorKind::ConfigError, "event line " + std::to_string(line_no) + ": times must be sorted and >= 0");
    }
    e.function = fields[1];
    e.note_code = fields[2];
    e.target_layer = fields[4];
    timeline.duration_s = std::max(timeline.duration_s, e.time_s);
    timeline.events.push_back(std::move(e));
  }
  return timeline;
}

double effect_intensity(int velocity) { return std::clamp(velocity / 127.0, 0.0, 1.0); }

WallClock::WallClock(std::chrono::microseconds tick) : origin_(std::chrono::steady_clock::now()), tick_(tick) {}

double WallClock::now() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - origin_).count();
}

void WallClock::wait_until(double t) {
  while (true) {
    const double remaining = t - now();
    if (remaining <= 0.0) return;
    const auto step = std::min<std::chrono::microseconds>(
        tick_, std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(remaining)) +
                   std::chrono::microseconds(1));
    std::this_thread::sleep_for(step);
  }
}

DispatchReport run(const EventTimeline& timeline, const EventSink& sink, Clock& clock) {
  DispatchReport report;
  report.lateness_s.reserve(timeline.events.size());
  for (const AnimationEvent& e : timeline.events) {
    while (clock.now() < e.time_s) clock.wait_until(e.time_s);
    const double lateness = clock.now() - e.time_s;
    if (!sink(e)) {
      throw DispatchAborted(report.delivered, "sink rejected event " + std::to_string(report.delivered) + " ('" +
                                                  e.function + "' at " + format_time(e.time_s) + ")");
    }
    ++report.delivered;
    report.lateness_s.push_back(lateness);
    report.max_lateness_s = std::max(report.max_lateness_s, lateness);
  }
  return report;
}

}  // namespace fusion
