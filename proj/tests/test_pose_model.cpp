#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "fusion/error.h"
#include "fusion/pose_model.h"
#include "fusion/render.h"
#include "test_support.h"

using namespace fusion;

namespace {

std::string data_file(const std::string& rel) { return std::string(FUSION_TEST_DATA) + "/" + rel; }

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::InvalidArgument;
}

const char* kTestProfile = R"(
instrument: guitar
name: test
chord_window_s: 0.03125
mask: {LeftHand: 1, LeftIndexProximal: 1, LeftLowerArm: 1}
shapes:
  - id: EAD
    pitch_classes: [4, 9, 2]
    pose: {LeftIndexProximal: [30, 0, 0]}
  - id: CEG
    pitch_classes: [0, 4, 7]
    pose: {LeftIndexProximal: [40, 0, 0]}
  - id: AC
    pitch_classes: [9, 0]
    pose: {LeftIndexProximal: [50, 0, 0]}
  - id: low
    pitches: [40, 45]
    pose: {LeftHand: [0, 10, 0]}
fallback:
  rule: linear
  joint: LeftLowerArm
  reference_pitch: 52
  spacing_m: 0.02
  reach_m: 0.4
)";

smf::NoteEvent note(double onset, int pitch, int vel = 100, double dur = 0.5) {
  return {onset, dur, static_cast<std::uint8_t>(pitch), static_cast<std::uint8_t>(vel), 0, 0};
}

/// O(n^2) grouping oracle: a note starts a group iff it lies more than the
/// window after every earlier group start; members join the latest start.
std::vector<std::vector<std::size_t>> oracle_groups(const std::vector<smf::NoteEvent>& notes, double window) {
  std::vector<bool> starter(notes.size(), false);
  for (std::size_t i = 0; i < notes.size(); ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < i; ++j) {
      if (starter[j] && !(notes[i].onset_s - notes[j].onset_s > window)) ok = false;
    }
    starter[i] = ok;
  }
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < notes.size(); ++i) {
    if (starter[i]) groups.emplace_back();
    groups.back().push_back(i);
  }
  return groups;
}

/// Expected events for the oracle groups, shape choice by exhaustive scan.
std::vector<ChordEvent> oracle_events(const std::vector<smf::NoteEvent>& notes, const InstrumentProfile& p) {
  std::vector<ChordEvent> out;
  for (const auto& g : oracle_groups(notes, p.chord_window_s)) {
    std::string best;
    std::size_t best_overlap = 0;
    for (const ChordShape& s : p.shapes) {
      std::set<int> keys;
      for (std::size_t i : g) keys.insert(s.pitch_classes ? notes[i].pitch % 12 : notes[i].pitch);
      std::size_t o = 0;
      for (int k : keys) o += s.pitches.count(k);
      if (o > best_overlap || (o == best_overlap && o > 0 && s.id < best)) {
        best = s.id;
        best_overlap = o;
      }
    }
    if (best_overlap >= static_cast<std::size_t>(p.min_shape_overlap)) {
      ChordEvent ev{notes[g.front()].onset_s, best, {}, 0};
      for (std::size_t i : g) {
        ev.member_notes.push_back(notes[i]);
        ev.peak_velocity = std::max(ev.peak_velocity, notes[i].velocity);
      }
      out.push_back(ev);
    } else {
      for (std::size_t i : g) out.push_back({notes[i].onset_s, {}, {notes[i]}, notes[i].velocity});
    }
  }
  return out;
}

bool same_events(const std::vector<ChordEvent>& a, const std::vector<ChordEvent>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].onset_s != b[i].onset_s || a[i].shape_id != b[i].shape_id || a[i].peak_velocity != b[i].peak_velocity ||
        a[i].member_notes != b[i].member_notes) {
      return false;
    }
  }
  return true;
}

/// General MIDI percussion names (channel 10) and the kit piece each one is
/// played on, written out from the GM 1 sound set.
const std::map<int, std::string> kGmNames = {
    {35, "Acoustic Bass Drum"}, {36, "Bass Drum 1"},  {37, "Side Stick"},    {38, "Acoustic Snare"},
    {39, "Hand Clap"},          {40, "Electric Snare"}, {41, "Low Floor Tom"}, {42, "Closed Hi-Hat"},
    {43, "High Floor Tom"},     {44, "Pedal Hi-Hat"}, {45, "Low Tom"},       {46, "Open Hi-Hat"},
    {47, "Low-Mid Tom"},        {48, "Hi-Mid Tom"},   {49, "Crash Cymbal 1"}, {50, "High Tom"},
    {51, "Ride Cymbal 1"},      {52, "Chinese Cymbal"}, {53, "Ride Bell"},   {55, "Splash Cymbal"},
    {57, "Crash Cymbal 2"},     {59, "Ride Cymbal 2"},
};

std::string piece_from_name(const std::string& name) {
  auto has = [&](const char* s) { return name.find(s) != std::string::npos; };
  if (has("Bass Drum")) return "kick";
  if (has("Snare") || has("Side Stick") || has("Clap")) return "snare";
  if (has("Floor Tom")) return "tom_floor";
  if (has("Low Tom") || has("Low-Mid Tom")) return "tom_mid";
  if (has("Hi-Mid Tom") || has("High Tom")) return "tom_high";
  if (has("Open Hi-Hat")) return "hihat_open";
  if (has("Hi-Hat")) return "hihat";
  if (has("Ride")) return "ride";
  if (has("Crash") || has("Chinese") || has("Splash")) return "crash";
  return "";
}

}  // namespace

TEST_CASE("profile parsing") {
  const InstrumentProfile p = parse_profile(kTestProfile);
  CHECK(p.instrument == Instrument::Guitar);
  CHECK(p.layer == "test");
  CHECK(p.shapes.size() == 4);
  CHECK(p.min_shape_overlap == 2);
  CHECK(p.find_shape("low")->pitch_classes == false);
  CHECK(angle_between(p.find_shape("EAD")->pose.joints.at("LeftIndexProximal"),
                      from_axis_angle({1, 0, 0}, deg_to_rad(30))) < 1e-12);
}

TEST_CASE("profile validation errors") {
  auto bad = [](std::string from, std::string to) {
    std::string text = kTestProfile;
    text.replace(text.find(from), from.size(), to);
    return kind_of([&] { parse_profile(text); });
  };
  CHECK(bad("id: AC", "id: 57") == ErrorKind::ConfigError);
  CHECK(bad("id: AC", "id: EAD") == ErrorKind::ConfigError);
  CHECK(bad("pose: {LeftHand: [0, 10, 0]}", "pose: {Head: [0, 10, 0]}") == ErrorKind::ConfigError);
  CHECK(bad("rule: linear", "rule: spiral") == ErrorKind::ConfigError);
  CHECK(bad("instrument: guitar", "instrument: kazoo") == ErrorKind::ConfigError);
  CHECK(bad("reach_m: 0.4", "reach_m: 0") == ErrorKind::ConfigError);
  CHECK(kind_of([] { parse_profile("{unclosed"); }) == ErrorKind::ConfigError);
  CHECK(kind_of([] { load_profile("/nonexistent.yaml"); }) == ErrorKind::IoError);
}

TEST_CASE("detect_chords examples") {
  const InstrumentProfile p = parse_profile(kTestProfile);
  CHECK(detect_chords({}, p).empty());

  smf::NoteTimeline t{{note(0.0, 40), note(0.010, 45), note(0.020, 50, 120)}, 0.52};
  const auto chords = detect_chords(t, p);
  REQUIRE(chords.size() == 1);
  CHECK(chords[0].member_notes.size() == 3);
  CHECK(chords[0].peak_velocity == 120);
  // pitch-class overlap 3 beats the absolute "low" shape with 2
  CHECK(chords[0].shape_id == "EAD");
}

TEST_CASE("shape ties go to the smallest id") {
  const InstrumentProfile p = parse_profile(kTestProfile);
  // A + C overlaps AC (2) and CEG only 1; C + E overlaps CEG (2) only
  smf::NoteTimeline t{{note(0.0, 57), note(0.0, 60), note(1.0, 60), note(1.0, 64), note(2.0, 64), note(2.0, 69)}, 3};
  const auto chords = detect_chords(t, p);
  REQUIRE(chords.size() == 3);
  CHECK(chords[0].shape_id == "AC");
  CHECK(chords[1].shape_id == "CEG");
  // E + A: EAD has 2, nothing else reaches 2
  CHECK(chords[2].shape_id == "EAD");
}

TEST_CASE("single notes and weak matches fall back per note") {
  const InstrumentProfile p = parse_profile(kTestProfile);
  smf::NoteTimeline t{{note(0.0, 61), note(0.01, 66), note(1.0, 60)}, 2};
  const auto chords = detect_chords(t, p);
  REQUIRE(chords.size() == 3);
  for (const auto& c : chords) {
    CHECK(c.is_fallback());
    CHECK(c.member_notes.size() == 1);
  }
}

TEST_CASE("grouping equals the brute-force grouper on every small grid timeline") {
  InstrumentProfile p = parse_profile(kTestProfile);
  const double step = 1.0 / 64.0;  // window is exactly two steps
  const int pitches[] = {40, 45, 50, 57, 60, 64, 67, 69, 52, 62, 71, 48};
  std::size_t cases = 0;
  for (int n = 1; n <= 12; ++n) {
    const int base = n <= 9 ? 4 : 3;  // gap alphabet {0,1,2,3} or {0,1,3}
    std::size_t combos = 1;
    for (int i = 1; i < n; ++i) combos *= static_cast<std::size_t>(base);
    for (std::size_t code = 0; code < combos; ++code) {
      std::vector<smf::NoteEvent> notes;
      std::size_t c = code;
      double onset = 0.0;
      for (int i = 0; i < n; ++i) {
        if (i > 0) {
          const int digit = static_cast<int>(c % base);
          c /= base;
          onset += step * (base == 4 ? digit : (digit == 2 ? 3 : digit));
        }
        notes.push_back(note(onset, pitches[(i + code) % 12], 1 + static_cast<int>((code + i) % 127)));
      }
      smf::NoteTimeline t{notes, onset + 0.5};
      const auto got = detect_chords(t, p);
      REQUIRE(same_events(got, oracle_events(notes, p)));
      ++cases;
    }
  }
  CHECK(cases > 100000);
}

TEST_CASE("grouping partitions random timelines like the oracle") {
  InstrumentProfile p = parse_profile(kTestProfile);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> gap(0.0, 0.05);
  std::uniform_int_distribution<int> pitch(36, 80), vel(1, 127);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<smf::NoteEvent> notes;
    double t = 0.0;
    for (int i = 0; i < 60; ++i) {
      t += gap(rng) < 0.02 ? 0.0 : gap(rng);
      notes.push_back(note(t, pitch(rng), vel(rng)));
    }
    const auto got = detect_chords({notes, t + 1.0}, p);
    REQUIRE(same_events(got, oracle_events(notes, p)));
    std::size_t members = 0;
    for (const auto& c : got) {
      members += c.member_notes.size();
      for (const auto& m : c.member_notes) CHECK(m.onset_s - c.onset_s <= p.chord_window_s);
    }
    CHECK(members == notes.size());
  }
}

TEST_CASE("map_event_to_pose") {
  const InstrumentProfile p = parse_profile(kTestProfile);
  ChordEvent ev{0.0, "CEG", {note(0, 60)}, 100};
  const MappedPose m = map_event_to_pose(p, ev);
  CHECK(m.target == p.find_shape("CEG")->pose);
  CHECK(m.transition_s == p.find_shape("CEG")->transition_s);

  ev.shape_id = "Bb13";
  CHECK(kind_of([&] { map_event_to_pose(p, ev); }) == ErrorKind::ProfileMismatch);
  CHECK(kind_of([&] { resolve_note_code(p, "Bb13"); }) == ErrorKind::ProfileMismatch);
  CHECK(resolve_note_code(p, "CEG").target == m.target);
}

TEST_CASE("piano fallback offset follows key spacing from the reference pitch") {
  const InstrumentProfile piano = load_profile(data_file("profiles/piano.yaml"));
  const FallbackRule& fb = piano.fallback;
  REQUIRE(fb.reference_pitch != 60);
  const MappedPose m = map_event_to_pose(piano, ChordEvent{0.0, {}, {note(0, 60)}, 90});
  const double expected = fb.spacing_m * (60 - fb.reference_pitch);
  CHECK(m.target.lateral_offset_m == doctest::Approx(expected).epsilon(1e-12));
  // the joint yaw realizes that offset at the profile's reach
  const Quat base = fb.base_pose.joints.at(fb.joint);
  const Quat yaw = m.target.joints.at(fb.joint) * inverse(base);
  CHECK(angle_between(yaw, from_axis_angle(fb.axis, std::atan(expected / fb.reach_m))) < 1e-12);
  CHECK(resolve_note_code(piano, "60").target == m.target);
}

TEST_CASE("drum hits use the general midi kit map") {
  const InstrumentProfile drums = load_profile(data_file("profiles/drums.yaml"));
  for (int pitch = 0; pitch <= 127; ++pitch) {
    const auto named = kGmNames.find(pitch);
    const std::string want = named == kGmNames.end() ? "" : piece_from_name(named->second);
    REQUIRE(std::string(gm_drum_piece(pitch)) == want);
    const MappedPose m = map_event_to_pose(drums, ChordEvent{0.0, {}, {note(0, pitch)}, 100});
    const std::string used = want.empty() || !drums.fallback.pieces.contains(want) ? drums.fallback.default_piece : want;
    REQUIRE(m.target == drums.fallback.pieces.at(used));
  }
}

TEST_CASE("shipped profiles are total over all pitches") {
  for (const char* name : {"guitar", "bass", "piano", "drums"}) {
    const InstrumentProfile p = load_profile(data_file(std::string("profiles/") + name + ".yaml"));
    CHECK(p.name == name);
    const Skeleton s = make_humanoid_skeleton();
    for (int pitch = 0; pitch <= 127; ++pitch) {
      const MappedPose m = resolve_note_code(p, std::to_string(pitch));
      PoseFrame f = rest_pose(s);
      CHECK_NOTHROW(apply_target(s, m.target, f));
    }
    for (const auto& shape : p.shapes) CHECK_NOTHROW(resolve_note_code(p, shape.id));
    CHECK_NOTHROW(AvatarMask::from_joints(s, p.mask));
  }
}

TEST_CASE("bass profile drives the arms only") {
  const InstrumentProfile bass = load_profile(data_file("profiles/bass.yaml"));
  const Skeleton s = make_humanoid_skeleton();
  const AvatarMask arms = named_mask(s, "arms");
  for (const auto& [joint, w] : bass.mask) CHECK(arms[s.index_of(joint)] == 1.0);
}

TEST_CASE("apply_target rejects unknown joints") {
  const Skeleton s = make_humanoid_skeleton();
  PoseFrame f = rest_pose(s);
  PoseTarget t;
  t.joints["Tail"] = Quat::identity();
  CHECK(kind_of([&] { apply_target(s, t, f); }) == ErrorKind::SkeletonMismatch);
}

TEST_CASE("viseme track parsing") {
  const VisemeTrack t = parse_viseme_track("# lip sync\n0.0 aa 1.0\n\n0.5 ou 0.25  # trailing\n");
  REQUIRE(t.keys.size() == 2);
  CHECK(t.keys[1].viseme == "ou");
  CHECK(t.keys[1].weight == 0.25);
  CHECK(kind_of([] { parse_viseme_track("0.0 aa\n"); }) == ErrorKind::ConfigError);
  CHECK(kind_of([] { parse_viseme_track("0.5 aa 1\n0.1 ou 1\n"); }) == ErrorKind::ConfigError);
  CHECK(kind_of([] { parse_viseme_track("0.0 aa 1.5\n"); }) == ErrorKind::ConfigError);
}

TEST_CASE("viseme weights and face layer") {
  const Skeleton s = make_humanoid_skeleton();
  const AvatarMask face = named_mask(s, "face");
  VisemeSet set;
  set["A"].joints["Jaw"] = from_axis_angle({1, 0, 0}, deg_to_rad(20));
  set["O"].joints["Jaw"] = from_axis_angle({1, 0, 0}, deg_to_rad(10));

  SUBCASE("empty track is identity everywhere") {
    const Layer l = viseme_to_face_layer({}, set, s, face);
    CHECK(l.mode == BlendMode::Additive);
    CHECK(evaluate_layer(l, 0.7) == PoseFrame::identity(s.size()));
  }
  SUBCASE("single key") {
    const VisemeTrack t{{{1.0, "A", 1.0}}};
    const Layer l = viseme_to_face_layer(t, set, s, face);
    const std::size_t jaw = s.index_of("Jaw");
    CHECK(angle_between(evaluate_layer(l, 1.0).rotations[jaw], set["A"].joints["Jaw"]) < 1e-12);
    CHECK(evaluate_layer(l, 0.0).rotations[jaw] == Quat::identity());
    CHECK(evaluate_layer(l, 1.0 + kVisemeRampSeconds).rotations[jaw] == Quat::identity());
    CHECK(evaluate_layer(l, 5.0).rotations[jaw] == Quat::identity());
    CHECK(viseme_weights(t, 1.05).at("A") == doctest::Approx(0.5));
  }
  SUBCASE("two keys ramp linearly") {
    const VisemeTrack t{{{0.0, "A", 0.0}, {1.0, "A", 1.0}}};
    CHECK(viseme_weights(t, 0.5).at("A") == doctest::Approx(0.5));
  }
  SUBCASE("unknown viseme") {
    const VisemeTrack t{{{0.0, "Z", 1.0}}};
    CHECK(kind_of([&] { viseme_to_face_layer(t, set, s, face); }) == ErrorKind::UnknownViseme);
  }
  SUBCASE("shipped viseme set resolves on the humanoid") {
    std::ifstream in(data_file("visemes.yaml"));
    std::stringstream buf;
    buf << in.rdbuf();
    const VisemeSet shipped = parse_viseme_set(buf.str());
    VisemeTrack t;
    double time = 0.0;
    for (const auto& [id, pose] : shipped) t.keys.push_back({time += 0.1, id, 1.0});
    CHECK_NOTHROW(viseme_to_face_layer(t, shipped, s, face));
  }
}
