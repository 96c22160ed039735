/// @file
/// @brief Chord grouping, shape matching, fallback poses and viseme layers.

#include "fusion/pose_model.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "fusion/error.h"

namespace fusion {

namespace {

bool is_decimal(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

int pitch_key(int pitch, bool classes) { return classes ? pitch % 12 : pitch; }

std::size_t overlap(const ChordShape& shape, const std::vector<smf::NoteEvent>& notes) {
  std::set<int> group;
  for (const auto& n : notes) group.insert(pitch_key(n.pitch, shape.pitch_classes));
  std::size_t count = 0;
  for (int p : group) count += shape.pitches.count(p);
  return count;
}

// ---------------------------------------------------------------------------
// YAML helpers
// ---------------------------------------------------------------------------

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::ConfigError, what); }

Quat read_rotation(const YAML::Node& node, const std::string& where) {
  if (!node.IsSequence() || node.size() != 3) config_error(where + ": rotation must be [x, y, z] degrees");
  return euler_deg_zxy(node[0].as<double>(), node[1].as<double>(), node[2].as<double>());
}

PoseTarget read_pose(const YAML::Node& node, const std::string& where) {
  PoseTarget pose;
  if (!node) return pose;
  if (!node.IsMap()) config_error(where + ": pose must map joint names to rotations");
  for (const auto& kv : node) {
    const auto joint = kv.first.as<std::string>();
    pose.joints[joint] = read_rotation(kv.second, where + "." + joint);
  }
  return pose;
}

Vec3 read_vec3(const YAML::Node& node, const std::string& where) {
  if (!node.IsSequence() || node.size() != 3) config_error(where + ": expected [x, y, z]");
  return {node[0].as<double>(), node[1].as<double>(), node[2].as<double>()};
}

template <typename T>
T get_or(const YAML::Node& node, const char* key, T fallback) {
  const YAML::Node v = node[key];
  return v ? v.as<T>() : fallback;
}

}  // namespace

std::string_view instrument_name(Instrument instrument) {
  switch (instrument) {
    case Instrument::Guitar: return "guitar";
    case Instrument::Bass: return "bass";
    case Instrument::Piano: return "piano";
    case Instrument::Drums: return "drums";
  }
  return "unknown";
}

Instrument parse_instrument(std::string_view name) {
  if (name == "guitar") return Instrument::Guitar;
  if (name == "bass") return Instrument::Bass;
  if (name == "piano") return Instrument::Piano;
  if (name == "drums") return Instrument::Drums;
  config_error("unknown instrument '" + std::string(name) + "'");
}

const ChordShape* InstrumentProfile::find_shape(std::string_view id) const {
  for (const ChordShape& s : shapes) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

void validate_profile(const InstrumentProfile& profile) {
  const std::string who = "profile '" + profile.name + "'";
  if (profile.chord_window_s < 0.0) config_error(who + ": chord_window_s must be non-negative");
  auto check_pose = [&](const PoseTarget& pose, const std::string& what) {
    for (const auto& [joint, q] : pose.joints) {
      if (!profile.mask.contains(joint)) config_error(who + ": " + what + " poses joint '" + joint + "' outside the mask");
    }
  };
  std::set<std::string> ids;
  for (const ChordShape& s : profile.shapes) {
    if (s.id.empty() || is_decimal(s.id)) config_error(who + ": shape id '" + s.id + "' must be a non-numeric symbol");
    if (!ids.insert(s.id).second) config_error(who + ": duplicate shape id '" + s.id + "'");
    if (s.pitches.empty()) config_error(who + ": shape '" + s.id + "' has an empty pitch set");
    check_pose(s.pose, "shape '" + s.id + "'");
  }
  check_pose(profile.rest, "rest");
  const FallbackRule& fb = profile.fallback;
  check_pose(fb.base_pose, "fallback");
  if (fb.kind == FallbackRule::Kind::Linear) {
    if (!profile.mask.contains(fb.joint)) config_error(who + ": fallback joint '" + fb.joint + "' outside the mask");
    if (fb.reach_m <= 0.0) config_error(who + ": fallback reach_m must be positive");
  } else {
    if (!fb.pieces.contains(fb.default_piece)) {
      config_error(who + ": default_piece '" + fb.default_piece + "' is not a defined piece");
    }
    for (const auto& [piece, pose] : fb.pieces) check_pose(pose, "piece '" + piece + "'");
  }
}

InstrumentProfile parse_profile(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    config_error(std::string("profile is not valid YAML: ") + e.what());
  }
  if (!root.IsMap()) config_error("profile must be a mapping");

  InstrumentProfile p;
  try {
    p.instrument = parse_instrument(root["instrument"].as<std::string>(""));
    p.name = get_or<std::string>(root, "name", std::string(instrument_name(p.instrument)));
    p.layer = get_or<std::string>(root, "layer", p.name);
    if (const YAML::Node ch = root["channels"]) {
      std::set<std::uint8_t> set;
      for (const auto& c : ch) {
        const int v = c.as<int>();
        if (v < 0 || v > 15) config_error("channel " + std::to_string(v) + " out of range 0-15");
        set.insert(static_cast<std::uint8_t>(v));
      }
      p.channels = std::move(set);
    }
    p.chord_window_s = get_or(root, "chord_window_s", 0.030);
    p.min_shape_overlap = get_or(root, "min_shape_overlap", 2);
    const double transition = get_or(root, "transition_s", 0.15);
    p.release_transition_s = get_or(root, "release_transition_s", transition);
    if (const YAML::Node s = root["sustain"]) {
      if (s["fixed_s"]) p.sustain.fixed_s = s["fixed_s"].as<double>();
      p.sustain.max_s = get_or(s, "max_s", 2.0);
    }
    if (const YAML::Node m = root["mask"]) {
      for (const auto& kv : m) p.mask[kv.first.as<std::string>()] = kv.second.as<double>();
    }
    p.rest = read_pose(root["rest"], "rest");

    if (const YAML::Node shapes = root["shapes"]) {
      for (const auto& s : shapes) {
        ChordShape shape;
        shape.id = s["id"].as<std::string>("");
        if (s["pitch_classes"]) {
          for (const auto& v : s["pitch_classes"]) shape.pitches.insert(((v.as<int>() % 12) + 12) % 12);
          shape.pitch_classes = true;
        } else if (s["pitches"]) {
          for (const auto& v : s["pitches"]) shape.pitches.insert(v.as<int>());
          shape.pitch_classes = false;
        }
        shape.transition_s = get_or(s, "transition_s", transition);
        shape.pose = read_pose(s["pose"], "shape " + shape.id);
        p.shapes.push_back(std::move(shape));
      }
    }

    const YAML::Node fb = root["fallback"];
    if (!fb) config_error("profile needs a fallback rule");
    const auto rule = fb["rule"].as<std::string>("linear");
    p.fallback.transition_s = get_or(fb, "transition_s", transition);
    p.fallback.base_pose = read_pose(fb["pose"], "fallback");
    if (rule == "linear") {
      p.fallback.kind = FallbackRule::Kind::Linear;
      p.fallback.joint = fb["joint"].as<std::string>("");
      if (fb["axis"]) p.fallback.axis = read_vec3(fb["axis"], "fallback.axis");
      p.fallback.reference_pitch = get_or(fb, "reference_pitch", 60);
      p.fallback.spacing_m = get_or(fb, "spacing_m", 0.0);
      p.fallback.reach_m = get_or(fb, "reach_m", 0.5);
    } else if (rule == "gm_drums") {
      p.fallback.kind = FallbackRule::Kind::GmDrums;
      for (const auto& kv : fb["pieces"]) {
        const auto piece = kv.first.as<std::string>();
        p.fallback.pieces[piece] = read_pose(kv.second, "piece " + piece);
      }
      p.fallback.default_piece = fb["default_piece"].as<std::string>("snare");
    } else {
      config_error("unknown fallback rule '" + rule + "'");
    }
  } catch (const YAML::Exception& e) {
    config_error(std::string("profile field has the wrong type: ") + e.what());
  }
  validate_profile(p);
  return p;
}

InstrumentProfile load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open profile " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_profile(buf.str());
}

std::vector<ChordEvent> detect_chords(const smf::NoteTimeline& timeline, const InstrumentProfile& profile) {
  std::vector<ChordEvent> out;
  std::vector<const ChordShape*> by_id;
  for (const ChordShape& s : profile.shapes) by_id.push_back(&s);
  std::sort(by_id.begin(), by_id.end(), [](const ChordShape* a, const ChordShape* b) { return a->id < b->id; });

  auto flush = [&](std::vector<smf::NoteEvent>& group) {
    if (group.empty()) return;
    const ChordShape* best = nullptr;
    std::size_t best_overlap = 0;
    for (const ChordShape* s : by_id) {
      const std::size_t o = overlap(*s, group);
      if (o > best_overlap) {
        best = s;
        best_overlap = o;
      }
    }
    const auto needed = static_cast<std::size_t>(std::max(1, profile.min_shape_overlap));
    if (best != nullptr && best_overlap >= needed) {
      ChordEvent ev;
      ev.onset_s = group.front().onset_s;
      ev.shape_id = best->id;
      for (const auto& n : group) ev.peak_velocity = std::max(ev.peak_velocity, n.velocity);
      ev.member_notes = std::move(group);
      out.push_back(std::move(ev));
    } else {
      for (const auto& n : group) out.push_back({n.onset_s, {}, {n}, n.velocity});
    }
    group.clear();
  };

  std::vector<smf::NoteEvent> group;
  for (const smf::NoteEvent& note : timeline.notes) {
    if (!group.empty() && note.onset_s - group.front().onset_s > profile.chord_window_s) flush(group);
    group.push_back(note);
  }
  flush(group);
  return out;
}

std::string_view gm_drum_piece(int pitch) {
  switch (pitch) {
    case 35: case 36: return "kick";
    case 37: case 38: case 39: case 40: return "snare";
    case 41: case 43: return "tom_floor";
    case 45: case 47: return "tom_mid";
    case 48: case 50: return "tom_high";
    case 42: case 44: return "hihat";
    case 46: return "hihat_open";
    case 49: case 52: case 55: case 57: return "crash";
    case 51: case 53: case 59: return "ride";
    default: return {};
  }
}

namespace {

MappedPose fallback_pose(const InstrumentProfile& profile, int pitch) {
  const FallbackRule& fb = profile.fallback;
  MappedPose out;
  out.transition_s = fb.transition_s;
  if (fb.kind == FallbackRule::Kind::GmDrums) {
    std::string piece(gm_drum_piece(pitch));
    if (piece.empty() || !fb.pieces.contains(piece)) piece = fb.default_piece;
    out.target = fb.pieces.at(piece);
    return out;
  }
  out.target = fb.base_pose;
  const double offset = fb.spacing_m * static_cast<double>(pitch - fb.reference_pitch);
  const double angle = std::atan(offset / fb.reach_m);
  const auto base = out.target.joints.find(fb.joint);
  const Quat rest = base == out.target.joints.end() ? Quat::identity() : base->second;
  out.target.joints[fb.joint] = normalized(from_axis_angle(fb.axis, angle) * rest);
  out.target.lateral_offset_m = offset;
  return out;
}

}  // namespace

MappedPose map_event_to_pose(const InstrumentProfile& profile, const ChordEvent& event) {
  if (event.is_fallback()) {
    if (event.member_notes.empty()) throw Error(ErrorKind::ProfileMismatch, "fallback event has no note");
    return fallback_pose(profile, event.member_notes.front().pitch);
  }
  const ChordShape* shape = profile.find_shape(event.shape_id);
  if (shape == nullptr) {
    throw Error(ErrorKind::ProfileMismatch,
                "shape '" + event.shape_id + "' is not defined by profile '" + profile.name + "'");
  }
  return {shape->pose, shape->transition_s};
}

MappedPose resolve_note_code(const InstrumentProfile& profile, std::string_view note_code) {
  if (is_decimal(note_code)) {
    int pitch = 0;
    std::from_chars(note_code.data(), note_code.data() + note_code.size(), pitch);
    if (pitch > 127) throw Error(ErrorKind::ProfileMismatch, "note code " + std::string(note_code) + " out of range");
    return fallback_pose(profile, pitch);
  }
  ChordEvent ev;
  ev.shape_id = std::string(note_code);
  return map_event_to_pose(profile, ev);
}

void apply_target(const Skeleton& skeleton, const PoseTarget& target, PoseFrame& pose) {
  check_pose(skeleton, pose);
  for (const auto& [joint, q] : target.joints) pose.rotations[skeleton.index_of(joint)] = q;
}

// ---------------------------------------------------------------------------
// Visemes
// ---------------------------------------------------------------------------

VisemeTrack parse_viseme_track(const std::string& text) {
  VisemeTrack track;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    VisemeKey key;
    if (!(fields >> key.time_s)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      config_error("viseme line " + std::to_string(line_no) + ": expected 'time_s viseme_id weight'");
    }
    std::string extra;
    if (!(fields >> key.viseme >> key.weight) || (fields >> extra)) {
      config_error("viseme line " + std::to_string(line_no) + ": expected 'time_s viseme_id weight'");
    }
    if (key.weight < 0.0 || key.weight > 1.0) {
      config_error("viseme line " + std::to_string(line_no) + ": weight outside [0, 1]");
    }
    if (!track.keys.empty() && key.time_s < track.keys.back().time_s) {
      config_error("viseme line " + std::to_string(line_no) + ": keys must be sorted by time");
    }
    track.keys.push_back(std::move(key));
  }
  return track;
}

VisemeSet parse_viseme_set(const std::string& yaml_text) {
  VisemeSet set;
  try {
    const YAML::Node root = YAML::Load(yaml_text);
    const YAML::Node visemes = root["visemes"] ? root["visemes"] : root;
    for (const auto& kv : visemes) {
      const auto id = kv.first.as<std::string>();
      set[id] = read_pose(kv.second, "viseme " + id);
    }
  } catch (const YAML::Exception& e) {
    config_error(std::string("viseme config: ") + e.what());
  }
  return set;
}

std::map<std::string, double> viseme_weights(const VisemeTrack& track, double t) {
  std::map<std::string, double> w;
  const auto& keys = track.keys;
  if (keys.empty()) return w;

  const VisemeKey& first = keys.front();
  const VisemeKey& last = keys.back();
  if (t < first.time_s) {
    const double start = first.time_s - kVisemeRampSeconds;
    if (t > start) w[first.viseme] = first.weight * (t - start) / kVisemeRampSeconds;
    return w;
  }
  if (t >= last.time_s) {
    const double into = t - last.time_s;
    if (into < kVisemeRampSeconds) w[last.viseme] = last.weight * (1.0 - into / kVisemeRampSeconds);
    return w;
  }
  // first key k with keys[k+1].time_s > t
  const auto next = std::upper_bound(keys.begin(), keys.end(), t,
                                     [](double v, const VisemeKey& k) { return v < k.time_s; });
  const VisemeKey& b = *next;
  const VisemeKey& a = *(next - 1);
  const double u = (t - a.time_s) / (b.time_s - a.time_s);
  w[a.viseme] += a.weight * (1.0 - u);
  w[b.viseme] += b.weight * u;
  return w;
}

Layer viseme_to_face_layer(const VisemeTrack& track, const VisemeSet& visemes, const Skeleton& skeleton,
                           const AvatarMask& face_mask) {
  using Resolved = std::vector<std::pair<std::size_t, Quat>>;
  auto resolved = std::make_shared<std::map<std::string, Resolved>>();
  for (const VisemeKey& key : track.keys) {
    if (resolved->contains(key.viseme)) continue;
    const auto it = visemes.find(key.viseme);
    if (it == visemes.end()) throw Error(ErrorKind::UnknownViseme, "viseme '" + key.viseme + "' is not configured");
    Resolved r;
    for (const auto& [joint, q] : it->second.joints) r.emplace_back(skeleton.index_of(joint), q);
    (*resolved)[key.viseme] = std::move(r);
  }

  const std::size_t n = skeleton.size();
  auto shared_track = std::make_shared<VisemeTrack>(track);
  PoseStream stream;
  stream.reference = PoseFrame::identity(n);
  stream.sample = [shared_track, resolved, n](double t) {
    PoseFrame pose = PoseFrame::identity(n);
    for (const auto& [id, weight] : viseme_weights(*shared_track, t)) {
      if (weight <= 0.0) continue;
      for (const auto& [joint, delta] : resolved->at(id)) {
        pose.rotations[joint] = normalized(pose.rotations[joint] * slerp(Quat::identity(), delta, weight));
      }
    }
    return pose;
  };

  Layer layer;
  layer.name = "visemes";
  layer.source = std::move(stream);
  layer.mask = face_mask;
  layer.mode = BlendMode::Additive;
  layer.weight = 1.0;
  return layer;
}

}  // namespace fusion
