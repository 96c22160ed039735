/// @file
/// @brief `fusion` command line: MIDI inspection, event compilation, the
/// render pass, device capacity tables and the session simulator.
///
/// Failures print one line `error<TAB>Kind<TAB>message` to stderr and exit 2.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unistd.h>

#include <CLI11.hpp>

#include "fusion/bvh.h"
#include "fusion/error.h"
#include "fusion/pose_model.h"
#include "fusion/render.h"
#include "fusion/scheduler.h"
#include "fusion/session.h"
#include "fusion/smf.h"

namespace {

using namespace fusion;

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Writes to stdout for "" or "-", otherwise via a temp file and rename so
/// a failed run never leaves a partial file behind.
void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp);
    out << content;
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw Error(ErrorKind::IoError, "short write to " + tmp);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorKind::IoError, "cannot rename " + tmp + " to " + path + ": " + ec.message());
  }
}

InstrumentProfile find_profile(const std::string& name) { return load_profile(resolve_data_file(name, "profiles")); }

session::DeviceProfile find_device(const std::string& name) {
  return session::load_device_profile(resolve_data_file(name, "devices"));
}

struct MidiInput {
  smf::SmfFile file;
  smf::TempoMap tempo;
  smf::Diagnostics diag;
};

MidiInput load_midi(const std::string& path) {
  MidiInput in;
  in.file = smf::read_smf_file(path);
  in.tempo = smf::build_tempo_map(in.file, &in.diag);
  return in;
}

// ---------------------------------------------------------------------------

std::string inspect_midi(const std::string& path) {
  MidiInput in = load_midi(path);
  const auto timeline = smf::extract_notes(in.file, in.tempo, std::nullopt, &in.diag);
  std::ostringstream out;
  out << "format\t" << in.file.header.format << "\n";
  out << "tracks\t" << in.file.header.track_count << "\n";
  out << "division\t" << in.file.header.division << "\n";
  for (const auto& seg : in.tempo.segments) {
    out << "tempo\t" << seg.start_tick << "\t" << seg.us_per_quarter << "\t"
        << fmt6(smf::ticks_to_seconds(in.tempo, in.file.header.division, seg.start_tick)) << "\t"
        << fmt6(60e6 / seg.us_per_quarter) << "\n";
  }
  for (std::size_t t = 0; t < in.file.tracks.size(); ++t) out << "track\t" << t << "\t" << in.file.tracks[t].size() << "\n";
  out << "notes\t" << timeline.notes.size() << "\n";
  out << "end_s\t" << fmt6(timeline.end_s) << "\n";
  out << "ignored_tempo_events\t" << in.diag.ignored_tempo_events << "\n";
  out << "malformed_tempo_events\t" << in.diag.malformed_tempo_events << "\n";
  out << "orphan_note_offs\t" << in.diag.orphan_note_offs << "\n";
  out << "unterminated_notes\t" << in.diag.unterminated_notes << "\n";
  out << "zero_duration_notes\t" << in.diag.zero_duration_notes << "\n";
  for (const auto& m : in.diag.messages) out << "message\t" << m << "\n";
  return out.str();
}

std::string notes(const std::string& path, const std::vector<int>& channels) {
  MidiInput in = load_midi(path);
  std::optional<std::set<std::uint8_t>> filter;
  if (!channels.empty()) {
    filter.emplace();
    for (int c : channels) filter->insert(static_cast<std::uint8_t>(c));
  }
  const auto timeline = smf::extract_notes(in.file, in.tempo, filter, &in.diag);
  std::string out = "# onset_s\tduration_s\tpitch\tvelocity\tchannel\ttrack\n";
  for (const auto& n : timeline.notes) {
    out += fmt6(n.onset_s) + "\t" + fmt6(n.duration_s) + "\t" + std::to_string(n.pitch) + "\t" +
           std::to_string(n.velocity) + "\t" + std::to_string(n.channel) + "\t" + std::to_string(n.track) + "\n";
  }
  return out;
}

smf::NoteTimeline profile_notes(const std::string& midi, const InstrumentProfile& profile) {
  MidiInput in = load_midi(midi);
  return smf::extract_notes(in.file, in.tempo, profile.channels, &in.diag);
}

std::string bench(const session::DeviceProfile& device, std::optional<double> floor) {
  std::ostringstream out;
  out << "device\t" << device.name << "\n";
  out << "# avatars\tfps\tband\n";
  for (int n = 0; n <= device.domain_max(); ++n) {
    const double fps = session::capacity_fps(device, n);
    out << n << "\t" << fmt6(fps) << "\t" << session::band_name(session::perception_band(fps)) << "\n";
  }
  const double f = floor.value_or(device.target_fps);
  out << "floor\t" << fmt6(f) << "\n";
  out << "max_avatars\t" << session::max_avatars_at(device, f) << "\n";
  return out.str();
}

std::string validate_profile_report(const std::string& name) {
  const InstrumentProfile p = find_profile(name);
  const Skeleton skeleton = make_humanoid_skeleton();
  std::ostringstream out;
  out << "profile\t" << p.name << "\t" << instrument_name(p.instrument) << "\n";
  out << "shapes\t" << p.shapes.size() << "\n";
  out << "mask_joints\t" << p.mask.size() << "\n";
  std::size_t problems = 0;
  for (const auto& [joint, w] : p.mask) {
    if (!skeleton.find(joint)) {
      out << "unknown_joint\t" << joint << "\n";
      ++problems;
    }
  }
  // totality: every MIDI pitch resolves to some pose
  for (int pitch = 0; pitch <= 127; ++pitch) {
    try {
      resolve_note_code(p, std::to_string(pitch));
    } catch (const Error& e) {
      out << "unmapped_pitch\t" << pitch << "\t" << e.what() << "\n";
      ++problems;
    }
  }
  if (problems == 0) {
    LayerStack stack;
    stack.base.source = AnimationClip{{rest_pose(skeleton)}, 30.0, true};
    stack.base.mask = AvatarMask::full(skeleton.size());
    PerformanceAnimator animator(skeleton, p);
    stack.layers.push_back(animator.layer(skeleton));
    const auto diag = validate_stack(stack, skeleton);
    out << "uncontrolled_joints\t" << diag.unmapped_joints.size() << "\n";
    for (const auto& c : diag.conflicts) out << "conflict\t" << c.joint_name << "\n";
    problems += diag.conflicts.size() + diag.size_mismatches.size();
  }
  out << "status\t" << (problems == 0 ? "ok" : "invalid") << "\n";
  if (problems != 0) throw Error(ErrorKind::ConfigError, "profile '" + name + "' failed validation\n" + out.str());
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AI Fusion toolkit: MIDI-driven avatar animation and session simulation"};
  app.require_subcommand(1);

  std::string input;
  std::string output;
  std::string profile_name;

  auto* inspect = app.add_subcommand("inspect-midi", "Header, tempo map and diagnostics of a MIDI file");
  inspect->add_option("file", input, "MIDI file")->required();

  std::vector<int> channels;
  auto* notes_cmd = app.add_subcommand("notes", "Note timeline as tab-separated text");
  notes_cmd->add_option("file", input, "MIDI file")->required();
  notes_cmd->add_option("--channel", channels, "Keep only these channels (0-15)")->check(CLI::Range(0, 15));
  notes_cmd->add_option("-o,--output", output, "Output file (default stdout)");

  auto* compile = app.add_subcommand("compile", "Compile a MIDI file into an animation event timeline");
  compile->add_option("file", input, "MIDI file")->required();
  compile->add_option("--profile", profile_name, "Instrument profile name or path")->required();
  compile->add_option("-o,--output", output, "Output file (default stdout)");

  std::string base_path, layers_path, name_map_path, viseme_track_path, viseme_set_name = "visemes.yaml";
  double fps = 30.0;
  auto* render_cmd = app.add_subcommand("render", "Fuse the score-driven performance with a base clip into BVH");
  render_cmd->add_option("file", input, "MIDI file")->required();
  render_cmd->add_option("--profile", profile_name, "Instrument profile name or path")->required();
  render_cmd->add_option("--base", base_path, "Base BVH clip")->required();
  render_cmd->add_option("--layers", layers_path, "Layer stack YAML");
  render_cmd->add_option("--fps", fps, "Output frame rate")->check(CLI::PositiveNumber);
  render_cmd->add_option("--name-map", name_map_path, "YAML joint rename map for the base clip");
  render_cmd->add_option("--visemes", viseme_track_path, "Viseme track (time viseme weight per line)");
  render_cmd->add_option("--viseme-set", viseme_set_name, "Viseme pose YAML");
  render_cmd->add_option("-o,--output", output, "Output BVH")->required();

  std::string device_name;
  std::optional<double> floor;
  auto* bench_cmd = app.add_subcommand("bench", "Capacity table and max avatars above an fps floor");
  bench_cmd->add_option("--device", device_name, "Device profile name or path")->required();
  bench_cmd->add_option("--floor", floor, "FPS floor (default: the device target)");

  session::SessionConfig config;
  double duration = 10.0;
  std::string inject_path;
  std::string sim_device;
  auto* sim = app.add_subcommand("sim", "Run a seeded session and write its event log");
  sim->add_option("--agents", config.agents, "Initial agents, NPCs included")->check(CLI::NonNegativeNumber);
  sim->add_option("--npcs", config.npcs, "How many of the agents are NPCs")->check(CLI::NonNegativeNumber);
  sim->add_option("--seed", config.seed, "RNG seed");
  sim->add_option("--duration", duration, "Simulated seconds")->check(CLI::NonNegativeNumber);
  sim->add_option("--dt", config.dt, "Step size in seconds")->check(CLI::PositiveNumber);
  sim->add_option("--cap", config.cap, "Avatar cap (0: device max at target fps)");
  sim->add_flag("--comm", config.communication_mode, "Communication-quality mode");
  sim->add_option("--device", sim_device, "Device profile name or path");
  sim->add_option("--inject", inject_path, "External events to inject (time kind actor payload)");
  sim->add_option("-o,--output", output, "Output log (default stdout)");

  auto* replay_cmd = app.add_subcommand("replay", "Verify a session log and print the final state");
  replay_cmd->add_option("log", input, "Session log")->required();

  std::vector<std::string> profile_names;
  auto* validate = app.add_subcommand("validate-profile", "Check instrument profiles");
  validate->add_option("profiles", profile_names, "Profile names or paths")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*inspect) {
      std::cout << inspect_midi(input);
    } else if (*notes_cmd) {
      write_output(output, notes(input, channels));
    } else if (*compile) {
      const InstrumentProfile profile = find_profile(profile_name);
      const auto timeline = profile_notes(input, profile);
      write_output(output, serialize_timeline(compile_events(detect_chords(timeline, profile), profile)));
    } else if (*render_cmd) {
      const InstrumentProfile profile = find_profile(profile_name);
      const auto timeline = profile_notes(input, profile);
      std::map<std::string, std::string> name_map;
      if (!name_map_path.empty()) name_map = bvh::load_name_map(resolve_data_file(name_map_path, ""));
      bvh::BvhData base = bvh::read_bvh_file(base_path);
      const Skeleton skeleton = bvh::map_joint_names(base.skeleton, name_map);
      base.clip.loop = true;
      std::vector<Layer> layers;
      if (!layers_path.empty()) layers = load_layer_stack(layers_path, skeleton, name_map);
      std::optional<Layer> face;
      if (!viseme_track_path.empty()) {
        const VisemeTrack track = parse_viseme_track(read_text(viseme_track_path));
        const VisemeSet set = parse_viseme_set(read_text(resolve_data_file(viseme_set_name, "")));
        face = viseme_to_face_layer(track, set, skeleton, named_mask(skeleton, "face"));
      }
      const RenderResult result = render(timeline, profile, skeleton, base.clip, layers, fps, face);
      write_output(output, bvh::export_bvh(skeleton, result.clip));
      std::cerr << "frames\t" << result.clip.frames.size() << "\tduration_s\t" << fmt6(result.duration_s)
                << "\tchords\t" << result.chords.size() << "\n";
    } else if (*bench_cmd) {
      std::cout << bench(find_device(device_name), floor);
    } else if (*sim) {
      config.device = sim_device.empty() ? session::default_device() : find_device(sim_device);
      std::vector<session::SessionEvent> injections;
      if (!inject_path.empty()) injections = session::parse_events(read_text(inject_path));
      const auto steps = static_cast<std::uint64_t>(std::llround(duration / config.dt));
      write_output(output, session::format_log(session::run_session(config, steps, injections)));
    } else if (*replay_cmd) {
      std::cout << session::summarize(session::replay(read_text(input)));
    } else if (*validate) {
      for (const auto& name : profile_names) std::cout << validate_profile_report(name);
    }
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error\t" << kind_name(e.kind()) << "\t" << msg << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error\tInternal\t" << e.what() << "\n";
    return 2;
  }
  return 0;
}
