#include "fusion/render.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "fusion/bvh.h"
#include "fusion/error.h"

#ifndef FUSION_DATA_DIR
#define FUSION_DATA_DIR "data"
#endif

namespace fusion {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::ConfigError, what); }

std::vector<std::string> side_names(std::initializer_list<const char*> parts) {
  std::vector<std::string> out;
  for (const char* side : {"Left", "Right"}) {
    for (const char* p : parts) out.push_back(std::string(side) + p);
  }
  return out;
}

std::vector<std::string> finger_names() {
  std::vector<std::string> parts;
  for (const char* f : {"Thumb", "Index", "Middle", "Ring", "Little"}) {
    for (const char* seg : {"Proximal", "Intermediate", "Distal"}) parts.push_back(std::string(f) + seg);
  }
  std::vector<std::string> out;
  for (const char* side : {"Left", "Right"}) {
    for (const auto& p : parts) out.push_back(side + p);
  }
  return out;
}

std::vector<std::string> mask_members(std::string_view name) {
  const auto fingers = finger_names();
  auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  const std::vector<std::string> face{"Jaw", "LeftEye", "RightEye"};
  const auto head = with({"Neck", "Head"}, face);
  const auto hands = with(side_names({"Hand"}), fingers);
  const auto arms = with(side_names({"Shoulder", "UpperArm", "LowerArm"}), hands);
  if (name == "fingers") return fingers;
  if (name == "hands") return hands;
  if (name == "arms") return arms;
  if (name == "face") return face;
  if (name == "head") return head;
  if (name == "upper_body") return with(with({"Spine", "Chest"}, head), arms);
  config_error("unknown mask '" + std::string(name) + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

AvatarMask named_mask(const Skeleton& skeleton, std::string_view name) {
  if (name == "full_body") return AvatarMask::full(skeleton.size());
  std::vector<double> w(skeleton.size(), 0.0);
  for (const auto& joint : mask_members(name)) {
    if (auto i = skeleton.find(joint)) w[*i] = 1.0;
  }
  return AvatarMask(std::move(w));
}

// ---------------------------------------------------------------------------
// PerformanceAnimator
// ---------------------------------------------------------------------------

PerformanceAnimator::PerformanceAnimator(const Skeleton& skeleton, const InstrumentProfile& profile)
    : skeleton_(&skeleton), profile_(&profile), rest_(rest_pose(skeleton)) {
  apply_target(skeleton, profile.rest, rest_);
}

PoseFrame PerformanceAnimator::target_pose(std::string_view note_code) const {
  PoseFrame pose = rest_;
  apply_target(*skeleton_, resolve_note_code(*profile_, note_code).target, pose);
  return pose;
}

void PerformanceAnimator::add_key(double t, PoseFrame pose) { keys_.push_back({t, std::move(pose)}); }

void PerformanceAnimator::truncate_after(double t) {
  std::erase_if(keys_, [t](const Key& k) { return k.time_s > t; });
}

bool PerformanceAnimator::on_event(const AnimationEvent& e) {
  if (e.function == kAttack) {
    pending_.push_back({e.time_s, e.note_code});
    return true;
  }
  if (e.function == kStrike) {
    const auto it = std::find_if(pending_.begin(), pending_.end(),
                                 [&](const Pending& p) { return p.note_code == e.note_code; });
    double approach = e.time_s - resolve_note_code(*profile_, e.note_code).transition_s;
    if (it != pending_.end()) {
      approach = it->time_s;
      pending_.erase(it);
    }
    const double start = std::min(e.time_s, std::max({approach, last_strike_s_, 0.0}));
    PoseFrame current = sample(start);
    truncate_after(start);
    add_key(start, std::move(current));
    add_key(e.time_s, target_pose(e.note_code));
    last_strike_s_ = e.time_s;
    return true;
  }
  if (e.function == kRelease) {
    if (!pending_.empty()) return true;  // the next approach takes over
    PoseFrame current = sample(e.time_s);
    truncate_after(e.time_s);
    add_key(e.time_s, std::move(current));
    add_key(e.time_s + profile_->release_transition_s, rest_);
    return true;
  }
  return false;
}

PoseFrame PerformanceAnimator::sample(double t) const {
  const auto next = std::upper_bound(keys_.begin(), keys_.end(), t,
                                     [](double v, const Key& k) { return v < k.time_s; });
  if (next == keys_.begin()) return rest_;
  const Key& prev = *(next - 1);
  if (next == keys_.end()) return prev.pose;
  const double span = next->time_s - prev.time_s;
  if (span <= 0.0) return prev.pose;
  return interpolate_pose(prev.pose, next->pose, (t - prev.time_s) / span);
}

Layer PerformanceAnimator::layer(const Skeleton& skeleton) const {
  Layer l;
  l.name = profile_->layer.empty() ? profile_->name : profile_->layer;
  l.source = PoseStream{[this](double t) { return sample(t); }, rest_};
  l.mask = AvatarMask::from_joints(skeleton, profile_->mask);
  l.mode = BlendMode::Override;
  return l;
}

// ---------------------------------------------------------------------------
// Layer stack files
// ---------------------------------------------------------------------------

std::vector<Layer> load_layer_stack(const std::string& path, const Skeleton& skeleton,
                                    const std::map<std::string, std::string>& name_map) {
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  std::vector<Layer> layers;
  YAML::Node root;
  try {
    root = YAML::Load(read_text(path));
  } catch (const YAML::Exception& e) {
    config_error("layer stack " + path + ": " + e.what());
  }
  const YAML::Node list = root["layers"];
  if (!list || !list.IsSequence()) config_error("layer stack " + path + ": expected a 'layers' list");
  std::size_t index = 0;
  for (const YAML::Node& entry : list) {
    const std::string where = "layer stack " + path + " entry " + std::to_string(index++);
    try {
      Layer l;
      l.name = entry["name"].as<std::string>("layer" + std::to_string(index));
      if (!entry["clip"]) config_error(where + ": missing 'clip'");
      const auto clip_path = (dir / entry["clip"].as<std::string>()).string();
      bvh::BvhData data = bvh::read_bvh_file(clip_path);
      const Skeleton renamed = bvh::map_joint_names(data.skeleton, name_map);
      if (renamed.size() != skeleton.size()) {
        throw Error(ErrorKind::SkeletonMismatch, where + ": clip has " + std::to_string(renamed.size()) +
                                                     " joints, skeleton has " + std::to_string(skeleton.size()));
      }
      for (std::size_t i = 0; i < skeleton.size(); ++i) {
        if (renamed.joint(i).name != skeleton.joint(i).name) {
          throw Error(ErrorKind::SkeletonMismatch, where + ": joint " + std::to_string(i) + " is '" +
                                                       renamed.joint(i).name + "', expected '" +
                                                       skeleton.joint(i).name + "'");
        }
      }
      data.clip.loop = entry["loop"].as<bool>(true);
      l.source = std::move(data.clip);
      const YAML::Node mask = entry["mask"];
      if (!mask) {
        l.mask = AvatarMask::full(skeleton.size());
      } else if (mask.IsScalar()) {
        l.mask = named_mask(skeleton, mask.as<std::string>());
      } else {
        l.mask = AvatarMask::from_joints(skeleton, mask.as<std::map<std::string, double>>());
      }
      const std::string mode = entry["mode"].as<std::string>("override");
      if (mode == "override") {
        l.mode = BlendMode::Override;
      } else if (mode == "additive") {
        l.mode = BlendMode::Additive;
      } else {
        config_error(where + ": mode must be override or additive");
      }
      l.weight = entry["weight"].as<double>(1.0);
      l.time_offset_s = entry["time_offset_s"].as<double>(0.0);
      l.drives_root = entry["drives_root"].as<bool>(false);
      layers.push_back(std::move(l));
    } catch (const YAML::Exception& e) {
      config_error(where + ": " + e.what());
    }
  }
  return layers;
}

// ---------------------------------------------------------------------------
// Render
// ---------------------------------------------------------------------------

std::size_t render_frame_count(double duration_s, double fps) {
  if (!(fps > 0.0)) throw Error(ErrorKind::InvalidArgument, "fps must be positive");
  const double frames = std::ceil(duration_s * fps - 1e-9);
  return std::max<std::size_t>(1, frames > 0.0 ? static_cast<std::size_t>(frames) : 0);
}

RenderResult render(const smf::NoteTimeline& timeline, const InstrumentProfile& profile, const Skeleton& skeleton,
                    const AnimationClip& base, const std::vector<Layer>& extra_layers, double fps,
                    const std::optional<Layer>& face) {
  RenderResult out;
  out.chords = detect_chords(timeline, profile);
  out.events = compile_events(out.chords, profile);
  out.duration_s = std::max(timeline.end_s, out.events.duration_s);

  PerformanceAnimator animator(skeleton, profile);
  SimulatedClock clock;
  run(out.events, animator.sink(), clock);

  LayerStack stack;
  stack.base.name = "base";
  stack.base.source = base;
  stack.base.mask = AvatarMask::full(skeleton.size());
  stack.base.drives_root = true;
  stack.layers = extra_layers;
  stack.layers.push_back(animator.layer(skeleton));
  if (face) stack.layers.push_back(*face);

  const std::size_t frames = render_frame_count(out.duration_s, fps);
  out.clip.frame_rate = fps;
  out.clip.loop = false;
  out.clip.frames.resize(frames);
  for (std::size_t k = 0; k < frames; ++k) out.clip.frames[k] = blend(stack, skeleton, static_cast<double>(k) / fps);
  return out;
}

std::string resolve_data_file(const std::string& name, std::string_view subdir) {
  namespace fs = std::filesystem;
  std::vector<std::string> candidates{name};
  const bool bare = fs::path(name).extension().empty();
  if (bare) candidates.push_back(name + ".yaml");
  auto exists = [](const fs::path& p) { return fs::is_regular_file(p); };
  for (const auto& c : candidates) {
    if (exists(c)) return c;
  }
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("FUSION_PROFILE_PATH")) {
    std::stringstream list(env);
    std::string dir;
    while (std::getline(list, dir, ':')) {
      if (!dir.empty()) dirs.emplace_back(dir);
    }
  }
  dirs.push_back(fs::path(FUSION_DATA_DIR) / subdir);
  for (const auto& d : dirs) {
    for (const auto& c : candidates) {
      if (exists(d / c)) return (d / c).string();
    }
  }
  throw Error(ErrorKind::IoError, "cannot find '" + name + "' (searched FUSION_PROFILE_PATH and " +
                                      (fs::path(FUSION_DATA_DIR) / subdir).string() + ")");
}

}  // namespace fusion
