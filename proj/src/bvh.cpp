/// @file
/// @brief BVH tokenizer/parser and a fixed-format exporter.

#include "fusion/bvh.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "fusion/error.h"

namespace fusion::bvh {

namespace {

[[noreturn]] void malformed(const std::string& what, std::size_t line) {
  throw Error(ErrorKind::MalformedHierarchy, "line " + std::to_string(line) + ": " + what);
}

struct Token {
  std::string text;
  std::size_t line;
};

class HierarchyParser {
 public:
  HierarchyParser(std::vector<Token> tokens, double scale) : tokens_(std::move(tokens)), scale_(scale) {}

  void parse(std::vector<Joint>& joints, std::vector<std::vector<Channel>>& channels) {
    expect("HIERARCHY");
    expect("ROOT");
    parse_joint(-1, joints, channels);
    if (pos_ != tokens_.size()) malformed("unexpected '" + tokens_[pos_].text + "' after root joint", tokens_[pos_].line);
  }

 private:
  void parse_joint(int parent, std::vector<Joint>& joints, std::vector<std::vector<Channel>>& channels) {
    const Token name = next("joint name");
    Joint joint;
    joint.name = name.text;
    joint.parent = parent;
    expect("{");
    expect("OFFSET");
    joint.rest_offset = vec3();
    const std::size_t index = joints.size();
    joints.push_back(joint);
    channels.emplace_back();

    expect("CHANNELS");
    const Token count_tok = next("channel count");
    int count = 0;
    try {
      count = std::stoi(count_tok.text);
    } catch (const std::exception&) {
      malformed("channel count '" + count_tok.text + "' is not a number", count_tok.line);
    }
    if (count != 3 && count != 6) {
      throw Error(ErrorKind::ChannelCountMismatch, "line " + std::to_string(count_tok.line) + ": joint '" +
                                                       joint.name + "' declares " + std::to_string(count) +
                                                       " channels (3 or 6 supported)");
    }
    int rotations = 0;
    for (int i = 0; i < count; ++i) {
      const Token ch = next("channel name");
      const Channel c = channel(ch);
      if (c == Channel::Xrotation || c == Channel::Yrotation || c == Channel::Zrotation) ++rotations;
      channels[index].push_back(c);
    }
    if (rotations != 3) {
      throw Error(ErrorKind::ChannelCountMismatch, "joint '" + joint.name + "' needs exactly three rotation channels");
    }

    while (true) {
      const Token t = next("'}'");
      if (t.text == "}") break;
      if (t.text == "JOINT") {
        parse_joint(static_cast<int>(index), joints, channels);
      } else if (t.text == "End") {
        expect("Site");
        expect("{");
        expect("OFFSET");
        joints[index].end_site = vec3();
        expect("}");
      } else {
        malformed("unexpected '" + t.text + "' in joint '" + joint.name + "'", t.line);
      }
    }
  }

  Channel channel(const Token& t) {
    static const std::pair<const char*, Channel> kNames[] = {
        {"Xposition", Channel::Xposition}, {"Yposition", Channel::Yposition}, {"Zposition", Channel::Zposition},
        {"Xrotation", Channel::Xrotation}, {"Yrotation", Channel::Yrotation}, {"Zrotation", Channel::Zrotation}};
    for (const auto& [name, c] : kNames) {
      if (t.text == name) return c;
    }
    malformed("unknown channel '" + t.text + "'", t.line);
  }

  Vec3 vec3() {
    Vec3 v;
    v.x = number() * scale_;
    v.y = number() * scale_;
    v.z = number() * scale_;
    return v;
  }

  double number() {
    const Token t = next("number");
    try {
      std::size_t used = 0;
      const double v = std::stod(t.text, &used);
      if (used != t.text.size()) throw std::invalid_argument(t.text);
      return v;
    } catch (const std::exception&) {
      malformed("expected a number, got '" + t.text + "'", t.line);
    }
  }

  Token next(const char* what) {
    if (pos_ >= tokens_.size()) {
      malformed(std::string("unexpected end of hierarchy, expected ") + what,
                tokens_.empty() ? 1 : tokens_.back().line);
    }
    return tokens_[pos_++];
  }

  void expect(const char* keyword) {
    const Token t = next(keyword);
    if (t.text != keyword) malformed(std::string("expected '") + keyword + "', got '" + t.text + "'", t.line);
  }

  std::vector<Token> tokens_;
  double scale_;
  std::size_t pos_ = 0;
};

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

Axis axis_of(Channel c) {
  switch (c) {
    case Channel::Xrotation: return Axis::X;
    case Channel::Yrotation: return Axis::Y;
    default: return Axis::Z;
  }
}

void emit_joint(const Skeleton& skeleton, std::size_t index, int depth, std::string& out) {
  const Joint& j = skeleton.joint(index);
  const std::string pad(static_cast<std::size_t>(depth), '\t');
  const Vec3 off = j.rest_offset * (1.0 / kCentimeters);
  out += pad + (index == 0 ? "ROOT " : "JOINT ") + j.name + "\n";
  out += pad + "{\n";
  out += pad + "\tOFFSET " + fmt6(off.x) + " " + fmt6(off.y) + " " + fmt6(off.z) + "\n";
  out += pad + (index == 0 ? "\tCHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n"
                           : "\tCHANNELS 3 Zrotation Xrotation Yrotation\n");
  const auto kids = skeleton.children(index);
  for (std::size_t c : kids) emit_joint(skeleton, c, depth + 1, out);
  if (kids.empty()) {
    const Vec3 end = j.end_site.value_or(Vec3{}) * (1.0 / kCentimeters);
    out += pad + "\tEnd Site\n" + pad + "\t{\n";
    out += pad + "\t\tOFFSET " + fmt6(end.x) + " " + fmt6(end.y) + " " + fmt6(end.z) + "\n";
    out += pad + "\t}\n";
  }
  out += pad + "}\n";
}

void depth_first(const Skeleton& skeleton, std::size_t index, std::vector<std::size_t>& order) {
  order.push_back(index);
  for (std::size_t c : skeleton.children(index)) depth_first(skeleton, c, order);
}

}  // namespace

BvhData parse_bvh(const std::string& text, double unit_scale) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<Token> tokens;
  bool saw_motion = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream words(line);
    std::string w;
    bool motion_line = false;
    while (words >> w) {
      if (w == "MOTION") {
        motion_line = true;
        break;
      }
      tokens.push_back({w, line_no});
    }
    if (motion_line) {
      saw_motion = true;
      break;
    }
  }
  if (tokens.empty() || tokens.front().text != "HIERARCHY") malformed("file must begin with HIERARCHY", 1);
  if (!saw_motion) malformed("missing MOTION section", line_no);

  BvhData data;
  std::vector<Joint> joints;
  HierarchyParser(std::move(tokens), unit_scale).parse(joints, data.channels);
  data.skeleton = Skeleton(std::move(joints));

  auto next_content_line = [&](std::string& out) {
    while (std::getline(in, out)) {
      ++line_no;
      if (out.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };

  std::string l;
  long frames_declared = -1;
  double frame_time = 0.0;
  if (!next_content_line(l)) malformed("missing 'Frames:'", line_no);
  {
    std::istringstream s(l);
    std::string key;
    if (!(s >> key >> frames_declared) || key != "Frames:" || frames_declared < 0) {
      malformed("expected 'Frames: N'", line_no);
    }
  }
  if (!next_content_line(l)) malformed("missing 'Frame Time:'", line_no);
  {
    std::istringstream s(l);
    std::string k1, k2;
    if (!(s >> k1 >> k2 >> frame_time) || k1 != "Frame" || k2 != "Time:" || !(frame_time > 0.0)) {
      malformed("expected 'Frame Time: seconds' with a positive value", line_no);
    }
  }
  const double rate = 1.0 / frame_time;
  const double whole = std::round(rate);
  data.clip.frame_rate = (whole >= 1.0 && std::fabs(1.0 / whole - frame_time) <= 5e-7) ? whole : rate;

  std::size_t total_channels = 0;
  for (const auto& c : data.channels) total_channels += c.size();
  const std::size_t n = data.skeleton.size();

  while (next_content_line(l)) {
    std::istringstream s(l);
    std::vector<double> values;
    std::string tok;
    while (s >> tok) {
      try {
        values.push_back(std::stod(tok));
      } catch (const std::exception&) {
        malformed("bad motion value '" + tok + "'", line_no);
      }
    }
    if (values.size() != total_channels) {
      throw Error(ErrorKind::ChannelCountMismatch, "line " + std::to_string(line_no) + ": frame has " +
                                                       std::to_string(values.size()) + " values, hierarchy declares " +
                                                       std::to_string(total_channels));
    }
    PoseFrame frame = PoseFrame::identity(n);
    std::size_t v = 0;
    for (std::size_t j = 0; j < n; ++j) {
      std::array<Axis, 3> order{};
      std::array<double, 3> angles{};
      std::size_t r = 0;
      Vec3 position = data.skeleton.joint(j).rest_offset;
      for (Channel c : data.channels[j]) {
        const double value = values[v++];
        switch (c) {
          case Channel::Xposition: position.x = value * unit_scale; break;
          case Channel::Yposition: position.y = value * unit_scale; break;
          case Channel::Zposition: position.z = value * unit_scale; break;
          default:
            order[r] = axis_of(c);
            angles[r] = deg_to_rad(value);
            ++r;
            break;
        }
      }
      frame.rotations[j] = euler_to_quat(order, angles);
      // translation channels below the root are read but not represented
      if (j == 0) frame.root_translation = position;
    }
    data.clip.frames.push_back(std::move(frame));
  }
  if (static_cast<long>(data.clip.frames.size()) != frames_declared) {
    throw Error(ErrorKind::FrameCountMismatch, "header declares " + std::to_string(frames_declared) +
                                                   " frames, found " + std::to_string(data.clip.frames.size()));
  }
  return data;
}

BvhData read_bvh_file(const std::string& path, double unit_scale) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_bvh(buf.str(), unit_scale);
}

std::string export_bvh(const Skeleton& skeleton, const AnimationClip& clip) {
  if (skeleton.size() == 0) throw Error(ErrorKind::SkeletonMismatch, "cannot export an empty skeleton");
  for (const PoseFrame& f : clip.frames) check_pose(skeleton, f);

  std::string out = "HIERARCHY\n";
  emit_joint(skeleton, 0, 0, out);
  out += "MOTION\n";
  out += "Frames: " + std::to_string(clip.frames.size()) + "\n";
  out += "Frame Time: " + fmt6(1.0 / clip.frame_rate) + "\n";

  std::vector<std::size_t> order;
  depth_first(skeleton, 0, order);
  for (const PoseFrame& f : clip.frames) {
    std::string row;
    const Vec3 root = f.root_translation * (1.0 / kCentimeters);
    row += fmt6(root.x) + " " + fmt6(root.y) + " " + fmt6(root.z);
    for (std::size_t j : order) {
      const auto zxy = quat_to_euler_zxy(f.rotations[j]);
      for (double a : zxy) {
        row += ' ';
        row += fmt6(rad_to_deg(a));
      }
    }
    out += row + "\n";
  }
  return out;
}

Skeleton map_joint_names(const Skeleton& skeleton, const std::map<std::string, std::string>& name_map) {
  std::vector<Joint> joints = skeleton.joints();
  std::set<std::string> seen;
  for (Joint& j : joints) {
    if (auto it = name_map.find(j.name); it != name_map.end()) j.name = it->second;
    if (!seen.insert(j.name).second) {
      throw Error(ErrorKind::DuplicateTargetName, "renaming produces two joints named '" + j.name + "'");
    }
  }
  return Skeleton(std::move(joints));
}

std::map<std::string, std::string> load_name_map(const std::string& path) {
  std::map<std::string, std::string> out;
  try {
    const YAML::Node root = YAML::LoadFile(path);
    for (const auto& kv : root) out[kv.first.as<std::string>()] = kv.second.as<std::string>();
  } catch (const YAML::BadFile&) {
    throw Error(ErrorKind::IoError, "cannot open name map " + path);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::ConfigError, "name map " + path + ": " + e.what());
  }
  return out;
}

}  // namespace fusion::bvh
