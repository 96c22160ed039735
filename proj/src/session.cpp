/// @file
/// @brief Capacity curves, session stepping, excitement, salutes and replay.

#include "fusion/session.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "fusion/error.h"
#include "fusion/scheduler.h"

namespace fusion::session {

namespace {

constexpr const char* kHeaderTag = "#fusion-session";
constexpr const char* kExternal = "src=ext";
constexpr int kMaxPushIterations = 8;
constexpr double kSeparationSlack = 1e-9;
constexpr int kNpcPattern[] = {60, 64, 67, 72};
constexpr int kNpcVelocity = 90;
constexpr double kNpcStay = 1e9;
constexpr const char* kPlayerInstruments[] = {"guitar", "bass", "drums", "piano"};

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::ConfigError, what); }

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Portable uniform double in [0, 1) (std distributions are not).
double uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform(rng); }
int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform(rng) * static_cast<double>(hi - lo + 1));
}
bool chance(std::mt19937_64& rng, double p) { return uniform(rng) < p; }

/// Rounds to the log's 6 decimals so a replayed payload reproduces the value.
double quantize(double v) { return std::stod(fmt6(v)); }

double distance(Vec2 a, Vec2 b) { return (a - b).length(); }

std::map<std::string, std::string> parse_payload(const std::string& payload) {
  std::map<std::string, std::string> kv;
  std::istringstream in(payload);
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) {
      kv[tok] = "";
    } else {
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
  }
  return kv;
}

bool is_external(const SessionEvent& e) { return parse_payload(e.payload).contains("src"); }

double payload_double(const std::map<std::string, std::string>& kv, const char* key, double fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    return fallback;
  }
}

std::optional<EventKind> kind_from_name(const std::string& name) {
  for (EventKind k : {EventKind::Join, EventKind::Leave, EventKind::Note, EventKind::Salute, EventKind::SpeakStart,
                      EventKind::SpeakStop, EventKind::Effect}) {
    if (name == event_kind_name(k)) return k;
  }
  return std::nullopt;
}

void log_event(SessionState& state, EventKind kind, int actor, std::string payload) {
  state.event_log.push_back({state.time_s, kind, actor, std::move(payload)});
}

bool overlaps_any(const SessionState& state, Vec2 p, double r, int skip_id) {
  for (const AvatarAgent& a : state.agents) {
    if (a.id != skip_id && distance(a.position, p) < a.radius + r) return true;
  }
  return false;
}

Vec2 clamp_to_world(Vec2 p, double half, double r) {
  const double lim = std::max(0.0, half - r);
  return {std::clamp(p.x, -lim, lim), std::clamp(p.y, -lim, lim)};
}

/// Nearest free grid spot around `want` (grid step = radius), or nothing.
std::optional<Vec2> free_spot(const SessionState& state, Vec2 want, double r) {
  const double half = state.config.world_half_extent;
  want = clamp_to_world(want, half, r);
  if (!overlaps_any(state, want, r, -1)) return want;
  const int span = static_cast<int>(2.0 * half / r) + 1;
  std::vector<std::pair<int, int>> offsets;
  for (int dx = -span; dx <= span; ++dx) {
    for (int dy = -span; dy <= span; ++dy) offsets.emplace_back(dx, dy);
  }
  std::sort(offsets.begin(), offsets.end(), [](auto a, auto b) {
    const int da = a.first * a.first + a.second * a.second;
    const int db = b.first * b.first + b.second * b.second;
    return da != db ? da < db : a < b;
  });
  for (const auto& [dx, dy] : offsets) {
    const Vec2 p = clamp_to_world({want.x + dx * r, want.y + dy * r}, half, r);
    if (!overlaps_any(state, p, r, -1)) return p;
  }
  return std::nullopt;
}

std::string join_payload(const AvatarAgent& a) {
  return "x=" + fmt6(a.position.x) + " y=" + fmt6(a.position.y) + " r=" + fmt6(a.radius) +
         " npc=" + (a.is_npc ? "1" : "0") + " instrument=" + a.instrument.value_or("none") +
         " leave=" + fmt6(a.planned_leave_s);
}

void add_agent(SessionState& state, AvatarAgent agent, const std::string& extra) {
  auto it = std::lower_bound(state.agents.begin(), state.agents.end(), agent.id,
                             [](const AvatarAgent& a, int id) { return a.id < id; });
  std::string payload = join_payload(agent);
  if (!extra.empty()) payload += " " + extra;
  log_event(state, EventKind::Join, agent.id, std::move(payload));
  state.agents.insert(it, std::move(agent));
}

void remove_agent(SessionState& state, int id, const std::string& payload) {
  log_event(state, EventKind::Leave, id, payload);
  std::erase_if(state.agents, [id](const AvatarAgent& a) { return a.id == id; });
}

/// Validates before touching the state, so a throw leaves it unchanged.
void salute_in_place(SessionState& state, int a, int b, const std::string& extra) {
  if (a == b) throw Error(ErrorKind::InvalidArgument, "an agent cannot salute itself");
  AvatarAgent* from = state.find(a);
  AvatarAgent* to = state.find(b);
  if (from == nullptr || to == nullptr) {
    throw Error(ErrorKind::InvalidArgument, "salute between unknown agents " + std::to_string(a) + " and " +
                                                std::to_string(b));
  }
  const double d = distance(from->position, to->position);
  if (d > state.config.conversation_range_m) {
    throw Error(ErrorKind::OutOfRange, "agents " + std::to_string(a) + " and " + std::to_string(b) + " are " +
                                           fmt6(d) + " m apart (range " + fmt6(state.config.conversation_range_m) + ")");
  }
  if (!state.saluted.insert({a, b}).second) return;
  from->planned_leave_s += state.config.salute_bonus_s;
  to->planned_leave_s += state.config.salute_bonus_s;
  std::string payload = "with=" + std::to_string(b);
  if (!extra.empty()) payload += " " + extra;
  log_event(state, EventKind::Salute, a, std::move(payload));
}

/// Applies one queued external event at the current boundary. Invalid
/// injections are dropped without a trace so replay stays consistent.
void apply_injection(SessionState& state, SessionEvent ev, std::vector<SessionEvent>& notes) {
  const auto kv = parse_payload(ev.payload);
  std::string tagged = ev.payload;
  if (!kv.contains("src")) tagged = tagged.empty() ? kExternal : tagged + " " + kExternal;
  ev.time_s = state.time_s;
  ev.payload = tagged;

  switch (ev.kind) {
    case EventKind::Join: {
      if (state.find(ev.actor) != nullptr) return;
      if (static_cast<int>(state.agents.size()) >= state.effective_cap()) return;
      AvatarAgent agent;
      agent.id = ev.actor;
      agent.radius = state.config.radius;
      const auto spot = free_spot(state, {payload_double(kv, "x", 0.0), payload_double(kv, "y", 0.0)}, agent.radius);
      if (!spot) return;
      agent.position = {quantize(spot->x), quantize(spot->y)};
      agent.waypoint = agent.position;
      agent.is_npc = payload_double(kv, "npc", 0.0) != 0.0;
      if (auto it = kv.find("instrument"); it != kv.end() && it->second != "none") agent.instrument = it->second;
      agent.planned_leave_s = quantize(payload_double(kv, "leave", state.config.stay_min_s));
      agent.speed = agent.is_npc ? 0.0 : 0.5 * (state.config.min_speed + state.config.max_speed);
      add_agent(state, std::move(agent), kExternal);
      return;
    }
    case EventKind::Leave:
      if (state.find(ev.actor) == nullptr) return;
      remove_agent(state, ev.actor, tagged);
      return;
    case EventKind::Note: {
      if (state.find(ev.actor) == nullptr) return;
      state.event_log.push_back(ev);
      notes.push_back(ev);
      return;
    }
    case EventKind::Salute: {
      const int with = static_cast<int>(payload_double(kv, "with", -1.0));
      try {
        salute_in_place(state, ev.actor, with, kExternal);
      } catch (const Error&) {
      }
      return;
    }
    case EventKind::SpeakStart:
    case EventKind::SpeakStop: {
      AvatarAgent* a = state.find(ev.actor);
      if (a == nullptr) return;
      a->speaking = ev.kind == EventKind::SpeakStart;
      state.event_log.push_back(ev);
      return;
    }
    case EventKind::Effect:
      return;  // effects are derived, never injected
  }
}

/// Pairwise push-out along the center line; reverts to `previous` positions
/// if the crowd cannot be separated within the iteration budget.
void resolve_collisions(SessionState& state, const std::vector<Vec2>& previous) {
  auto& agents = state.agents;
  const double half = state.config.world_half_extent;
  for (int iter = 0; iter < kMaxPushIterations; ++iter) {
    bool moved = false;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      for (std::size_t j = i + 1; j < agents.size(); ++j) {
        const Vec2 delta = agents[j].position - agents[i].position;
        const double d = delta.length();
        const double min_d = agents[i].radius + agents[j].radius;
        if (d >= min_d) continue;
        moved = true;
        const Vec2 dir = d > 0.0 ? delta * (1.0 / d) : Vec2{1.0, 0.0};
        const double push = 0.5 * (min_d - d) + kSeparationSlack;
        agents[i].position = agents[i].position - dir * push;
        agents[j].position = agents[j].position + dir * push;
      }
    }
    for (AvatarAgent& a : agents) a.position = clamp_to_world(a.position, half, a.radius);
    if (!moved) return;
  }
  for (std::size_t i = 0; i < agents.size(); ++i) {
    for (std::size_t j = i + 1; j < agents.size(); ++j) {
      if (distance(agents[i].position, agents[j].position) < agents[i].radius + agents[j].radius) {
        for (std::size_t k = 0; k < agents.size(); ++k) agents[k].position = previous[k];
        return;
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Capacity model
// ---------------------------------------------------------------------------

void validate_device(const DeviceProfile& device) {
  const std::string who = "device '" + device.name + "'";
  if (!(device.target_fps > 0.0)) config_error(who + ": target_fps must be positive");
  if (device.drop_threshold_avatars < 0) config_error(who + ": drop threshold must be non-negative");
  int last_count = device.drop_threshold_avatars;
  double last_fps = device.target_fps;
  for (const KneePoint& k : device.curve) {
    if (k.avatars <= last_count) config_error(who + ": knee counts must increase past the drop threshold");
    if (k.fps > last_fps) config_error(who + ": fps must not increase with avatar count");
    if (k.fps < 0.0) config_error(who + ": fps must be non-negative");
    last_count = k.avatars;
    last_fps = k.fps;
  }
}

DeviceProfile parse_device_profile(const std::string& yaml_text) {
  DeviceProfile d;
  try {
    const YAML::Node root = YAML::Load(yaml_text);
    d.name = root["name"].as<std::string>();
    d.target_fps = root["target_fps"].as<double>();
    d.drop_threshold_avatars = root["drop_threshold_avatars"].as<int>();
    for (const auto& k : root["curve"]) d.curve.push_back({k[0].as<int>(), k[1].as<double>()});
    if (const YAML::Node b = root["budget"]) {
      d.budget.polygons = b["polygons"].as<int>(d.budget.polygons);
      if (const YAML::Node m = b["materials"]) {
        d.budget.materials_min = m[0].as<int>();
        d.budget.materials_max = m[1].as<int>();
      }
    }
  } catch (const YAML::Exception& e) {
    config_error(std::string("device profile: ") + e.what());
  }
  validate_device(d);
  return d;
}

DeviceProfile load_device_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open device profile " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_device_profile(buf.str());
}

double capacity_fps(const DeviceProfile& device, int avatar_count) {
  if (avatar_count <= device.drop_threshold_avatars || device.curve.empty()) return device.target_fps;
  double x0 = device.drop_threshold_avatars;
  double y0 = device.target_fps;
  for (const KneePoint& k : device.curve) {
    if (avatar_count <= k.avatars) {
      const double u = (avatar_count - x0) / (k.avatars - x0);
      return y0 + (k.fps - y0) * u;
    }
    x0 = k.avatars;
    y0 = k.fps;
  }
  return device.curve.back().fps;
}

int max_avatars_at(const DeviceProfile& device, double fps_floor) {
  if (fps_floor > device.target_fps) {
    throw Error(ErrorKind::InvalidArgument, "fps floor " + fmt6(fps_floor) + " exceeds target " +
                                                fmt6(device.target_fps) + " of device '" + device.name + "'");
  }
  for (int n = device.domain_max(); n > 0; --n) {
    if (capacity_fps(device, n) >= fps_floor) return n;
  }
  return 0;
}

PerceptionBand perception_band(double fps) {
  if (fps >= 60.0) return PerceptionBand::Smooth;
  if (fps >= 40.0) return PerceptionBand::SlightDelay;
  return PerceptionBand::ObviousDelay;
}

const char* band_name(PerceptionBand band) {
  switch (band) {
    case PerceptionBand::Smooth: return "smooth";
    case PerceptionBand::SlightDelay: return "slight-delay";
    case PerceptionBand::ObviousDelay: return "obvious-delay";
  }
  return "?";
}

DeviceProfile default_device() {
  DeviceProfile d;
  d.name = "quest2";
  d.target_fps = 72.0;
  d.drop_threshold_avatars = 22;
  d.curve = {{23, 68.0}, {30, 58.0}, {40, 45.0}, {50, 36.0}, {60, 30.0}};
  return d;
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

const char* event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::Join: return "join";
    case EventKind::Leave: return "leave";
    case EventKind::Note: return "note";
    case EventKind::Salute: return "salute";
    case EventKind::SpeakStart: return "speak_start";
    case EventKind::SpeakStop: return "speak_stop";
    case EventKind::Effect: return "effect";
  }
  return "?";
}

AvatarAgent* SessionState::find(int id) {
  for (AvatarAgent& a : agents) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

const AvatarAgent* SessionState::find(int id) const {
  for (const AvatarAgent& a : agents) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

int SessionState::effective_cap() const {
  if (config.cap > 0) return config.cap;
  return max_avatars_at(config.device, config.device.target_fps);
}

SessionState make_session(const SessionConfig& config) {
  if (!(config.dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
  if (config.agents < 0 || config.npcs < 0 || config.npcs > config.agents) {
    throw Error(ErrorKind::InvalidArgument, "agent counts must satisfy 0 <= npcs <= agents");
  }
  validate_device(config.device);
  SessionState state;
  state.config = config;
  state.rng.seed(config.seed);
  if (config.agents > state.effective_cap()) {
    throw Error(ErrorKind::InvalidArgument, std::to_string(config.agents) + " agents exceed the cap of " +
                                                std::to_string(state.effective_cap()));
  }

  const double half = config.world_half_extent;
  int players = 0;
  for (int id = 0; id < config.agents; ++id) {
    AvatarAgent a;
    a.id = id;
    a.radius = config.radius;
    a.is_npc = id >= config.agents - config.npcs;
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const Vec2 p{uniform(state.rng, -half + a.radius, half - a.radius),
                   uniform(state.rng, -half + a.radius, half - a.radius)};
      if (!overlaps_any(state, p, a.radius, -1)) {
        a.position = p;
        placed = true;
      }
    }
    if (!placed) throw Error(ErrorKind::InvalidArgument, "world too small to place " + std::to_string(config.agents) + " agents");
    a.waypoint = a.position;
    if (a.is_npc) {
      a.instrument = "piano";
      a.planned_leave_s = kNpcStay;
    } else {
      if (players < 4) a.instrument = kPlayerInstruments[players++];
      a.speed = uniform(state.rng, config.min_speed, config.max_speed);
      a.planned_leave_s = uniform(state.rng, config.stay_min_s, config.stay_max_s);
    }
    add_agent(state, std::move(a), "");
  }
  return state;
}

void inject(SessionState& state, SessionEvent event) { state.pending.push_back(std::move(event)); }

SessionState step_session(SessionState state, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
  const SessionConfig& cfg = state.config;
  const double t0 = state.time_s;
  std::vector<SessionEvent> notes;

  while (!state.pending.empty()) {
    SessionEvent ev = std::move(state.pending.front());
    state.pending.pop_front();
    apply_injection(state, std::move(ev), notes);
  }

  // behaviour
  for (AvatarAgent& a : state.agents) {
    if (a.is_npc) {
      constexpr std::size_t kPatternLen = std::size(kNpcPattern);
      while (static_cast<double>(a.npc_cursor) * cfg.npc_note_interval_s < t0 + dt) {
        const int pitch = kNpcPattern[a.npc_cursor % kPatternLen];
        ++a.npc_cursor;
        SessionEvent ev{t0, EventKind::Note, a.id,
                        "pitch=" + std::to_string(pitch) + " vel=" + std::to_string(kNpcVelocity)};
        state.event_log.push_back(ev);
        notes.push_back(std::move(ev));
      }
      continue;
    }
    if (chance(state.rng, cfg.speak_toggle_rate_hz * dt)) {
      a.speaking = !a.speaking;
      state.event_log.push_back({t0, a.speaking ? EventKind::SpeakStart : EventKind::SpeakStop, a.id, ""});
    }
    if (a.instrument && chance(state.rng, cfg.note_rate_hz * dt)) {
      const int pitch = uniform_int(state.rng, 40, 84);
      const int vel = uniform_int(state.rng, 40, 127);
      SessionEvent ev{t0, EventKind::Note, a.id, "pitch=" + std::to_string(pitch) + " vel=" + std::to_string(vel)};
      state.event_log.push_back(ev);
      notes.push_back(std::move(ev));
    }
  }

  // steering
  std::vector<Vec2> previous;
  previous.reserve(state.agents.size());
  for (const AvatarAgent& a : state.agents) previous.push_back(a.position);
  const double half = cfg.world_half_extent;
  for (AvatarAgent& a : state.agents) {
    if (a.is_npc) continue;
    const Vec2 to = a.waypoint - a.position;
    const double dist = to.length();
    const double step = a.speed * dt;
    if (dist <= step) {
      a.position = a.waypoint;
      a.waypoint = {uniform(state.rng, -half + a.radius, half - a.radius),
                    uniform(state.rng, -half + a.radius, half - a.radius)};
    } else {
      a.position = a.position + to * (step / dist);
    }
  }
  resolve_collisions(state, previous);

  // salutes: users only initiate, once per ordered pair
  std::vector<std::pair<int, int>> salutes;
  for (const AvatarAgent& a : state.agents) {
    if (a.is_npc) continue;
    for (const AvatarAgent& b : state.agents) {
      if (a.id == b.id || state.saluted.contains({a.id, b.id})) continue;
      if (distance(a.position, b.position) > cfg.conversation_range_m) continue;
      if (chance(state.rng, cfg.salute_rate_hz * dt)) salutes.emplace_back(a.id, b.id);
    }
  }
  for (const auto& [a, b] : salutes) salute_in_place(state, a, b, "");

  state = update_excitement(std::move(state), notes, dt);

  // stay accounting
  std::vector<int> leaving;
  for (AvatarAgent& a : state.agents) {
    a.session_time_s += dt;
    if (a.session_time_s >= a.planned_leave_s) leaving.push_back(a.id);
  }
  for (int id : leaving) remove_agent(state, id, "stay=" + fmt6(state.find(id)->session_time_s));

  state.time_s = t0 + dt;
  ++state.steps;
  return state;
}

SessionState update_excitement(SessionState state, const std::vector<SessionEvent>& notes, double dt) {
  const SessionConfig& cfg = state.config;
  for (const SessionEvent& ev : notes) {
    if (ev.kind != EventKind::Note) continue;
    AvatarAgent* a = state.find(ev.actor);
    if (a == nullptr) continue;
    const auto kv = parse_payload(ev.payload);
    const int vel = static_cast<int>(payload_double(kv, "vel", 0.0));
    a->excitement = std::clamp(a->excitement + cfg.excitement_gain * effect_intensity(vel), 0.0, 100.0);
  }
  for (AvatarAgent& a : state.agents) {
    if (a.excitement >= cfg.effect_threshold && !a.above_threshold) {
      a.above_threshold = true;
      ++a.gifts;
      state.event_log.push_back(
          {state.time_s, EventKind::Effect, a.id, "level=" + fmt6(a.excitement) + " gifts=" + std::to_string(a.gifts)});
    }
    a.excitement = std::clamp(a.excitement * std::max(0.0, 1.0 - cfg.excitement_decay * dt), 0.0, 100.0);
    if (a.excitement < cfg.effect_threshold) a.above_threshold = false;
  }
  return state;
}

SessionState salute(SessionState state, int a, int b) {
  salute_in_place(state, a, b, "");
  return state;
}

CommReport validate_comm_quality(const SessionState& state) {
  const SessionConfig& cfg = state.config;
  CommReport report;
  report.agent_count = state.agents.size();
  for (const AvatarAgent& listener : state.agents) {
    int heard = 0;
    for (const AvatarAgent& s : state.agents) {
      if (s.id != listener.id && s.speaking && distance(s.position, listener.position) <= cfg.conversation_range_m) {
        ++heard;
      }
    }
    if (heard > cfg.audible_cap) report.crowded_listeners.push_back(listener.id);
  }
  for (const AvatarAgent& s : state.agents) {
    if (!s.speaking) continue;
    const bool anyone = std::any_of(state.agents.begin(), state.agents.end(), [&](const AvatarAgent& o) {
      return o.id != s.id && distance(o.position, s.position) <= cfg.conversation_range_m;
    });
    if (!anyone) report.isolated_speakers.push_back(s.id);
  }
  const auto n = static_cast<int>(report.agent_count);
  report.count_advisory = cfg.communication_mode && (n < 5 || n > 11);
  report.fps_estimate = capacity_fps(cfg.device, n);
  report.band = perception_band(report.fps_estimate);
  return report;
}

SessionState run_session(const SessionConfig& config, std::uint64_t steps, const std::vector<SessionEvent>& injections) {
  SessionState state = make_session(config);
  std::vector<SessionEvent> queue = injections;
  std::stable_sort(queue.begin(), queue.end(),
                   [](const SessionEvent& a, const SessionEvent& b) { return a.time_s < b.time_s; });
  std::size_t next = 0;
  for (std::uint64_t k = 0; k < steps; ++k) {
    while (next < queue.size() && queue[next].time_s <= state.time_s + 1e-9) inject(state, queue[next++]);
    state = step_session(std::move(state), config.dt);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Log format
// ---------------------------------------------------------------------------

std::string format_event(const SessionEvent& e) {
  return fmt6(e.time_s) + "\t" + event_kind_name(e.kind) + "\t" + std::to_string(e.actor) + "\t" + e.payload;
}

std::string format_log(const SessionState& state) {
  const SessionConfig& c = state.config;
  const DeviceProfile& d = c.device;
  std::string curve;
  for (const KneePoint& k : d.curve) {
    if (!curve.empty()) curve += ',';
    curve += std::to_string(k.avatars) + ":" + fmt17(k.fps);
  }
  std::string out = std::string(kHeaderTag) + "\tv1";
  auto put = [&out](const std::string& key, const std::string& value) { out += "\t" + key + "=" + value; };
  put("seed", std::to_string(c.seed));
  put("dt", fmt17(c.dt));
  put("steps", std::to_string(state.steps));
  put("agents", std::to_string(c.agents));
  put("npcs", std::to_string(c.npcs));
  put("cap", std::to_string(c.cap));
  put("comm", c.communication_mode ? "1" : "0");
  put("world", fmt17(c.world_half_extent));
  put("radius", fmt17(c.radius));
  put("range", fmt17(c.conversation_range_m));
  put("audible_cap", std::to_string(c.audible_cap));
  put("gain", fmt17(c.excitement_gain));
  put("decay", fmt17(c.excitement_decay));
  put("threshold", fmt17(c.effect_threshold));
  put("salute_bonus", fmt17(c.salute_bonus_s));
  put("stay_min", fmt17(c.stay_min_s));
  put("stay_max", fmt17(c.stay_max_s));
  put("note_rate", fmt17(c.note_rate_hz));
  put("speak_rate", fmt17(c.speak_toggle_rate_hz));
  put("salute_rate", fmt17(c.salute_rate_hz));
  put("min_speed", fmt17(c.min_speed));
  put("max_speed", fmt17(c.max_speed));
  put("npc_interval", fmt17(c.npc_note_interval_s));
  put("device", d.name);
  put("target_fps", fmt17(d.target_fps));
  put("drop", std::to_string(d.drop_threshold_avatars));
  put("curve", curve);
  put("polygons", std::to_string(d.budget.polygons));
  put("materials", std::to_string(d.budget.materials_min) + "-" + std::to_string(d.budget.materials_max));
  out += "\n";
  for (const SessionEvent& e : state.event_log) out += format_event(e) + "\n";
  return out;
}

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

SessionEvent parse_event_line(const std::string& line, std::size_t line_no) {
  const auto f = split_tabs(line);
  if (f.size() < 3 || f.size() > 4) throw CorruptLogError(line_no, "expected time, kind, actor and payload");
  SessionEvent e;
  try {
    std::size_t used = 0;
    e.time_s = std::stod(f[0], &used);
    if (used != f[0].size()) throw std::invalid_argument(f[0]);
    e.actor = std::stoi(f[2], &used);
    if (used != f[2].size()) throw std::invalid_argument(f[2]);
  } catch (const std::exception&) {
    throw CorruptLogError(line_no, "bad time or actor field");
  }
  const auto kind = kind_from_name(f[1]);
  if (!kind) throw CorruptLogError(line_no, "unknown event kind '" + f[1] + "'");
  e.kind = *kind;
  if (f.size() == 4) e.payload = f[3];
  return e;
}

SessionConfig parse_header(const std::string& line) {
  const auto f = split_tabs(line);
  if (f.size() < 2 || f[0] != kHeaderTag || f[1] != "v1") throw CorruptLogError(1, "missing session header");
  std::map<std::string, std::string> kv;
  for (std::size_t i = 2; i < f.size(); ++i) {
    const auto eq = f[i].find('=');
    if (eq == std::string::npos) throw CorruptLogError(1, "bad header field '" + f[i] + "'");
    kv[f[i].substr(0, eq)] = f[i].substr(eq + 1);
  }
  auto need = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw CorruptLogError(1, std::string("header lacks '") + key + "'");
    return it->second;
  };
  SessionConfig c;
  try {
    c.seed = std::stoull(need("seed"));
    c.dt = std::stod(need("dt"));
    c.agents = std::stoi(need("agents"));
    c.npcs = std::stoi(need("npcs"));
    c.cap = std::stoi(need("cap"));
    c.communication_mode = need("comm") == "1";
    c.world_half_extent = std::stod(need("world"));
    c.radius = std::stod(need("radius"));
    c.conversation_range_m = std::stod(need("range"));
    c.audible_cap = std::stoi(need("audible_cap"));
    c.excitement_gain = std::stod(need("gain"));
    c.excitement_decay = std::stod(need("decay"));
    c.effect_threshold = std::stod(need("threshold"));
    c.salute_bonus_s = std::stod(need("salute_bonus"));
    c.stay_min_s = std::stod(need("stay_min"));
    c.stay_max_s = std::stod(need("stay_max"));
    c.note_rate_hz = std::stod(need("note_rate"));
    c.speak_toggle_rate_hz = std::stod(need("speak_rate"));
    c.salute_rate_hz = std::stod(need("salute_rate"));
    c.min_speed = std::stod(need("min_speed"));
    c.max_speed = std::stod(need("max_speed"));
    c.npc_note_interval_s = std::stod(need("npc_interval"));
    c.device.name = need("device");
    c.device.target_fps = std::stod(need("target_fps"));
    c.device.drop_threshold_avatars = std::stoi(need("drop"));
    std::istringstream curve(need("curve"));
    std::string knee;
    while (std::getline(curve, knee, ',')) {
      const auto colon = knee.find(':');
      if (colon == std::string::npos) throw std::invalid_argument(knee);
      c.device.curve.push_back({std::stoi(knee.substr(0, colon)), std::stod(knee.substr(colon + 1))});
    }
    c.device.budget.polygons = std::stoi(need("polygons"));
    const std::string& mats = need("materials");
    const auto dash = mats.find('-');
    c.device.budget.materials_min = std::stoi(mats.substr(0, dash));
    c.device.budget.materials_max = std::stoi(mats.substr(dash + 1));
  } catch (const CorruptLogError&) {
    throw;
  } catch (const std::exception&) {
    throw CorruptLogError(1, "malformed header value");
  }
  return c;
}

}  // namespace

std::vector<SessionEvent> parse_events(const std::string& text) {
  std::vector<SessionEvent> events;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty() || lines[i][0] == '#') continue;
    SessionEvent e = parse_event_line(lines[i], i + 1);
    if (!events.empty() && e.time_s < events.back().time_s) throw CorruptLogError(i + 1, "timestamps decrease");
    events.push_back(std::move(e));
  }
  return events;
}

SessionState replay(const std::string& log_text) {
  auto lines = split_lines(log_text);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) {
    SessionConfig c;
    c.agents = 0;
    c.device = default_device();
    return make_session(c);
  }

  const SessionConfig config = parse_header(lines[0]);
  const auto steps_field = [&] {
    const auto f = split_tabs(lines[0]);
    for (const auto& field : f) {
      if (field.rfind("steps=", 0) == 0) return std::stoull(field.substr(6));
    }
    throw CorruptLogError(1, "header lacks 'steps'");
  }();

  struct Input {
    SessionEvent event;
    std::string time_text;
    std::size_t line;
  };
  std::vector<Input> external;
  double last_time = 0.0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    SessionEvent e = parse_event_line(lines[i], i + 1);
    if (e.time_s < last_time) throw CorruptLogError(i + 1, "timestamps decrease");
    last_time = e.time_s;
    if (is_external(e)) external.push_back({e, split_tabs(lines[i])[0], i + 1});
  }

  SessionState state;
  try {
    state = make_session(config);
  } catch (const Error& e) {
    throw CorruptLogError(1, std::string("header describes an invalid session: ") + e.what());
  }
  std::size_t next = 0;
  for (std::uint64_t k = 0; k < steps_field; ++k) {
    const std::string now = fmt6(state.time_s);
    while (next < external.size() && external[next].time_text == now) inject(state, external[next++].event);
    state = step_session(std::move(state), config.dt);
  }
  if (next < external.size()) throw CorruptLogError(external[next].line, "external event outside the simulated span");

  const auto regenerated = split_lines(format_log(state));
  const std::size_t common = std::min(regenerated.size(), lines.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (regenerated[i] != lines[i]) throw CorruptLogError(i + 1, "diverges from re-simulation");
  }
  if (regenerated.size() != lines.size()) {
    throw CorruptLogError(common + 1, regenerated.size() > lines.size() ? "log ends early" : "unexpected trailing events");
  }
  return state;
}

std::string summarize(const SessionState& state) {
  std::string out;
  out += "time_s\t" + fmt6(state.time_s) + "\n";
  out += "steps\t" + std::to_string(state.steps) + "\n";
  out += "events\t" + std::to_string(state.event_log.size()) + "\n";
  out += "agents\t" + std::to_string(state.agents.size()) + "\n";
  for (const AvatarAgent& a : state.agents) {
    out += "agent\t" + std::to_string(a.id) + "\tx=" + fmt6(a.position.x) + "\ty=" + fmt6(a.position.y) +
           "\tinstrument=" + a.instrument.value_or("none") + "\tnpc=" + (a.is_npc ? "1" : "0") +
           "\texcitement=" + fmt6(a.excitement) + "\tgifts=" + std::to_string(a.gifts) +
           "\tsession_time=" + fmt6(a.session_time_s) + "\tplanned_leave=" + fmt6(a.planned_leave_s) + "\n";
  }
  const CommReport r = validate_comm_quality(state);
  out += "fps_estimate\t" + fmt6(r.fps_estimate) + "\t" + band_name(r.band) + "\n";
  out += "crowded_listeners\t" + std::to_string(r.crowded_listeners.size()) + "\n";
  out += "isolated_speakers\t" + std::to_string(r.isolated_speakers.size()) + "\n";
  out += std::string("count_advisory\t") + (r.count_advisory ? "1" : "0") + "\n";
  return out;
}

}  // namespace fusion::session
