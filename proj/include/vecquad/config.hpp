// JSON (de)serialization of every tunable parameter block plus the scenario
// file the CLI consumes. Parsing reports the offending field by name.
#pragma once

#include <array>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vecquad/allocation.hpp"
#include "vecquad/control.hpp"
#include "vecquad/gait.hpp"
#include "vecquad/interference.hpp"
#include "vecquad/model.hpp"
#include "vecquad/sim.hpp"

namespace vecquad {

using Json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
void read_field(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline Vec3 read_vec3(const Json& j, const char* key, const Vec3& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) {
    throw ConfigError(std::string("config field '") + key + "' must be a 3-array");
  }
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

inline Vec2 read_vec2(const Json& j, const char* key, const Vec2& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2) {
    throw ConfigError(std::string("config field '") + key + "' must be a 2-array");
  }
  return Vec2(a[0].get<double>(), a[1].get<double>());
}

}  // namespace detail

inline void to_json(Json& j, const RobotModel& m) {
  j = Json{{"torso_half_width", m.torso_half_width},
           {"link_length", m.link_length},
           {"rotor_offset", m.rotor_offset},
           {"segment_masses", m.segment_masses},
           {"thrust_limit", m.thrust_limit},
           {"joint_torque_limit", m.joint_torque_limit},
           {"joint_angle_limit", m.joint_angle_limit},
           {"joint_speed_limit", m.joint_speed_limit},
           {"gravity", m.gravity},
           {"rod_inertia", m.rod_inertia}};
}

inline void from_json(const Json& j, RobotModel& m) {
  detail::read_field(j, "torso_half_width", m.torso_half_width);
  detail::read_field(j, "link_length", m.link_length);
  detail::read_field(j, "rotor_offset", m.rotor_offset);
  if (j.contains("segment_masses")) {
    detail::read_field(j, "segment_masses", m.segment_masses);
  } else if (j.contains("torso_mass") || j.contains("link_mass")) {
    double torso = m.segment_masses[0], link = m.segment_masses[1];
    detail::read_field(j, "torso_mass", torso);
    detail::read_field(j, "link_mass", link);
    m.segment_masses[0] = torso;
    for (int i = 1; i < kNumSegments; ++i) m.segment_masses[i] = link;
  }
  detail::read_field(j, "thrust_limit", m.thrust_limit);
  detail::read_field(j, "joint_torque_limit", m.joint_torque_limit);
  detail::read_field(j, "joint_angle_limit", m.joint_angle_limit);
  detail::read_field(j, "joint_speed_limit", m.joint_speed_limit);
  detail::read_field(j, "gravity", m.gravity);
  detail::read_field(j, "rod_inertia", m.rod_inertia);
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

inline void to_json(Json& j, const ControllerGains& g) {
  j = Json{{"kf_p", g.kf_p}, {"kf_i", g.kf_i}, {"kf_d", g.kf_d},
           {"kt_p", g.kt_p}, {"kt_i", g.kt_i}, {"kt_d", g.kt_d},
           {"kj_p", g.kj_p}, {"kj_d", g.kj_d},
           {"pos_integral_clamp", g.pos_integral_clamp},
           {"att_integral_clamp", g.att_integral_clamp},
           {"wrench_force_xy_clamp", g.wrench_force_xy_clamp},
           {"wrench_force_z_min", g.wrench_force_z_min},
           {"wrench_force_z_max", g.wrench_force_z_max},
           {"wrench_torque_clamp", g.wrench_torque_clamp}};
}

inline void from_json(const Json& j, ControllerGains& g) {
  detail::read_field(j, "kf_p", g.kf_p);
  detail::read_field(j, "kf_i", g.kf_i);
  detail::read_field(j, "kf_d", g.kf_d);
  detail::read_field(j, "kt_p", g.kt_p);
  detail::read_field(j, "kt_i", g.kt_i);
  detail::read_field(j, "kt_d", g.kt_d);
  detail::read_field(j, "kj_p", g.kj_p);
  detail::read_field(j, "kj_d", g.kj_d);
  detail::read_field(j, "pos_integral_clamp", g.pos_integral_clamp);
  detail::read_field(j, "att_integral_clamp", g.att_integral_clamp);
  detail::read_field(j, "wrench_force_xy_clamp", g.wrench_force_xy_clamp);
  detail::read_field(j, "wrench_force_z_min", g.wrench_force_z_min);
  detail::read_field(j, "wrench_force_z_max", g.wrench_force_z_max);
  detail::read_field(j, "wrench_torque_clamp", g.wrench_torque_clamp);
}

inline void to_json(Json& j, const AllocationWeights& w) {
  j = Json{{"thrust", w.thrust}, {"joint_torque", w.joint_torque}};
}

inline void from_json(const Json& j, AllocationWeights& w) {
  detail::read_field(j, "thrust", w.thrust);
  detail::read_field(j, "joint_torque", w.joint_torque);
}

inline void to_json(Json& j, const ContactWrenchBounds& b) {
  j = Json{{"f_xy", b.f_xy}, {"tau_xy", b.tau_xy}, {"tau_z", b.tau_z}};
}

inline void from_json(const Json& j, ContactWrenchBounds& b) {
  detail::read_field(j, "f_xy", b.f_xy);
  detail::read_field(j, "tau_xy", b.tau_xy);
  detail::read_field(j, "tau_z", b.tau_z);
}

inline void to_json(Json& j, const InterferenceParams& p) {
  j = Json{{"clearance_radius", p.downwash.clearance_radius},
           {"influence_length", p.downwash.influence_length},
           {"ignore_inclination", p.ignore_inclination},
           {"restriction_threshold", p.restriction_threshold},
           {"theta_max", p.theta_max}};
}

inline void from_json(const Json& j, InterferenceParams& p) {
  detail::read_field(j, "clearance_radius", p.downwash.clearance_radius);
  detail::read_field(j, "influence_length", p.downwash.influence_length);
  detail::read_field(j, "ignore_inclination", p.ignore_inclination);
  detail::read_field(j, "restriction_threshold", p.restriction_threshold);
  detail::read_field(j, "theta_max", p.theta_max);
}

inline void to_json(Json& j, const GaitParams& g) {
  j = Json{{"stride", g.stride},
           {"direction", {g.direction.x(), g.direction.y()}},
           {"torso_lift_height", g.torso_lift_height},
           {"leg_lift_angle", g.leg_lift_angle},
           {"stance_radius", g.stance_radius},
           {"stance_yaw", g.stance_yaw},
           {"touchdown_duration", g.touchdown_duration},
           {"min_phase_duration", g.min_phase_duration},
           {"speed_margin", g.speed_margin},
           {"torso_speed", g.torso_speed},
           {"cycles", g.cycles}};
}

inline void from_json(const Json& j, GaitParams& g) {
  detail::read_field(j, "stride", g.stride);
  g.direction = detail::read_vec2(j, "direction", g.direction);
  detail::read_field(j, "torso_lift_height", g.torso_lift_height);
  detail::read_field(j, "leg_lift_angle", g.leg_lift_angle);
  detail::read_field(j, "stance_radius", g.stance_radius);
  detail::read_field(j, "stance_yaw", g.stance_yaw);
  detail::read_field(j, "touchdown_duration", g.touchdown_duration);
  detail::read_field(j, "min_phase_duration", g.min_phase_duration);
  detail::read_field(j, "speed_margin", g.speed_margin);
  detail::read_field(j, "torso_speed", g.torso_speed);
  detail::read_field(j, "cycles", g.cycles);
}

// Named symmetric forms for the flight experiments.
inline JointVec named_form(const std::string& name) {
  if (name == "flat" || name == "form1") return symmetric_form(0.0, 0.0);
  if (name == "form2") return symmetric_form(30.0 * M_PI / 180.0, 60.0 * M_PI / 180.0);
  if (name == "form3") return symmetric_form(45.0 * M_PI / 180.0, 90.0 * M_PI / 180.0);
  throw ConfigError("unknown form name '" + name + "'");
}

inline void to_json(Json& j, const FormKeyframe& kf) {
  std::vector<double> q(kf.q.data(), kf.q.data() + kNumJoints);
  j = Json{{"t", kf.t}, {"q", q}};
}

inline void from_json(const Json& j, FormKeyframe& kf) {
  detail::read_field(j, "t", kf.t);
  if (j.contains("name")) {
    kf.q = named_form(j.at("name").get<std::string>());
  } else if (j.contains("hip_pitch") || j.contains("knee_pitch")) {
    double hip = 0.0, knee = 0.0;
    detail::read_field(j, "hip_pitch", hip);
    detail::read_field(j, "knee_pitch", knee);
    kf.q = symmetric_form(hip, knee);
  } else if (j.contains("q")) {
    std::vector<double> q;
    detail::read_field(j, "q", q);
    if (q.size() != kNumJoints) {
      throw ConfigError("config field 'q' must have 16 entries");
    }
    for (int i = 0; i < kNumJoints; ++i) kf.q[i] = q[i];
  } else {
    throw ConfigError("form keyframe needs 'name', 'hip_pitch'/'knee_pitch' or 'q'");
  }
}

inline void to_json(Json& j, const FlightPlan& p) {
  j = Json{{"hover_position", {p.hover_position.x(), p.hover_position.y(), p.hover_position.z()}},
           {"forms", p.forms},
           {"no_interference_windows", p.no_interference_windows}};
}

inline void from_json(const Json& j, FlightPlan& p) {
  p.hover_position = detail::read_vec3(j, "hover_position", p.hover_position);
  detail::read_field(j, "forms", p.forms);
  detail::read_field(j, "no_interference_windows", p.no_interference_windows);
}

inline void to_json(Json& j, const SimConfig& c) {
  j = Json{{"dt", c.dt},
           {"duration", c.duration},
           {"mode", c.mode == SimMode::flight ? "flight" : "crawl"},
           {"disturbance", c.disturbance},
           {"seed", c.seed}};
}

inline void from_json(const Json& j, SimConfig& c) {
  detail::read_field(j, "dt", c.dt);
  detail::read_field(j, "duration", c.duration);
  if (j.contains("mode")) {
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "flight") {
      c.mode = SimMode::flight;
    } else if (mode == "crawl") {
      c.mode = SimMode::crawl;
    } else {
      throw ConfigError("config field 'mode' must be 'flight' or 'crawl'");
    }
  }
  detail::read_field(j, "disturbance", c.disturbance);
  detail::read_field(j, "seed", c.seed);
}

// The scenario file: everything one run needs.
struct ScenarioConfig {
  std::string robot_file;  // optional; empty = built-in defaults
  RobotModel robot;
  ControllerGains gains;
  AllocationWeights weights;
  InterferenceParams interference;
  ContactWrenchBounds contact_bounds;  // torso on the ground
  ContactWrenchBounds stance_bounds{78.4, 60.0, 60.0};  // weight on the feet
  GaitParams gait;
  SimConfig sim;
  FlightPlan flight;
  JointVec analysis_pose = JointVec::Zero();
  std::string output_dir = "out";

  static ScenarioConfig defaults() {
    ScenarioConfig c;
    c.flight.forms = {{0.0, named_form("form1")},
                      {8.0, named_form("form2")},
                      {20.0, named_form("form3")}};
    c.sim.duration = 32.0;
    c.analysis_pose = named_form("form3");
    return c;
  }
};

inline void to_json(Json& j, const ScenarioConfig& c) {
  std::vector<double> pose(c.analysis_pose.data(), c.analysis_pose.data() + kNumJoints);
  j = Json{{"robot_file", c.robot_file},
           {"robot", c.robot},
           {"gains", c.gains},
           {"weights", c.weights},
           {"interference", c.interference},
           {"contact_bounds", c.contact_bounds},
           {"stance_bounds", c.stance_bounds},
           {"gait", c.gait},
           {"sim", c.sim},
           {"flight", c.flight},
           {"analysis_pose", pose},
           {"output_dir", c.output_dir}};
}

inline void from_json(const Json& j, ScenarioConfig& c) {
  c = ScenarioConfig::defaults();
  detail::read_field(j, "robot_file", c.robot_file);
  if (j.contains("robot")) detail::read_field(j, "robot", c.robot);
  detail::read_field(j, "gains", c.gains);
  detail::read_field(j, "weights", c.weights);
  detail::read_field(j, "interference", c.interference);
  detail::read_field(j, "contact_bounds", c.contact_bounds);
  detail::read_field(j, "stance_bounds", c.stance_bounds);
  detail::read_field(j, "gait", c.gait);
  detail::read_field(j, "sim", c.sim);
  detail::read_field(j, "flight", c.flight);
  if (j.contains("analysis_pose")) {
    const auto& a = j.at("analysis_pose");
    if (a.is_string()) {
      c.analysis_pose = named_form(a.get<std::string>());
    } else {
      std::vector<double> pose;
      detail::read_field(j, "analysis_pose", pose);
      if (pose.size() != kNumJoints) throw ConfigError("'analysis_pose' must have 16 entries");
      for (int i = 0; i < kNumJoints; ++i) c.analysis_pose[i] = pose[i];
    }
  }
  detail::read_field(j, "output_dir", c.output_dir);
}

inline Json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("config parse error in '" + path + "': " + e.what());
  }
}

// Load a scenario, following robot_file when present.
inline ScenarioConfig load_scenario(const std::string& path) {
  const Json j = parse_json_file(path);
  ScenarioConfig c = j.get<ScenarioConfig>();
  if (!c.robot_file.empty()) {
    const Json rj = parse_json_file(c.robot_file);
    c.robot = rj.get<RobotModel>();
  }
  return c;
}

inline void to_json(Json& j, const TrajectorySummary& s) {
  j = Json{{"mode", s.mode},
           {"ticks", s.ticks},
           {"duration", s.duration},
           {"rmse_position", s.rmse_position},
           {"rmse_position_xyz",
            {s.rmse_position_xyz.x(), s.rmse_position_xyz.y(), s.rmse_position_xyz.z()}},
           {"rmse_orientation", s.rmse_orientation},
           {"max_wrench_residual", s.max_wrench_residual},
           {"thrust_integral", s.thrust_integral},
           {"hover_thrust_integral", s.hover_thrust_integral},
           {"violations", s.violations},
           {"solve_ms_median", s.solve_ms_median},
           {"solve_ms_max", s.solve_ms_max},
           {"displacement", {s.displacement.x(), s.displacement.y(), s.displacement.z()}},
           {"cycle_displacement", s.cycle_displacement},
           {"cycle_joint_repeatability", s.cycle_joint_repeatability}};
}

inline void to_json(Json& j, const VectoringRange& r) {
  Json subsets = Json::array();
  for (const auto& s : r.subsets) subsets.push_back({s.lo, s.hi});
  Json invalid = Json::array();
  for (const auto& s : r.invalid) invalid.push_back({s.lo, s.hi});
  Json pairs = Json::array();
  for (const auto& p : r.pairs) {
    pairs.push_back({{"other", p.other}, {"alpha", p.alpha}, {"considered", p.considered}});
  }
  j = Json{{"rotor", r.rotor},
           {"phi_hat", r.phi_hat},
           {"theta_hat", r.theta_hat},
           {"singular", r.singular},
           {"subsets", subsets},
           {"invalid", invalid},
           {"mu_lo", r.mu_lo},
           {"mu_hi", r.mu_hi},
           {"restricted", r.restricted},
           {"pairs", pairs}};
}

}  // namespace vecquad
