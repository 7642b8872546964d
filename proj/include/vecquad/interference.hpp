// Downwash interference between a vectorable rotor and the segments below
// it. For each rotor the thrust ray (opposite the thrust direction) must
// clear every nearby rotor disc and link rod by a configured radius; the
// tilt angles theta for which it does form the valid vectoring range. The
// range decomposes into disjoint intervals, the interval nearest upright is
// kept, and its bounds become linear constraints on the rotor force.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vecquad/geometry.hpp"
#include "vecquad/model.hpp"

namespace vecquad {

struct RangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DownwashModel {
  double clearance_radius = 0.04;  // m, clearance cylinder around the ray
  double influence_length = 1.0;   // m, downstream reach of the downwash

  void validate() const {
    if (!(clearance_radius > 0.0) || !(influence_length > 0.0)) {
      throw std::invalid_argument("downwash: radii/lengths must be positive");
    }
  }
};

struct InterferenceParams {
  DownwashModel downwash;
  double ignore_inclination = 30.0 * M_PI / 180.0;  // alpha_bar, pair filter
  double restriction_threshold = 0.7;               // theta_bar for the restricted set
  double theta_max = 1.3;                           // vectoring half-range, rad
  double grid_step = M_PI / 180.0;                  // scan resolution
  double edge_tol = 0.01 * M_PI / 180.0;            // bisection tolerance
};

struct ThetaInterval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double t) const { return t >= lo && t <= hi; }
};

struct RotorPair {
  int other = -1;
  double alpha = 0.0;
  bool considered = false;
};

struct VectoringRange {
  int rotor = -1;
  double phi_hat = 0.0;
  double theta_hat = 0.0;
  bool singular = false;  // rod parallel to up: phi_hat held at its previous value
  std::vector<ThetaInterval> subsets;   // disjoint valid intervals, ascending
  std::vector<ThetaInterval> invalid;   // merged invalid intervals, ascending
  int chosen = -1;                      // index into subsets
  double mu_lo = 0.0;
  double mu_hi = 0.0;
  bool restricted = false;

  std::vector<RotorPair> pairs;  // rotor-rotor inclinations

  bool theta_invalid(double theta) const {
    for (const auto& iv : invalid) {
      if (iv.contains(theta)) return true;
    }
    return false;
  }
};

struct NominalAngles {
  double phi = 0.0;
  double theta = 0.0;
  bool singular = false;
};

// Solve R_link * u(phi, theta) = up for the nominal angles. up is the
// world vertical expressed in the same frame as link_rot (body axes).
inline NominalAngles nominal_angles(const Mat3& link_rot, const Vec3& up = Vec3(0, 0, 1)) {
  const Vec3 d = link_rot.transpose() * up.normalized();
  NominalAngles out;
  if (std::hypot(d.y(), d.z()) < 1e-6) {
    // rod vertical: phi is undetermined, caller locks it
    out.singular = true;
    out.theta = std::asin(std::clamp(d.x(), -1.0, 1.0));
    return out;
  }
  out.phi = std::atan2(-d.y(), d.z());
  out.theta = std::asin(std::clamp(d.x(), -1.0, 1.0));
  return out;
}

// Inclination of the line connecting two rotors, measured in rotor i's
// phi-aligned link frame. Near pi/2 the pair is purely lateral and its
// downwash cannot reach the other rotor in a near-hovering state.
// Components below the noise floor snap to zero so that a pair lying along
// the rod reads as alpha = 0, not as an arbitrary ratio of rounding errors.
inline double pair_inclination(const Vec3& p_i, const Vec3& p_j, const Mat3& phi_frame) {
  const Vec3 v = phi_frame.transpose() * (p_j - p_i);
  const double norm = v.norm();
  if (norm < 1e-9) throw std::invalid_argument("pair_inclination: coincident rotors");
  const double snap = 1e-9 * norm;
  const double vy = (std::abs(v.y()) < snap) ? 0.0 : std::abs(v.y());
  const double vz = (std::abs(v.z()) < snap) ? 0.0 : std::abs(v.z());
  return std::atan2(vy, vz);
}

struct Obstacle {
  enum class Kind { rotor, link };
  Kind kind = Kind::rotor;
  Vec3 a = Vec3::Zero();  // rotor center, or segment start
  Vec3 b = Vec3::Zero();  // segment end (unused for rotors)
  int index = -1;

  Vec3 closest_point(const Vec3& p) const {
    if (kind == Kind::rotor) return a;
    const Vec3 ab = b - a;
    const double den = ab.squaredNorm();
    if (den < 1e-18) return a;
    const double t = std::clamp((p - a).dot(ab) / den, 0.0, 1.0);
    return a + t * ab;
  }
};

namespace detail {

inline double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double den = ab.squaredNorm();
  if (den < 1e-18) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / den, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

// Minimum distance between segments [p1,q1] and [p2,q2].
inline double segment_segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2,
                                        const Vec3& q2) {
  const Vec3 d1 = q1 - p1;
  const Vec3 d2 = q2 - p2;
  const Vec3 r = p1 - p2;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a < 1e-18 && e < 1e-18) return r.norm();
  if (a < 1e-18) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e < 1e-18) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double den = a * e - b * b;
      s = (den > 1e-18) ? std::clamp((b * f - c * e) / den, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return (p1 + s * d1 - (p2 + t * d2)).norm();
}

inline double ray_obstacle_distance(const Vec3& origin, const Vec3& dir, double length,
                                    const Obstacle& obs) {
  const Vec3 end = origin + length * dir;
  if (obs.kind == Obstacle::Kind::rotor) {
    return point_segment_distance(obs.a, origin, end);
  }
  return segment_segment_distance(origin, end, obs.a, obs.b);
}

}  // namespace detail

// Theta intervals for which the downwash ray from a rotor passes within the
// clearance radius of one obstacle. phi_frame is the rotor's link frame
// pre-rotated by phi_hat, so the ray direction at angle t is
// -phi_frame * [sin t, 0, cos t]. Usually zero or one interval; a long rod
// obstacle can produce two.
inline std::vector<ThetaInterval> invalid_theta_intervals(const Vec3& origin,
                                                          const Mat3& phi_frame,
                                                          const Obstacle& obs,
                                                          const DownwashModel& downwash,
                                                          const InterferenceParams& params) {
  std::vector<ThetaInterval> out;
  // quick reject: the obstacle can never meet a ray of this length
  const Vec3 near = obs.closest_point(origin);
  if ((near - origin).norm() > downwash.influence_length + downwash.clearance_radius) {
    return out;
  }

  const auto hit = [&](double theta) {
    const Vec3 dir = -(phi_frame * Vec3(std::sin(theta), 0.0, std::cos(theta)));
    return detail::ray_obstacle_distance(origin, dir, downwash.influence_length, obs) <
           downwash.clearance_radius;
  };

  const double tmax = params.theta_max;
  const int n = static_cast<int>(std::ceil(2.0 * tmax / params.grid_step));
  const double step = 2.0 * tmax / n;

  const auto refine = [&](double in, double outside) {
    // bisect between a hitting and a clear sample
    for (int k = 0; k < 60 && std::abs(in - outside) > params.edge_tol; ++k) {
      const double mid = 0.5 * (in + outside);
      (hit(mid) ? in : outside) = mid;
    }
    return 0.5 * (in + outside);
  };

  bool prev_hit = false;
  double run_start = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double theta = -tmax + k * step;
    const bool h = hit(theta);
    if (h && !prev_hit) {
      run_start = theta;
    }
    if (!h && prev_hit) {
      const double prev_theta = theta - step;
      ThetaInterval iv;
      iv.lo = (run_start <= -tmax + 0.5 * step) ? -tmax : refine(run_start, run_start - step);
      iv.hi = refine(prev_theta, theta);
      out.push_back(iv);
    }
    prev_hit = h;
  }
  if (prev_hit) {
    ThetaInterval iv;
    iv.lo = (run_start <= -tmax + 0.5 * step) ? -tmax : refine(run_start, run_start - step);
    iv.hi = tmax;
    out.push_back(iv);
  }
  return out;
}

namespace detail {

inline std::vector<ThetaInterval> merge_intervals(std::vector<ThetaInterval> list) {
  std::sort(list.begin(), list.end(),
            [](const ThetaInterval& a, const ThetaInterval& b) { return a.lo < b.lo; });
  std::vector<ThetaInterval> merged;
  for (const auto& iv : list) {
    if (!merged.empty() && iv.lo <= merged.back().hi + 1e-12) {
      merged.back().hi = std::max(merged.back().hi, iv.hi);
    } else {
      merged.push_back(iv);
    }
  }
  return merged;
}

inline std::vector<ThetaInterval> complement(const std::vector<ThetaInterval>& merged,
                                             double lo, double hi) {
  std::vector<ThetaInterval> out;
  double cursor = lo;
  for (const auto& iv : merged) {
    if (iv.lo > cursor + 1e-12) out.push_back({cursor, std::min(iv.lo, hi)});
    cursor = std::max(cursor, iv.hi);
    if (cursor >= hi) break;
  }
  if (cursor < hi - 1e-12) out.push_back({cursor, hi});
  return out;
}

}  // namespace detail

// Index of the subset whose closest point to theta = 0 is smallest.
// Ties go to the larger interval, then the lower index.
inline int best_subset(const std::vector<ThetaInterval>& subsets) {
  int best = -1;
  double best_score = kInf;
  double best_width = -1.0;
  for (int k = 0; k < static_cast<int>(subsets.size()); ++k) {
    const auto& s = subsets[k];
    const double score = s.contains(0.0) ? 0.0 : std::min(std::abs(s.lo), std::abs(s.hi));
    if (score < best_score - 1e-12 ||
        (std::abs(score - best_score) <= 1e-12 && s.width() > best_width + 1e-12)) {
      best = k;
      best_score = score;
      best_width = s.width();
    }
  }
  return best;
}

// Valid vectoring ranges for every rotor at the given configuration.
// up_body is the world vertical in body axes; prev_phi supplies the locked
// roll angle for rotors whose rod is vertical.
inline std::array<VectoringRange, kNumRotors> valid_ranges(
    const RobotModel& model, const KinematicsResult& kin, const Vec3& up_body,
    const InterferenceParams& params,
    const std::array<double, kNumRotors>& prev_phi = {}) {
  params.downwash.validate();
  std::array<VectoringRange, kNumRotors> ranges;

  // obstacle slots: 8 rotor discs + 8 link rods
  std::vector<Obstacle> obstacles;
  for (int j = 0; j < kNumRotors; ++j) {
    Obstacle o;
    o.kind = Obstacle::Kind::rotor;
    o.a = kin.rotor_pos[j];
    o.index = j;
    obstacles.push_back(o);
  }
  for (int k = 0; k < kNumLinks; ++k) {
    const int leg = k / 2;
    Obstacle o;
    o.kind = Obstacle::Kind::link;
    o.a = (k % 2 == 0) ? kin.joint_pos[4 * leg] : kin.joint_pos[4 * leg + 2];
    o.b = (k % 2 == 0) ? kin.joint_pos[4 * leg + 2] : kin.foot_pos[leg];
    o.index = k;
    obstacles.push_back(o);
  }

  for (int i = 0; i < kNumRotors; ++i) {
    VectoringRange& r = ranges[i];
    r.rotor = i;
    const NominalAngles nom = nominal_angles(kin.link_rot[i], up_body);
    r.singular = nom.singular;
    r.phi_hat = nom.singular ? prev_phi[i] : nom.phi;
    r.theta_hat = nom.theta;

    const Mat3 phi_frame = kin.link_rot[i] * rot_x(r.phi_hat);
    std::vector<ThetaInterval> invalid;
    for (const auto& obs : obstacles) {
      if (obs.kind == Obstacle::Kind::rotor && obs.index == i) continue;
      if (obs.kind == Obstacle::Kind::link && obs.index == i) continue;  // own rod

      const Vec3 anchor = obs.closest_point(kin.rotor_pos[i]);
      if ((anchor - kin.rotor_pos[i]).norm() < 1e-9) continue;
      const double alpha = pair_inclination(kin.rotor_pos[i], anchor, phi_frame);
      const bool considered = alpha < params.ignore_inclination;
      if (obs.kind == Obstacle::Kind::rotor) {
        r.pairs.push_back({obs.index, alpha, considered});
      }
      if (!considered) continue;

      auto ivs = invalid_theta_intervals(kin.rotor_pos[i], phi_frame, obs, params.downwash,
                                         params);
      invalid.insert(invalid.end(), ivs.begin(), ivs.end());
    }

    r.invalid = detail::merge_intervals(std::move(invalid));
    r.subsets = detail::complement(r.invalid, -params.theta_max, params.theta_max);
    if (r.subsets.empty()) {
      throw RangeError("no valid vectoring range for rotor " + std::to_string(i));
    }
    r.chosen = best_subset(r.subsets);
    r.mu_lo = r.subsets[r.chosen].lo;
    r.mu_hi = r.subsets[r.chosen].hi;
    r.restricted = std::min(-r.mu_lo, r.mu_hi) < params.restriction_threshold;
  }
  return ranges;
}

// Rotors whose nearest vectoring boundary is closer to upright than
// theta_bar and therefore enter the allocation with explicit constraints.
inline std::vector<int> restricted_set(const std::array<VectoringRange, kNumRotors>& ranges,
                                       double theta_bar) {
  std::vector<int> out;
  for (const auto& r : ranges) {
    if (std::min(-r.mu_lo, r.mu_hi) < theta_bar) out.push_back(r.rotor);
  }
  return out;
}

// Linear rows on the rotor force f (body axes) equivalent, for any f with
// positive thrust, to { f_y = 0 in the phi-aligned frame and
// theta(f) in [mu_lo, mu_hi] }.
struct ForceConstraint {
  int rotor = -1;
  Vec3 y_axis = Vec3::Zero();    // y_axis . f  = 0
  Vec3 inf_axis = Vec3::Zero();  // inf_axis . f >= 0
  Vec3 sup_axis = Vec3::Zero();  // sup_axis . f <= 0
};

inline ForceConstraint force_constraints(const VectoringRange& range, const Mat3& link_rot) {
  const Mat3 phi_frame = link_rot * rot_x(range.phi_hat);
  ForceConstraint fc;
  fc.rotor = range.rotor;
  fc.y_axis = phi_frame.col(1);
  fc.inf_axis = phi_frame * Vec3(std::cos(range.mu_lo), 0.0, -std::sin(range.mu_lo));
  fc.sup_axis = phi_frame * Vec3(std::cos(range.mu_hi), 0.0, -std::sin(range.mu_hi));
  return fc;
}

}  // namespace vecquad
