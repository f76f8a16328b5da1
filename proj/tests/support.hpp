#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>

#include "tvs/geometry.hpp"
#include "tvs/imaging.hpp"
#include "tvs/phantom.hpp"

namespace fixtures {

// Building the default phantom voxelizes the whole neck (~65M voxels), so
// every suite shares one instance.
inline const tvs::PhantomModel& default_model() {
  static const tvs::PhantomModel model = tvs::build_phantom(tvs::PhantomSpec::defaults());
  return model;
}

// A single ellipsoid in a small neck: the two lobes coincide, no isthmus,
// no trachea. The small radius keeps grid construction around 10 ms.
inline tvs::PhantomSpec single_ellipsoid_spec(const tvs::Vec3& semi_axes = {20.0, 10.0, 10.0},
                                              double pitch = 0.5) {
  tvs::PhantomSpec s;
  s.neck_radius_mm = 40.0;
  s.neck_length_mm = 60.0;
  s.lobe_left = {tvs::Vec3(0.0, 0.0, 20.0), semi_axes, 0.0};
  s.lobe_right = s.lobe_left;
  s.isthmus = tvs::BoxSpec{};
  s.trachea = tvs::CylinderSpec{};
  s.voxel_pitch_mm = pitch;
  return s;
}

// Default geometry minus the isthmus: two disjoint ellipsoids whose total
// volume has a closed form.
inline tvs::PhantomSpec two_lobe_spec_no_isthmus() {
  tvs::PhantomSpec s = tvs::PhantomSpec::defaults();
  s.isthmus.extents_mm = tvs::Vec3::Zero();
  return s;
}

inline tvs::Quat random_unit_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  tvs::Quat q(n(rng), n(rng), n(rng), n(rng));
  while (q.norm() < 1e-6) q = tvs::Quat(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q;
}

// Probe standing on the skin at (x, y), depth axis along the inward surface
// normal plus an optional roll offset.
inline tvs::ProbePose surface_pose(const tvs::PhantomModel& m, double x, double y,
                                   const tvs::ImagingConfig& cfg, double tilt_deg = 0.0) {
  tvs::ProbePose p;
  p.rotation =
      tvs::Quat(tvs::rot_x(M_PI + m.surface().normal_roll(y) + tvs::deg2rad(tilt_deg)))
          .normalized();
  p.translation = tvs::Vec3(x, y, 0.0);
  return tvs::settle_z(p, m.surface(), cfg);
}

// Runs fn and captures the message of an expected exception type; nullopt
// when nothing (or something else) was thrown.
template <class E, class F>
std::optional<std::string> thrown_message(F&& fn) {
  try {
    fn();
  } catch (const E& e) {
    return std::string(e.what());
  } catch (...) {
  }
  return std::nullopt;
}

inline bool contains(const std::optional<std::string>& msg, const std::string& needle) {
  return msg && msg->find(needle) != std::string::npos;
}

}  // namespace fixtures
