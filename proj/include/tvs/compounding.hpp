#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tvs/controller.hpp"
#include "tvs/geometry.hpp"

namespace tvs {

// Binary occupancy grid in world coordinates. Voxel (i,j,k) has its center
// at origin + (i,j,k) .* spacing.
struct LabelVolume {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 origin_mm = Vec3::Zero();
  Vec3 spacing_mm = Vec3::Zero();
  std::vector<std::uint8_t> occ;

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>((k * dims[1] + j) * dims[0] + i);
  }
  Vec3 center_of(int i, int j, int k) const {
    return origin_mm + Vec3(i * spacing_mm.x(), j * spacing_mm.y(), k * spacing_mm.z());
  }
  // Occupancy of the voxel containing p, false outside the grid.
  bool contains_point(const Vec3& p_mm) const;
};

struct IntensityVolume {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 origin_mm = Vec3::Zero();
  Vec3 spacing_mm = Vec3::Zero();
  std::vector<std::uint8_t> values;
};

struct CompoundingConfig {
  double voxel_pitch_mm = 0.5;
  enum class Vote { any_hit, majority } vote = Vote::any_hit;
  double padding_mm = 2.0;

  void validate() const;
};

// Shortest-arc spherical interpolation with unit-norm output. Endpoints are
// returned exactly at t = 0 and t = 1; nearly identical inputs fall back to
// normalized linear blending.
Quat slerp(const Quat& q0, const Quat& q1, double t);

// Pose at time t from a sample track sorted by timestamp: linear in
// translation, slerp in rotation. Exact sample hits return the sample
// unchanged. t outside [first, last] throws ValidationError.
ProbePose interpolate_pose(const std::vector<ProbePose>& samples, double t);

struct CompoundResult {
  IntensityVolume intensity;
  LabelVolume label;
};

// Forward-splats every frame pixel into a voxel grid sized from the sweep
// bounds plus padding. Frame poses are re-derived from the recorded pose
// track at each frame timestamp. Label voxels combine per cfg.vote;
// intensity voxels hold the mean of their contributions.
CompoundResult compound(const SweepRecording& sweep, const CompoundingConfig& cfg);

// Union of two volumes, resampled on a grid at the finer of the two pitches.
LabelVolume merge_lobes(const LabelVolume& a, const LabelVolume& b);

// Occupied volume in ml.
double volume_of(const LabelVolume& vol);

}  // namespace tvs
