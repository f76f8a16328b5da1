#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "tvs/errors.hpp"
#include "tvs/geometry.hpp"

namespace tvs {

enum class TissueClass : std::uint8_t { background = 0, thyroid = 1, trachea = 2 };

enum class LobeSide { left, right };

// Ellipsoid lobe; rotation is about the global x axis (the scan axis),
// applied around the ellipsoid center.
struct EllipsoidSpec {
  Vec3 center_mm = Vec3::Zero();
  Vec3 semi_axes_mm = Vec3::Zero();
  double rotation_deg = 0.0;
};

// Axis-aligned box. Any zero extent makes the box empty, which is how a
// phantom without an isthmus is expressed.
struct BoxSpec {
  Vec3 center_mm = Vec3::Zero();
  Vec3 extents_mm = Vec3::Zero();
};

// Cylinder along the x axis spanning the whole neck. radius 0 = absent.
struct CylinderSpec {
  Vec3 center_mm = Vec3::Zero();
  double radius_mm = 0.0;
};

struct PhantomSpec {
  double neck_radius_mm = 120.0;
  double neck_length_mm = 140.0;
  EllipsoidSpec lobe_left;    // +y side
  EllipsoidSpec lobe_right;   // -y side
  BoxSpec isthmus;
  CylinderSpec trachea;
  double voxel_pitch_mm = 0.5;

  static PhantomSpec defaults();

  // Throws ValidationError on non-positive dimensions, lobes leaving the
  // neck cylinder, or lobes intersecting the trachea.
  void validate() const;
};

// Regular voxel grid of TissueClass labels. Voxel (i,j,k) has its center at
// origin + (i,j,k) .* spacing; i runs over x, j over y, k over z.
struct LabelGrid {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 origin_mm = Vec3::Zero();
  Vec3 spacing_mm = Vec3::Zero();
  std::vector<std::uint8_t> labels;

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>((k * dims[1] + j) * dims[0] + i);
  }
  std::uint8_t at(int i, int j, int k) const { return labels[index(i, j, k)]; }
  Vec3 center_of(int i, int j, int k) const {
    return origin_mm + Vec3(i * spacing_mm.x(), j * spacing_mm.y(), k * spacing_mm.z());
  }
};

// Height field z = f(x,y) of the anterior neck surface, valid over the
// rectangle |x| <= half_length, |y| <= lateral_limit. The probe rides on it.
class SurfaceField {
 public:
  SurfaceField(double neck_radius_mm, double neck_length_mm);

  bool contains(double x, double y) const;
  // Throws ScanError when (x, y) leaves the reachable patch.
  double height(double x, double y) const;
  // Roll angle about x that makes the probe depth axis anti-parallel to the
  // surface normal at lateral position y.
  double normal_roll(double y) const;

  double radius() const { return radius_; }

 private:
  double radius_;
  double half_length_;
  double lateral_limit_;
};

struct SolidTests;

class PhantomModel {
 public:
  explicit PhantomModel(const PhantomSpec& spec);

  const PhantomSpec& spec() const { return spec_; }
  const LabelGrid& grid() const { return grid_; }
  const SurfaceField& surface() const { return surface_; }

  TissueClass classify(const Vec3& p_mm) const;
  bool in_lobe(LobeSide side, const Vec3& p_mm) const;

  // Thyroid volume in ml, counted over the label grid.
  double ground_truth_volume_ml() const;

 private:
  PhantomSpec spec_;
  LabelGrid grid_;
  SurfaceField surface_;
  std::shared_ptr<const SolidTests> solids_;
};

PhantomModel build_phantom(const PhantomSpec& spec);
TissueClass classify_point(const PhantomModel& model, const Vec3& p_mm);
double ground_truth_volume(const PhantomModel& model);

// Analytic volumes in mm^3, ignoring overlaps.
double ellipsoid_volume_mm3(const EllipsoidSpec& e);
double box_volume_mm3(const BoxSpec& b);

}  // namespace tvs
