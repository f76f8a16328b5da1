#include "tvs/phantom.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace tvs {
namespace phantom_detail {

// Solid-inclusion tests on raw coordinates; the grid builder and the
// renderer run these tens of millions of times, so constants are
// precomputed and no Vec3 temporaries appear.
struct EllipsoidTest {
  double cx = 0, cy = 0, cz = 0;
  double inv_ax2 = 0, inv_ay2 = 0, inv_az2 = 0;
  double cos_t = 1, sin_t = 0;
  bool empty = true;

  EllipsoidTest() = default;
  explicit EllipsoidTest(const EllipsoidSpec& e) {
    cx = e.center_mm.x();
    cy = e.center_mm.y();
    cz = e.center_mm.z();
    empty = e.semi_axes_mm.minCoeff() <= 0.0;
    if (!empty) {
      const double ax = e.semi_axes_mm.x(), ay = e.semi_axes_mm.y(), az = e.semi_axes_mm.z();
      inv_ax2 = 1.0 / (ax * ax);
      inv_ay2 = 1.0 / (ay * ay);
      inv_az2 = 1.0 / (az * az);
    }
    const double t = deg2rad(e.rotation_deg);
    cos_t = std::cos(t);
    sin_t = std::sin(t);
  }

  bool contains(double x, double y, double z) const {
    if (empty) return false;
    const double qx = x - cx, qy = y - cy, qz = z - cz;
    // Rotation about x is undone before the axis test.
    const double ry = cos_t * qy + sin_t * qz;
    const double rz = -sin_t * qy + cos_t * qz;
    return qx * qx * inv_ax2 + ry * ry * inv_ay2 + rz * rz * inv_az2 <= 1.0;
  }
};

struct BoxTest {
  double cx = 0, cy = 0, cz = 0, hx = 0, hy = 0, hz = 0;
  bool empty = true;

  BoxTest() = default;
  explicit BoxTest(const BoxSpec& b) {
    cx = b.center_mm.x();
    cy = b.center_mm.y();
    cz = b.center_mm.z();
    hx = b.extents_mm.x() / 2.0;
    hy = b.extents_mm.y() / 2.0;
    hz = b.extents_mm.z() / 2.0;
    empty = b.extents_mm.minCoeff() <= 0.0;
  }

  bool contains(double x, double y, double z) const {
    if (empty) return false;
    return std::abs(x - cx) <= hx && std::abs(y - cy) <= hy && std::abs(z - cz) <= hz;
  }
};

struct CylinderTest {
  double cy = 0, cz = 0, r2 = 0, half_len = 0;
  bool empty = true;

  CylinderTest() = default;
  CylinderTest(const CylinderSpec& c, double neck_length_mm) {
    cy = c.center_mm.y();
    cz = c.center_mm.z();
    r2 = c.radius_mm * c.radius_mm;
    half_len = neck_length_mm / 2.0;
    empty = c.radius_mm <= 0.0;
  }

  bool contains(double x, double y, double z) const {
    if (empty) return false;
    const double qy = y - cy, qz = z - cz;
    return qy * qy + qz * qz <= r2 && std::abs(x) <= half_len;
  }
};

}  // namespace phantom_detail

namespace {

using phantom_detail::BoxTest;
using phantom_detail::CylinderTest;
using phantom_detail::EllipsoidTest;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

// Max distance of the lobe's yz silhouette from the neck axis, sampled over
// the silhouette ellipse. Rotation about x keeps the silhouette an ellipse
// with the lobe's y/z semi-axes.
double max_radial_extent(const EllipsoidSpec& e, int samples = 720) {
  const double t = deg2rad(e.rotation_deg);
  const double ct = std::cos(t), st = std::sin(t);
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double phi = 2.0 * M_PI * i / samples;
    const double ey = e.semi_axes_mm.y() * std::cos(phi);
    const double ez = e.semi_axes_mm.z() * std::sin(phi);
    const double y = e.center_mm.y() + ct * ey - st * ez;
    const double z = e.center_mm.z() + st * ey + ct * ez;
    worst = std::max(worst, std::hypot(y, z));
  }
  return worst;
}

double min_distance_to_axis_point(const EllipsoidSpec& e, double py, double pz,
                                  int samples = 1440) {
  const double t = deg2rad(e.rotation_deg);
  const double ct = std::cos(t), st = std::sin(t);
  double best = std::numeric_limits<double>::max();
  for (int i = 0; i < samples; ++i) {
    const double phi = 2.0 * M_PI * i / samples;
    const double ey = e.semi_axes_mm.y() * std::cos(phi);
    const double ez = e.semi_axes_mm.z() * std::sin(phi);
    const double y = e.center_mm.y() + ct * ey - st * ez;
    const double z = e.center_mm.z() + st * ey + ct * ez;
    best = std::min(best, std::hypot(y - py, z - pz));
  }
  return best;
}

void validate_lobe(const EllipsoidSpec& e, const PhantomSpec& s, const char* name) {
  std::ostringstream err;
  if (e.semi_axes_mm.minCoeff() <= 0.0) {
    err << name << ": semi-axes must be positive";
    throw ValidationError(err.str());
  }
  if (max_radial_extent(e) >= s.neck_radius_mm ||
      std::abs(e.center_mm.x()) + e.semi_axes_mm.x() >= s.neck_length_mm / 2.0) {
    err << name << ": lobe is not strictly inside the neck cylinder";
    throw ValidationError(err.str());
  }
  if (s.trachea.radius_mm > 0.0) {
    const double py = s.trachea.center_mm.y(), pz = s.trachea.center_mm.z();
    EllipsoidTest lobe(e);
    const bool center_in_lobe = lobe.contains(e.center_mm.x(), py, pz);
    const double cd = std::hypot(e.center_mm.y() - py, e.center_mm.z() - pz);
    if (center_in_lobe || cd <= s.trachea.radius_mm ||
        min_distance_to_axis_point(e, py, pz) <= s.trachea.radius_mm) {
      err << name << ": lobe intersects the trachea";
      throw ValidationError(err.str());
    }
  }
}

}  // namespace

struct SolidTests {
  phantom_detail::EllipsoidTest left, right;
  phantom_detail::BoxTest isthmus;
  phantom_detail::CylinderTest trachea;

  explicit SolidTests(const PhantomSpec& s)
      : left(s.lobe_left),
        right(s.lobe_right),
        isthmus(s.isthmus),
        trachea(s.trachea, s.neck_length_mm) {}

  TissueClass classify(double x, double y, double z) const {
    if (left.contains(x, y, z) || right.contains(x, y, z) || isthmus.contains(x, y, z))
      return TissueClass::thyroid;
    if (trachea.contains(x, y, z)) return TissueClass::trachea;
    return TissueClass::background;
  }
};

PhantomSpec PhantomSpec::defaults() {
  PhantomSpec s;
  s.neck_radius_mm = 120.0;
  s.neck_length_mm = 140.0;
  s.lobe_left = {Vec3(0.0, 18.0, 100.0), Vec3(28.0, 12.0, 10.0), 0.0};
  s.lobe_right = {Vec3(0.0, -18.0, 100.0), Vec3(28.0, 12.0, 10.0), 0.0};
  s.isthmus = {Vec3(0.0, 0.0, 106.0), Vec3(14.0, 20.0, 8.0)};
  s.trachea = {Vec3(0.0, 0.0, 82.0), 8.0};
  s.voxel_pitch_mm = 0.5;
  return s;
}

void PhantomSpec::validate() const {
  require(neck_radius_mm > 0.0, "neck_radius_mm must be positive");
  require(neck_length_mm > 0.0, "neck_length_mm must be positive");
  require(voxel_pitch_mm > 0.0, "voxel_pitch_mm must be positive");
  require(isthmus.extents_mm.minCoeff() >= 0.0, "isthmus extents must be non-negative");
  require(trachea.radius_mm >= 0.0, "trachea radius must be non-negative");
  validate_lobe(lobe_left, *this, "lobe_left");
  validate_lobe(lobe_right, *this, "lobe_right");
}

SurfaceField::SurfaceField(double neck_radius_mm, double neck_length_mm)
    : radius_(neck_radius_mm),
      half_length_(neck_length_mm / 2.0),
      lateral_limit_(0.95 * neck_radius_mm) {}

bool SurfaceField::contains(double x, double y) const {
  return std::abs(x) <= half_length_ && std::abs(y) <= lateral_limit_;
}

double SurfaceField::height(double x, double y) const {
  if (!contains(x, y)) {
    std::ostringstream err;
    err << "probe left the reachable surface patch at x=" << x << " y=" << y;
    throw ScanError(err.str());
  }
  return std::sqrt(radius_ * radius_ - y * y);
}

double SurfaceField::normal_roll(double y) const {
  return -std::asin(y / radius_);
}

PhantomModel::PhantomModel(const PhantomSpec& spec)
    : spec_(spec), surface_(spec.neck_radius_mm, spec.neck_length_mm) {
  spec_.validate();
  solids_ = std::make_shared<const SolidTests>(spec_);

  const double pitch = spec_.voxel_pitch_mm;
  const double hx = spec_.neck_length_mm / 2.0;
  const double r = spec_.neck_radius_mm;
  grid_.dims = {static_cast<int>(std::ceil(spec_.neck_length_mm / pitch)),
                static_cast<int>(std::ceil(2.0 * r / pitch)),
                static_cast<int>(std::ceil(2.0 * r / pitch))};
  grid_.spacing_mm = Vec3(pitch, pitch, pitch);
  grid_.origin_mm = Vec3(-hx + pitch / 2.0, -r + pitch / 2.0, -r + pitch / 2.0);
  grid_.labels.assign(static_cast<std::size_t>(grid_.dims[0]) * grid_.dims[1] * grid_.dims[2],
                      static_cast<std::uint8_t>(TissueClass::background));

  const SolidTests& s = *solids_;
  std::size_t idx = 0;
  for (int k = 0; k < grid_.dims[2]; ++k) {
    const double z = grid_.origin_mm.z() + k * pitch;
    for (int j = 0; j < grid_.dims[1]; ++j) {
      const double y = grid_.origin_mm.y() + j * pitch;
      for (int i = 0; i < grid_.dims[0]; ++i, ++idx) {
        const double x = grid_.origin_mm.x() + i * pitch;
        grid_.labels[idx] = static_cast<std::uint8_t>(s.classify(x, y, z));
      }
    }
  }
}

TissueClass PhantomModel::classify(const Vec3& p) const {
  return solids_->classify(p.x(), p.y(), p.z());
}

bool PhantomModel::in_lobe(LobeSide side, const Vec3& p) const {
  const EllipsoidTest& t = side == LobeSide::left ? solids_->left : solids_->right;
  return t.contains(p.x(), p.y(), p.z());
}

double PhantomModel::ground_truth_volume_ml() const {
  std::size_t count = 0;
  for (std::uint8_t v : grid_.labels)
    if (v == static_cast<std::uint8_t>(TissueClass::thyroid)) ++count;
  const double voxel_mm3 = grid_.spacing_mm.prod();
  return count * voxel_mm3 / 1000.0;
}

PhantomModel build_phantom(const PhantomSpec& spec) { return PhantomModel(spec); }

TissueClass classify_point(const PhantomModel& model, const Vec3& p) { return model.classify(p); }

double ground_truth_volume(const PhantomModel& model) { return model.ground_truth_volume_ml(); }

double ellipsoid_volume_mm3(const EllipsoidSpec& e) {
  if (e.semi_axes_mm.minCoeff() <= 0.0) return 0.0;
  return 4.0 / 3.0 * M_PI * e.semi_axes_mm.prod();
}

double box_volume_mm3(const BoxSpec& b) {
  if (b.extents_mm.minCoeff() <= 0.0) return 0.0;
  return b.extents_mm.prod();
}

}  // namespace tvs
