#include "tvs/compounding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace tvs {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

void require_unit(const Quat& q, const char* which) {
  if (std::abs(q.norm() - 1.0) > 1e-9) {
    std::ostringstream err;
    err << which << " quaternion is not unit length";
    throw ValidationError(err.str());
  }
}

Vec3 lerp(const Vec3& a, const Vec3& b, double t) {
  // (1-t)a + tb reproduces the endpoints exactly.
  return (1.0 - t) * a + t * b;
}

}  // namespace

bool LabelVolume::contains_point(const Vec3& p) const {
  int idx[3];
  for (int a = 0; a < 3; ++a) {
    const double v = std::floor((p[a] - (origin_mm[a] - spacing_mm[a] / 2.0)) / spacing_mm[a]);
    if (v < 0.0 || v >= dims[a]) return false;
    idx[a] = static_cast<int>(v);
  }
  return occ[index(idx[0], idx[1], idx[2])] != 0;
}

void CompoundingConfig::validate() const {
  require(voxel_pitch_mm > 0.0, "voxel_pitch_mm must be positive");
  require(padding_mm >= 0.0, "padding_mm must be non-negative");
}

Quat slerp(const Quat& q0, const Quat& q1, double t) {
  require_unit(q0, "slerp input");
  require_unit(q1, "slerp input");
  if (t <= 0.0) return q0;

  double d = q0.coeffs().dot(q1.coeffs());
  Eigen::Vector4d b = q1.coeffs();
  if (d < 0.0) {  // take the shorter arc
    b = -b;
    d = -d;
  }
  if (t >= 1.0) return Quat(b);

  if (d > 1.0 - 1e-9) {
    // Nearly identical rotations: blend linearly to dodge sin(theta) ~ 0.
    Quat out((1.0 - t) * q0.coeffs() + t * b);
    out.normalize();
    return out;
  }
  const double theta = std::acos(std::clamp(d, -1.0, 1.0));
  const double s = std::sin(theta);
  const double w0 = std::sin((1.0 - t) * theta) / s;
  const double w1 = std::sin(t * theta) / s;
  Quat out(w0 * q0.coeffs() + w1 * b);
  out.normalize();
  return out;
}

ProbePose interpolate_pose(const std::vector<ProbePose>& samples, double t) {
  require(!samples.empty(), "pose track is empty");
  if (t < samples.front().timestamp || t > samples.back().timestamp) {
    std::ostringstream err;
    err << "time " << t << " outside pose track range [" << samples.front().timestamp << ", "
        << samples.back().timestamp << "]";
    throw ValidationError(err.str());
  }

  auto it = std::upper_bound(samples.begin(), samples.end(), t,
                             [](double v, const ProbePose& p) { return v < p.timestamp; });
  // Latest sample at or before t; returned verbatim on exact hits.
  const ProbePose& lo = *(it - 1);
  if (lo.timestamp == t) return lo;

  const ProbePose& hi = *it;
  const double dt = hi.timestamp - lo.timestamp;
  const double u = (t - lo.timestamp) / dt;
  ProbePose out;
  out.translation = lerp(lo.translation, hi.translation, u);
  out.rotation = slerp(lo.rotation, hi.rotation, u);
  out.timestamp = t;
  return out;
}

CompoundResult compound(const SweepRecording& sweep, const CompoundingConfig& cfg) {
  cfg.validate();
  require(!sweep.frames.empty(), "sweep has no frames");
  require(!sweep.poses.empty(), "sweep has no pose track");
  for (std::size_t i = 1; i < sweep.poses.size(); ++i)
    require(sweep.poses[i].timestamp >= sweep.poses[i - 1].timestamp,
            "pose track timestamps must be non-decreasing");
  for (std::size_t i = 1; i < sweep.frames.size(); ++i)
    require(sweep.frames[i].timestamp > sweep.frames[i - 1].timestamp,
            "frame timestamps must be strictly increasing");

  // Pose per frame from the recorded track, plus sweep bounds from the
  // frame corner pixels.
  std::vector<ProbePose> frame_poses;
  frame_poses.reserve(sweep.frames.size());
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
  Vec3 hi = Vec3::Constant(std::numeric_limits<double>::lowest());
  for (std::size_t fi = 0; fi < sweep.frames.size(); ++fi) {
    const Frame& f = sweep.frames[fi];
    ProbePose p;
    try {
      p = interpolate_pose(sweep.poses, f.timestamp);
    } catch (const ValidationError& e) {
      std::ostringstream err;
      err << "frame " << fi << ": " << e.what();
      throw ValidationError(err.str());
    }
    frame_poses.push_back(p);

    const Mat3 axes = probe_frame_axes(p);
    const Vec3 yhat = axes.col(1), zhat = axes.col(2);
    const double u0 = 0.5 * f.lateral_spacing_mm - f.label.width * f.lateral_spacing_mm / 2.0;
    const double u1 = (f.label.width - 0.5) * f.lateral_spacing_mm -
                      f.label.width * f.lateral_spacing_mm / 2.0;
    const double v0 = 0.5 * f.axial_spacing_mm;
    const double v1 = (f.label.height - 0.5) * f.axial_spacing_mm;
    for (double u : {u0, u1}) {
      for (double v : {v0, v1}) {
        const Vec3 c = p.translation + u * yhat + v * zhat;
        lo = lo.cwiseMin(c);
        hi = hi.cwiseMax(c);
      }
    }
  }

  const double pitch = cfg.voxel_pitch_mm;
  const Vec3 corner = lo - Vec3::Constant(cfg.padding_mm);
  const Vec3 span = hi - lo + Vec3::Constant(2.0 * cfg.padding_mm);
  std::array<int, 3> dims;
  for (int a = 0; a < 3; ++a) dims[a] = std::max(1, static_cast<int>(std::ceil(span[a] / pitch)) + 1);

  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  std::vector<std::uint32_t> isum(n, 0);
  std::vector<std::uint16_t> icount(n, 0);
  std::vector<std::uint16_t> votes_total;
  std::vector<std::uint16_t> votes_thyroid;
  const bool majority = cfg.vote == CompoundingConfig::Vote::majority;
  if (majority) {
    votes_total.assign(n, 0);
    votes_thyroid.assign(n, 0);
  }
  std::vector<std::uint8_t> occ(n, 0);

  auto flat = [&](int i, int j, int k) {
    return static_cast<std::size_t>((k * dims[1] + j) * dims[0] + i);
  };

  for (std::size_t fi = 0; fi < sweep.frames.size(); ++fi) {
    const Frame& f = sweep.frames[fi];
    const Mat3 axes = probe_frame_axes(frame_poses[fi]);
    const Vec3 yhat = axes.col(1), zhat = axes.col(2);
    const Vec3 t = frame_poses[fi].translation;
    for (int i = 0; i < f.label.width; ++i) {
      const double u = (i + 0.5) * f.lateral_spacing_mm -
                       f.label.width * f.lateral_spacing_mm / 2.0;
      const Vec3 col_base = t + u * yhat;
      for (int j = 0; j < f.label.height; ++j) {
        const Vec3 p = col_base + (j + 0.5) * f.axial_spacing_mm * zhat;
        const int vi = static_cast<int>(std::floor((p.x() - corner.x()) / pitch));
        const int vj = static_cast<int>(std::floor((p.y() - corner.y()) / pitch));
        const int vk = static_cast<int>(std::floor((p.z() - corner.z()) / pitch));
        if (vi < 0 || vj < 0 || vk < 0 || vi >= dims[0] || vj >= dims[1] || vk >= dims[2])
          continue;  // only reachable through padding round-off
        const std::size_t vox = flat(vi, vj, vk);
        isum[vox] += f.intensity.at(i, j);
        ++icount[vox];
        const bool thy = f.label.at(i, j) != 0;
        if (majority) {
          ++votes_total[vox];
          if (thy) ++votes_thyroid[vox];
        } else if (thy) {
          occ[vox] = 1;
        }
      }
    }
  }

  CompoundResult out;
  out.label.dims = dims;
  out.label.spacing_mm = Vec3(pitch, pitch, pitch);
  out.label.origin_mm = corner + Vec3::Constant(pitch / 2.0);
  if (majority) {
    occ.assign(n, 0);
    for (std::size_t v = 0; v < n; ++v)
      if (2 * votes_thyroid[v] > votes_total[v]) occ[v] = 1;
  }
  out.label.occ = std::move(occ);

  out.intensity.dims = dims;
  out.intensity.spacing_mm = out.label.spacing_mm;
  out.intensity.origin_mm = out.label.origin_mm;
  out.intensity.values.assign(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    if (icount[v] > 0)
      out.intensity.values[v] =
          static_cast<std::uint8_t>((isum[v] + icount[v] / 2) / icount[v]);
  }
  return out;
}

LabelVolume merge_lobes(const LabelVolume& a, const LabelVolume& b) {
  require(a.dims[0] > 0 && b.dims[0] > 0, "merge inputs must be non-empty");
  const double pitch = std::min(a.spacing_mm.minCoeff(), b.spacing_mm.minCoeff());

  Vec3 lo, hi;
  for (int ax = 0; ax < 3; ++ax) {
    const double alo = a.origin_mm[ax] - a.spacing_mm[ax] / 2.0;
    const double ahi = a.origin_mm[ax] + (a.dims[ax] - 0.5) * a.spacing_mm[ax];
    const double blo = b.origin_mm[ax] - b.spacing_mm[ax] / 2.0;
    const double bhi = b.origin_mm[ax] + (b.dims[ax] - 0.5) * b.spacing_mm[ax];
    lo[ax] = std::min(alo, blo);
    hi[ax] = std::max(ahi, bhi);
  }

  LabelVolume out;
  out.spacing_mm = Vec3(pitch, pitch, pitch);
  for (int ax = 0; ax < 3; ++ax)
    out.dims[ax] = std::max(1, static_cast<int>(std::ceil((hi[ax] - lo[ax]) / pitch)));
  out.origin_mm = lo + Vec3::Constant(pitch / 2.0);
  out.occ.assign(static_cast<std::size_t>(out.dims[0]) * out.dims[1] * out.dims[2], 0);

  std::size_t idx = 0;
  for (int k = 0; k < out.dims[2]; ++k) {
    for (int j = 0; j < out.dims[1]; ++j) {
      for (int i = 0; i < out.dims[0]; ++i, ++idx) {
        const Vec3 c = out.center_of(i, j, k);
        if (a.contains_point(c) || b.contains_point(c)) out.occ[idx] = 1;
      }
    }
  }
  return out;
}

double volume_of(const LabelVolume& vol) {
  std::size_t count = 0;
  for (std::uint8_t v : vol.occ)
    if (v) ++count;
  return count * vol.spacing_mm.prod() / 1000.0;
}

}  // namespace tvs
