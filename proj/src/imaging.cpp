#include "tvs/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "tvs/rng.hpp"

namespace tvs {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

// Box dilation/erosion of a binary image, separable, radius (kx, ky).
void morph_box(Image8& img, int kx, int ky, bool dilate) {
  const int w = img.width, h = img.height;
  const std::uint8_t hit = dilate ? 1 : 0;
  if (kx > 0) {
    Image8 src = img;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        std::uint8_t v = static_cast<std::uint8_t>(1 - hit);
        const int c0 = std::max(0, c - kx), c1 = std::min(w - 1, c + kx);
        for (int cc = c0; cc <= c1; ++cc) {
          if (src.at(cc, r) == hit) {
            v = hit;
            break;
          }
        }
        img.at(c, r) = v;
      }
    }
  }
  if (ky > 0) {
    Image8 src = img;
    for (int c = 0; c < w; ++c) {
      for (int r = 0; r < h; ++r) {
        std::uint8_t v = static_cast<std::uint8_t>(1 - hit);
        const int r0 = std::max(0, r - ky), r1 = std::min(h - 1, r + ky);
        for (int rr = r0; rr <= r1; ++rr) {
          if (src.at(c, rr) == hit) {
            v = hit;
            break;
          }
        }
        img.at(c, r) = v;
      }
    }
  }
}

}  // namespace

void ImagingConfig::validate() const {
  require(image_width_px > 0 && image_depth_px > 0, "image dimensions must be positive");
  require(probe_footprint_mm > 0.0, "probe_footprint_mm must be positive");
  require(image_depth_mm > 0.0, "image_depth_mm must be positive");
  require(frame_rate_hz > 0.0, "frame_rate_hz must be positive");
  require(speckle_std >= 0.0, "speckle_std must be non-negative");
  require(contact_gap_tol_mm >= 0.0, "contact_gap_tol_mm must be non-negative");
  require(indentation_mm >= 0.0, "indentation_mm must be non-negative");
}

void SegOracleConfig::validate() const {
  require(dropout_prob >= 0.0 && dropout_prob <= 1.0, "dropout_prob must be in [0,1]");
  require(boundary_jitter_mm >= 0.0, "boundary_jitter_mm must be non-negative");
}

bool Frame::has_thyroid() const {
  return std::any_of(label.data.begin(), label.data.end(), [](std::uint8_t v) { return v != 0; });
}

Mat3 probe_frame_axes(const ProbePose& pose) {
  if (std::abs(pose.rotation.norm() - 1.0) > 1e-9)
    throw ValidationError("probe pose rotation is not a unit quaternion");
  return pose.rotation.toRotationMatrix();
}

std::vector<std::uint8_t> contact_mask(const ProbePose& pose, const SurfaceField& surface,
                                       const ImagingConfig& cfg) {
  const Mat3 axes = probe_frame_axes(pose);
  const Vec3 yhat = axes.col(1), zhat = axes.col(2);
  if (zhat.z() >= 0.0)
    throw ValidationError("probe depth axis does not point into the surface");

  std::vector<std::uint8_t> mask(static_cast<std::size_t>(cfg.image_width_px), 0);
  const double colw = cfg.lateral_spacing_mm();
  for (int i = 0; i < cfg.image_width_px; ++i) {
    const double u = (i + 0.5) * colw - cfg.probe_footprint_mm / 2.0;
    const Vec3 p = pose.translation + u * yhat;
    if (!surface.contains(p.x(), p.y())) continue;  // no skin under this column
    const double gap = p.z() - surface.height(p.x(), p.y());
    mask[i] = gap <= cfg.contact_gap_tol_mm ? 1 : 0;
  }
  return mask;
}

ProbePose settle_z(const ProbePose& pose, const SurfaceField& surface, const ImagingConfig& cfg) {
  ProbePose out = pose;
  out.translation.z() = surface.height(pose.translation.x(), pose.translation.y()) -
                        cfg.indentation_mm;
  return out;
}

Frame render_frame(const ProbePose& pose, const PhantomModel& model, const ImagingConfig& cfg,
                   const SegOracleConfig& oracle, std::uint64_t frame_index) {
  const Mat3 axes = probe_frame_axes(pose);
  const Vec3 yhat = axes.col(1), zhat = axes.col(2);
  const std::vector<std::uint8_t> contact = contact_mask(pose, model.surface(), cfg);

  const int w = cfg.image_width_px, h = cfg.image_depth_px;
  Frame f;
  f.pose = pose;
  f.timestamp = pose.timestamp;
  f.lateral_spacing_mm = cfg.lateral_spacing_mm();
  f.axial_spacing_mm = cfg.axial_spacing_mm();
  f.intensity = Image8(w, h);
  f.label = Image8(w, h, 0);

  std::mt19937_64 rng(derive_seed(oracle.rng_seed, seed_tag::frame, frame_index));
  std::normal_distribution<double> speckle(0.0, cfg.speckle_std);

  for (int i = 0; i < w; ++i) {
    const double u = (i + 0.5) * f.lateral_spacing_mm - cfg.probe_footprint_mm / 2.0;
    const Vec3 col_base = pose.translation + u * yhat;
    const bool coupled = contact[static_cast<std::size_t>(i)] != 0;
    for (int j = 0; j < h; ++j) {
      const double v = (j + 0.5) * f.axial_spacing_mm;
      const Vec3 p = col_base + v * zhat;
      const TissueClass cls = model.classify(p);

      if (cls == TissueClass::thyroid && (coupled || !oracle.shadow_masking))
        f.label.at(i, j) = 1;

      if (!coupled) {
        f.intensity.at(i, j) = cfg.intensity_shadow;
        continue;
      }
      double base = cfg.intensity_background;
      if (cls == TissueClass::thyroid)
        base = cfg.intensity_thyroid;
      else if (cls == TissueClass::trachea)
        base = cfg.intensity_trachea;
      if (cfg.speckle_std > 0.0) base += speckle(rng);
      f.intensity.at(i, j) =
          static_cast<std::uint8_t>(std::clamp(std::lround(base), 0L, 255L));
    }
  }

  if (oracle.boundary_jitter_mm > 0.0) {
    const int kx = static_cast<int>(std::lround(oracle.boundary_jitter_mm / f.lateral_spacing_mm));
    const int ky = static_cast<int>(std::lround(oracle.boundary_jitter_mm / f.axial_spacing_mm));
    if (kx > 0 || ky > 0) {
      const bool dilate = std::bernoulli_distribution(0.5)(rng);
      morph_box(f.label, kx, ky, dilate);
    }
  }
  if (oracle.dropout_prob > 0.0 &&
      std::uniform_real_distribution<double>(0.0, 1.0)(rng) < oracle.dropout_prob) {
    std::fill(f.label.data.begin(), f.label.data.end(), std::uint8_t{0});
  }
  return f;
}

bool plane_contains_thyroid(const ProbePose& pose, const PhantomModel& model,
                            const ImagingConfig& cfg) {
  const Mat3 axes = probe_frame_axes(pose);
  const Vec3 yhat = axes.col(1), zhat = axes.col(2);
  const double lat = cfg.lateral_spacing_mm(), ax = cfg.axial_spacing_mm();
  for (int i = 0; i < cfg.image_width_px; ++i) {
    const double u = (i + 0.5) * lat - cfg.probe_footprint_mm / 2.0;
    const Vec3 col_base = pose.translation + u * yhat;
    for (int j = 0; j < cfg.image_depth_px; ++j) {
      const Vec3 p = col_base + (j + 0.5) * ax * zhat;
      if (model.classify(p) == TissueClass::thyroid) return true;
    }
  }
  return false;
}

}  // namespace tvs
