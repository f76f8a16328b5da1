#pragma once

#include <cstdint>
#include <vector>

#include "tvs/geometry.hpp"
#include "tvs/phantom.hpp"

namespace tvs {

struct Image8 {
  int width = 0;   // lateral, columns
  int height = 0;  // depth, rows
  std::vector<std::uint8_t> data;

  Image8() = default;
  Image8(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int col, int row) { return data[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t at(int col, int row) const { return data[static_cast<std::size_t>(row) * width + col]; }
};

struct ImagingConfig {
  int image_width_px = 128;
  int image_depth_px = 128;
  double probe_footprint_mm = 40.0;  // lateral extent of the image
  double image_depth_mm = 50.0;
  double frame_rate_hz = 30.0;

  std::uint8_t intensity_background = 120;
  std::uint8_t intensity_thyroid = 80;
  std::uint8_t intensity_trachea = 30;
  std::uint8_t intensity_shadow = 5;
  double speckle_std = 10.0;

  // Contact model: an image column is coupled iff the gap between the probe
  // face and the skin surface under it is at most this tolerance.
  double contact_gap_tol_mm = 1.0;
  // settle_z presses the probe this far below the surface.
  double indentation_mm = 2.0;

  void validate() const;
  double lateral_spacing_mm() const { return probe_footprint_mm / image_width_px; }
  double axial_spacing_mm() const { return image_depth_mm / image_depth_px; }
};

// Degradations applied to the label channel, in this order: shadow masking,
// boundary jitter, whole-frame dropout.
struct SegOracleConfig {
  double dropout_prob = 0.0;
  double boundary_jitter_mm = 0.0;
  bool shadow_masking = true;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct Frame {
  Image8 intensity;
  Image8 label;  // 1 = thyroid, 0 = everything else
  ProbePose pose;
  double timestamp = 0.0;
  double lateral_spacing_mm = 0.0;
  double axial_spacing_mm = 0.0;

  bool has_thyroid() const;
};

// Columns of the rotation matrix: x out-of-plane (scan direction), y lateral
// in-plane, z depth into tissue.
Mat3 probe_frame_axes(const ProbePose& pose);

// Per-column contact flags. Requires the probe depth axis to point into the
// surface (z component negative).
std::vector<std::uint8_t> contact_mask(const ProbePose& pose, const SurfaceField& surface,
                                       const ImagingConfig& cfg);

// Drops the probe onto the surface: z = f(x,y) - indentation. x, y and the
// rotation are untouched, so the operation is idempotent.
ProbePose settle_z(const ProbePose& pose, const SurfaceField& surface, const ImagingConfig& cfg);

// Renders one B-mode-like frame plus its segmentation label image at the
// given pose. Deterministic for fixed (pose, model, cfg, oracle, frame_index):
// the per-frame RNG stream is derive_seed(oracle.rng_seed, frame, frame_index).
Frame render_frame(const ProbePose& pose, const PhantomModel& model, const ImagingConfig& cfg,
                   const SegOracleConfig& oracle, std::uint64_t frame_index);

// True iff the undegraded image plane at this pose intersects thyroid tissue
// within the imaging window. Ignores contact and oracle degradations.
bool plane_contains_thyroid(const ProbePose& pose, const PhantomModel& model,
                            const ImagingConfig& cfg);

}  // namespace tvs
