#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tvs/compounding.hpp"
#include "tvs/controller.hpp"
#include "tvs/phantom.hpp"

namespace tvs {

// Ellipsoid axis lengths as a sonographer would caliper them, in cm.
struct AxisMeasurements {
  double m1_cm = 0.0;
  double m2_cm = 0.0;
  double m3_cm = 0.0;

  void validate() const;
};

struct DoseParams {
  double mass_g = 0.0;
  double dose_gy = 0.0;
  double uptake_24h = 0.0;  // fraction of administered activity
  double t_eff_h = 0.0;

  void validate() const;
};

// V = c * m1 * m2 * m3, the clinical ellipsoid approximation.
double ellipsoid_volume_ml(const AxisMeasurements& m, double factor = 0.48);

// Caliper oracle: longest chord of the lobe ellipsoid along each global
// axis, found by dense sampling. The isthmus is not part of a lobe.
AxisMeasurements axis_measurement_oracle(const PhantomModel& model, LobeSide side);

// Marinelli planning activity: 25 * mass * dose / (uptake * t_eff).
double marinelli_activity(const DoseParams& p);

struct VolumetryArtifacts {
  double robotic_ml = 0.0;
  LabelVolume left;
  LabelVolume right;
  LabelVolume merged;
  std::vector<ScanEvent> events_left;
  std::vector<ScanEvent> events_right;
};

// Full pipeline: scan both lobes, compound each sweep, merge, measure.
VolumetryArtifacts run_robotic_volumetry(const PhantomModel& model, const ProbePose& init_left,
                                         const ProbePose& init_right, const ImagingConfig& imaging,
                                         const SegOracleConfig& oracle, const ScanConfig& scan,
                                         const CompoundingConfig& compounding, std::uint64_t seed);

struct AblationRun {
  int run = 0;
  std::uint64_t seed = 0;
  double volume_ml = 0.0;
  double rel_err = 0.0;
  bool failed = false;
  std::string error;
};

struct AblationConfigResult {
  std::string name;
  bool shadow = false;
  bool centering = false;
  std::vector<AblationRun> runs;
  double mean_ml = 0.0;
  double std_ml = 0.0;  // population std over paired-complete runs
  double mean_abs_err_pct = 0.0;
  int n_used = 0;
};

struct AblationResult {
  std::array<AblationConfigResult, 4> configs;  // none, shadow, centering, both
  double ground_truth_ml = 0.0;
  int n_runs = 0;
  int n_excluded = 0;  // runs dropped from stats in all configs
};

// Runs the four correction configurations over the same initial poses and
// seeds. Runs that fail under any configuration are excluded from the
// statistics of every configuration so the comparison stays paired.
AblationResult run_ablation(const PhantomModel& model,
                            const std::vector<std::pair<ProbePose, ProbePose>>& initial_poses,
                            const ImagingConfig& imaging, const SegOracleConfig& oracle,
                            const ScanConfig& scan, const CompoundingConfig& compounding,
                            std::uint64_t seed, int jobs = 1);

std::string ablation_runs_csv(const AblationResult& r);
std::string ablation_summary_csv(const AblationResult& r);

struct TrendCheck {
  bool std_both_is_min = false;
  bool err_both_le_none = false;
  bool err_shadow_le_none = false;
  std::string report;

  bool all_hold() const { return std_both_is_min && err_both_le_none && err_shadow_le_none; }
};

TrendCheck check_trends(const AblationResult& r);

// Conventional workflow stand-in: caliper both lobes, apply the ellipsoid
// formula, sum.
double run_conventional_baseline(const PhantomModel& model, double factor = 0.48);

}  // namespace tvs
