#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tvs/compounding.hpp"
#include "tvs/controller.hpp"
#include "tvs/imaging.hpp"
#include "tvs/phantom.hpp"

namespace tvs {

// Operator placement of the probe over one lobe. x defaults to the lobe
// center; lateral_offset shifts the probe across the neck; tilt rolls it
// about the scan axis away from the surface normal.
struct InitialPoseSpec {
  std::optional<double> x_mm;
  double lateral_offset_mm = 0.0;
  double tilt_deg = 0.0;
};

struct PerturbationSpec {
  int count = 30;
  double lateral_offset_range_mm = 10.0;
  double tilt_range_deg = 10.0;

  void validate() const;
};

struct Scenario {
  int schema_version = 1;
  std::uint64_t seed = 42;
  PhantomSpec phantom = PhantomSpec::defaults();
  ImagingConfig imaging;
  SegOracleConfig oracle;
  ScanConfig scan;
  // Scenarios default to the majority vote: any-hit inflates a lobe by about
  // half a voxel shell, and the inflation grows with sweep coverage, which
  // drowns the coverage losses the corrections recover.
  CompoundingConfig compounding{.vote = CompoundingConfig::Vote::majority};
  InitialPoseSpec pose_left;
  InitialPoseSpec pose_right;
  PerturbationSpec perturbation;

  void validate() const;
};

Scenario default_scenario();

// Strict parsing: unknown keys, wrong types and missing required fields
// throw ValidationError naming the offending path. Absent sections fall
// back to defaults.
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);
Scenario load_scenario(const std::string& path);

// Surface-normal probe placement over a lobe, plus the requested offsets.
// The pose is settled onto the skin.
ProbePose initial_pose_for(const PhantomModel& model, LobeSide side, const InitialPoseSpec& spec,
                           const ImagingConfig& imaging);

// Paired left/right placements with lateral offset and tilt drawn uniformly
// from the perturbation ranges. Draw order is fixed; pose i depends only on
// (seed, i).
std::vector<std::pair<ProbePose, ProbePose>> perturbed_pose_pairs(const PhantomModel& model,
                                                                  const Scenario& scenario,
                                                                  int count, std::uint64_t seed);

}  // namespace tvs
