#include "tvs/scenario.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "tvs/rng.hpp"

namespace tvs {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ValidationError(path + ": " + msg);
}

const json& expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  return j;
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        ok = true;
        break;
      }
    if (!ok) fail(path + "." + item.key(), "unknown key");
  }
}

void read_double(const json& j, const std::string& path, const char* key, double& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number()) fail(path + "." + key, "expected a number");
  out = it->get<double>();
}

void read_int(const json& j, const std::string& path, const char* key, int& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_integer()) fail(path + "." + key, "expected an integer");
  out = it->get<int>();
}

void read_u8(const json& j, const std::string& path, const char* key, std::uint8_t& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_integer() || it->get<long>() < 0 || it->get<long>() > 255)
    fail(path + "." + key, "expected an integer in [0, 255]");
  out = static_cast<std::uint8_t>(it->get<long>());
}

void read_bool(const json& j, const std::string& path, const char* key, bool& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_boolean()) fail(path + "." + key, "expected a boolean");
  out = it->get<bool>();
}

void read_u64(const json& j, const std::string& path, const char* key, std::uint64_t& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_unsigned() && !it->is_number_integer())
    fail(path + "." + key, "expected an unsigned integer");
  out = it->get<std::uint64_t>();
}

void read_vec3(const json& j, const std::string& path, const char* key, Vec3& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array() || it->size() != 3 || !(*it)[0].is_number() || !(*it)[1].is_number() ||
      !(*it)[2].is_number())
    fail(path + "." + key, "expected an array of 3 numbers");
  out = Vec3((*it)[0].get<double>(), (*it)[1].get<double>(), (*it)[2].get<double>());
}

void read_opt_double(const json& j, const std::string& path, const char* key,
                     std::optional<double>& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (it->is_null()) {
    out = std::nullopt;
    return;
  }
  if (!it->is_number()) fail(path + "." + key, "expected a number or null");
  out = it->get<double>();
}

void load_ellipsoid(const json& j, const std::string& path, EllipsoidSpec& e) {
  expect_object(j, path);
  check_keys(j, path, {"center_mm", "semi_axes_mm", "rotation_deg"});
  read_vec3(j, path, "center_mm", e.center_mm);
  read_vec3(j, path, "semi_axes_mm", e.semi_axes_mm);
  read_double(j, path, "rotation_deg", e.rotation_deg);
}

void load_phantom(const json& j, PhantomSpec& p) {
  const std::string path = "phantom";
  expect_object(j, path);
  check_keys(j, path, {"neck_radius_mm", "neck_length_mm", "voxel_pitch_mm", "lobe_left",
                       "lobe_right", "isthmus", "trachea"});
  read_double(j, path, "neck_radius_mm", p.neck_radius_mm);
  read_double(j, path, "neck_length_mm", p.neck_length_mm);
  read_double(j, path, "voxel_pitch_mm", p.voxel_pitch_mm);
  if (j.contains("lobe_left")) load_ellipsoid(j["lobe_left"], path + ".lobe_left", p.lobe_left);
  if (j.contains("lobe_right"))
    load_ellipsoid(j["lobe_right"], path + ".lobe_right", p.lobe_right);
  if (j.contains("isthmus")) {
    const std::string bp = path + ".isthmus";
    expect_object(j["isthmus"], bp);
    check_keys(j["isthmus"], bp, {"center_mm", "extents_mm"});
    read_vec3(j["isthmus"], bp, "center_mm", p.isthmus.center_mm);
    read_vec3(j["isthmus"], bp, "extents_mm", p.isthmus.extents_mm);
  }
  if (j.contains("trachea")) {
    const std::string tp = path + ".trachea";
    expect_object(j["trachea"], tp);
    check_keys(j["trachea"], tp, {"center_mm", "radius_mm"});
    read_vec3(j["trachea"], tp, "center_mm", p.trachea.center_mm);
    read_double(j["trachea"], tp, "radius_mm", p.trachea.radius_mm);
  }
}

void load_imaging(const json& j, ImagingConfig& c) {
  const std::string path = "imaging";
  expect_object(j, path);
  check_keys(j, path,
             {"image_width_px", "image_depth_px", "probe_footprint_mm", "image_depth_mm",
              "frame_rate_hz", "intensity_background", "intensity_thyroid", "intensity_trachea",
              "intensity_shadow", "speckle_std", "contact_gap_tol_mm", "indentation_mm"});
  read_int(j, path, "image_width_px", c.image_width_px);
  read_int(j, path, "image_depth_px", c.image_depth_px);
  read_double(j, path, "probe_footprint_mm", c.probe_footprint_mm);
  read_double(j, path, "image_depth_mm", c.image_depth_mm);
  read_double(j, path, "frame_rate_hz", c.frame_rate_hz);
  read_u8(j, path, "intensity_background", c.intensity_background);
  read_u8(j, path, "intensity_thyroid", c.intensity_thyroid);
  read_u8(j, path, "intensity_trachea", c.intensity_trachea);
  read_u8(j, path, "intensity_shadow", c.intensity_shadow);
  read_double(j, path, "speckle_std", c.speckle_std);
  read_double(j, path, "contact_gap_tol_mm", c.contact_gap_tol_mm);
  read_double(j, path, "indentation_mm", c.indentation_mm);
}

void load_segmentation(const json& j, SegOracleConfig& c) {
  const std::string path = "segmentation";
  expect_object(j, path);
  check_keys(j, path, {"dropout_prob", "boundary_jitter_mm", "shadow_masking"});
  read_double(j, path, "dropout_prob", c.dropout_prob);
  read_double(j, path, "boundary_jitter_mm", c.boundary_jitter_mm);
  read_bool(j, path, "shadow_masking", c.shadow_masking);
}

void load_scan(const json& j, ScanConfig& c) {
  const std::string path = "scan";
  expect_object(j, path);
  check_keys(j, path,
             {"step_size_mm", "alpha_step_deg", "alpha_max_deg", "y_max_mm",
              "shadow_margin_frac", "shadow_segments", "shadow_pixel_frac", "p_brightness",
              "border_frac", "target_edge_frac", "presence_window_s", "max_total_steps",
              "shadow_correction", "centering_correction"});
  read_double(j, path, "step_size_mm", c.step_size_mm);
  read_double(j, path, "alpha_step_deg", c.alpha_step_deg);
  read_double(j, path, "alpha_max_deg", c.alpha_max_deg);
  read_double(j, path, "y_max_mm", c.y_max_mm);
  read_double(j, path, "shadow_margin_frac", c.shadow_margin_frac);
  read_int(j, path, "shadow_segments", c.shadow_segments);
  read_double(j, path, "shadow_pixel_frac", c.shadow_pixel_frac);
  read_int(j, path, "p_brightness", c.p_brightness);
  read_double(j, path, "border_frac", c.border_frac);
  read_double(j, path, "target_edge_frac", c.target_edge_frac);
  read_double(j, path, "presence_window_s", c.presence_window_s);
  read_int(j, path, "max_total_steps", c.max_total_steps);
  read_bool(j, path, "shadow_correction", c.shadow_correction);
  read_bool(j, path, "centering_correction", c.centering_correction);
}

void load_compounding(const json& j, CompoundingConfig& c) {
  const std::string path = "compounding";
  expect_object(j, path);
  check_keys(j, path, {"voxel_pitch_mm", "vote", "padding_mm"});
  read_double(j, path, "voxel_pitch_mm", c.voxel_pitch_mm);
  read_double(j, path, "padding_mm", c.padding_mm);
  if (j.contains("vote")) {
    if (!j["vote"].is_string()) fail(path + ".vote", "expected a string");
    const std::string v = j["vote"].get<std::string>();
    if (v == "any_hit")
      c.vote = CompoundingConfig::Vote::any_hit;
    else if (v == "majority")
      c.vote = CompoundingConfig::Vote::majority;
    else
      fail(path + ".vote", "must be \"any_hit\" or \"majority\"");
  }
}

void load_pose(const json& j, const std::string& path, InitialPoseSpec& p) {
  expect_object(j, path);
  check_keys(j, path, {"x_mm", "lateral_offset_mm", "tilt_deg"});
  read_opt_double(j, path, "x_mm", p.x_mm);
  read_double(j, path, "lateral_offset_mm", p.lateral_offset_mm);
  read_double(j, path, "tilt_deg", p.tilt_deg);
}

void load_perturbation(const json& j, PerturbationSpec& p) {
  const std::string path = "perturbation";
  expect_object(j, path);
  check_keys(j, path, {"count", "lateral_offset_range_mm", "tilt_range_deg"});
  read_int(j, path, "count", p.count);
  read_double(j, path, "lateral_offset_range_mm", p.lateral_offset_range_mm);
  read_double(j, path, "tilt_range_deg", p.tilt_range_deg);
}

json dump_vec3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json dump_ellipsoid(const EllipsoidSpec& e) {
  return {{"center_mm", dump_vec3(e.center_mm)},
          {"semi_axes_mm", dump_vec3(e.semi_axes_mm)},
          {"rotation_deg", e.rotation_deg}};
}

json dump_pose(const InitialPoseSpec& p) {
  json j = {{"lateral_offset_mm", p.lateral_offset_mm}, {"tilt_deg", p.tilt_deg}};
  j["x_mm"] = p.x_mm ? json(*p.x_mm) : json(nullptr);
  return j;
}

}  // namespace

void PerturbationSpec::validate() const {
  if (count < 1) throw ValidationError("perturbation.count must be at least 1");
  if (lateral_offset_range_mm < 0.0 || tilt_range_deg < 0.0)
    throw ValidationError("perturbation ranges must be non-negative");
}

void Scenario::validate() const {
  if (schema_version != 1) throw ValidationError("schema_version must be 1");
  phantom.validate();
  imaging.validate();
  oracle.validate();
  scan.validate();
  compounding.validate();
  perturbation.validate();
}

Scenario default_scenario() { return Scenario{}; }

Scenario scenario_from_json(const json& j) {
  expect_object(j, "scenario");
  check_keys(j, "scenario",
             {"schema_version", "seed", "phantom", "imaging", "segmentation", "scan",
              "compounding", "initial_poses", "perturbation"});
  if (!j.contains("schema_version")) fail("scenario.schema_version", "missing required field");

  Scenario s;
  read_int(j, "scenario", "schema_version", s.schema_version);
  if (s.schema_version != 1) fail("scenario.schema_version", "unsupported version");
  read_u64(j, "scenario", "seed", s.seed);
  if (j.contains("phantom")) load_phantom(j["phantom"], s.phantom);
  if (j.contains("imaging")) load_imaging(j["imaging"], s.imaging);
  if (j.contains("segmentation")) load_segmentation(j["segmentation"], s.oracle);
  if (j.contains("scan")) load_scan(j["scan"], s.scan);
  if (j.contains("compounding")) load_compounding(j["compounding"], s.compounding);
  if (j.contains("initial_poses")) {
    const json& p = expect_object(j["initial_poses"], "initial_poses");
    check_keys(p, "initial_poses", {"left", "right"});
    if (p.contains("left")) load_pose(p["left"], "initial_poses.left", s.pose_left);
    if (p.contains("right")) load_pose(p["right"], "initial_poses.right", s.pose_right);
  }
  if (j.contains("perturbation")) load_perturbation(j["perturbation"], s.perturbation);
  s.validate();
  return s;
}

json scenario_to_json(const Scenario& s) {
  json j;
  j["schema_version"] = s.schema_version;
  j["seed"] = s.seed;
  j["phantom"] = {{"neck_radius_mm", s.phantom.neck_radius_mm},
                  {"neck_length_mm", s.phantom.neck_length_mm},
                  {"voxel_pitch_mm", s.phantom.voxel_pitch_mm},
                  {"lobe_left", dump_ellipsoid(s.phantom.lobe_left)},
                  {"lobe_right", dump_ellipsoid(s.phantom.lobe_right)},
                  {"isthmus",
                   {{"center_mm", dump_vec3(s.phantom.isthmus.center_mm)},
                    {"extents_mm", dump_vec3(s.phantom.isthmus.extents_mm)}}},
                  {"trachea",
                   {{"center_mm", dump_vec3(s.phantom.trachea.center_mm)},
                    {"radius_mm", s.phantom.trachea.radius_mm}}}};
  j["imaging"] = {{"image_width_px", s.imaging.image_width_px},
                  {"image_depth_px", s.imaging.image_depth_px},
                  {"probe_footprint_mm", s.imaging.probe_footprint_mm},
                  {"image_depth_mm", s.imaging.image_depth_mm},
                  {"frame_rate_hz", s.imaging.frame_rate_hz},
                  {"intensity_background", s.imaging.intensity_background},
                  {"intensity_thyroid", s.imaging.intensity_thyroid},
                  {"intensity_trachea", s.imaging.intensity_trachea},
                  {"intensity_shadow", s.imaging.intensity_shadow},
                  {"speckle_std", s.imaging.speckle_std},
                  {"contact_gap_tol_mm", s.imaging.contact_gap_tol_mm},
                  {"indentation_mm", s.imaging.indentation_mm}};
  j["segmentation"] = {{"dropout_prob", s.oracle.dropout_prob},
                       {"boundary_jitter_mm", s.oracle.boundary_jitter_mm},
                       {"shadow_masking", s.oracle.shadow_masking}};
  j["scan"] = {{"step_size_mm", s.scan.step_size_mm},
               {"alpha_step_deg", s.scan.alpha_step_deg},
               {"alpha_max_deg", s.scan.alpha_max_deg},
               {"y_max_mm", s.scan.y_max_mm},
               {"shadow_margin_frac", s.scan.shadow_margin_frac},
               {"shadow_segments", s.scan.shadow_segments},
               {"shadow_pixel_frac", s.scan.shadow_pixel_frac},
               {"p_brightness", s.scan.p_brightness},
               {"border_frac", s.scan.border_frac},
               {"target_edge_frac", s.scan.target_edge_frac},
               {"presence_window_s", s.scan.presence_window_s},
               {"max_total_steps", s.scan.max_total_steps},
               {"shadow_correction", s.scan.shadow_correction},
               {"centering_correction", s.scan.centering_correction}};
  j["compounding"] = {
      {"voxel_pitch_mm", s.compounding.voxel_pitch_mm},
      {"vote", s.compounding.vote == CompoundingConfig::Vote::any_hit ? "any_hit" : "majority"},
      {"padding_mm", s.compounding.padding_mm}};
  j["initial_poses"] = {{"left", dump_pose(s.pose_left)}, {"right", dump_pose(s.pose_right)}};
  j["perturbation"] = {{"count", s.perturbation.count},
                       {"lateral_offset_range_mm", s.perturbation.lateral_offset_range_mm},
                       {"tilt_range_deg", s.perturbation.tilt_range_deg}};
  return j;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("scenario file is not valid JSON: ") + e.what());
  }
  return scenario_from_json(j);
}

ProbePose initial_pose_for(const PhantomModel& model, LobeSide side, const InitialPoseSpec& spec,
                           const ImagingConfig& imaging) {
  const EllipsoidSpec& lobe =
      side == LobeSide::left ? model.spec().lobe_left : model.spec().lobe_right;
  const double x = spec.x_mm.value_or(lobe.center_mm.x());
  const double y = lobe.center_mm.y() + spec.lateral_offset_mm;
  const double roll = model.surface().normal_roll(y) + deg2rad(spec.tilt_deg);

  ProbePose p;
  p.rotation = Quat(rot_x(M_PI + roll)).normalized();
  p.translation = Vec3(x, y, 0.0);
  return settle_z(p, model.surface(), imaging);
}

std::vector<std::pair<ProbePose, ProbePose>> perturbed_pose_pairs(const PhantomModel& model,
                                                                  const Scenario& scenario,
                                                                  int count, std::uint64_t seed) {
  if (count < 1) throw ValidationError("perturbed pose count must be at least 1");
  const double lat = scenario.perturbation.lateral_offset_range_mm;
  const double tilt = scenario.perturbation.tilt_range_deg;

  std::vector<std::pair<ProbePose, ProbePose>> pairs;
  pairs.reserve(count);
  for (int r = 0; r < count; ++r) {
    std::mt19937_64 rng(derive_seed(seed, seed_tag::perturb, static_cast<std::uint64_t>(r)));
    std::uniform_real_distribution<double> dlat(-lat, lat), dtilt(-tilt, tilt);
    // Fixed draw order: left lateral, left tilt, right lateral, right tilt.
    InitialPoseSpec left, right;
    left.lateral_offset_mm = dlat(rng);
    left.tilt_deg = dtilt(rng);
    right.lateral_offset_mm = dlat(rng);
    right.tilt_deg = dtilt(rng);
    pairs.emplace_back(initial_pose_for(model, LobeSide::left, left, scenario.imaging),
                       initial_pose_for(model, LobeSide::right, right, scenario.imaging));
  }
  return pairs;
}

}  // namespace tvs
