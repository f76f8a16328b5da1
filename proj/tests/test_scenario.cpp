#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "tvs/scenario.hpp"

using namespace tvs;
using nlohmann::json;
using fixtures::contains;
using fixtures::default_model;
using fixtures::thrown_message;

namespace {

std::optional<std::string> parse_error(const json& j) {
  return thrown_message<ValidationError>([&] { scenario_from_json(j); });
}

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
  const auto dir = std::filesystem::temp_directory_path() / "tvs_scenario_tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream out(path);
  out << body;
  return path;
}

}  // namespace

TEST_CASE("scenario round-trips through json") {
  Scenario s = default_scenario();
  s.seed = 1234567890123456789ULL;
  s.phantom.lobe_left.rotation_deg = 12.5;
  s.phantom.trachea.radius_mm = 7.0;
  s.imaging.speckle_std = 3.25;
  s.imaging.intensity_thyroid = 90;
  s.oracle.dropout_prob = 0.05;
  s.oracle.shadow_masking = false;
  s.scan.step_size_mm = 4.0;
  s.scan.centering_correction = false;
  s.scan.max_total_steps = 123;
  s.compounding.vote = CompoundingConfig::Vote::majority;
  s.pose_left.x_mm = 5.0;
  s.pose_right.lateral_offset_mm = -3.0;
  s.pose_right.tilt_deg = 2.5;
  s.perturbation.count = 9;

  const json j = scenario_to_json(s);
  const Scenario r = scenario_from_json(j);

  CHECK(r.seed == s.seed);
  CHECK(r.phantom.lobe_left.rotation_deg == 12.5);
  CHECK(r.phantom.trachea.radius_mm == 7.0);
  CHECK(r.phantom.neck_radius_mm == s.phantom.neck_radius_mm);
  CHECK(r.imaging.speckle_std == 3.25);
  CHECK(r.imaging.intensity_thyroid == 90);
  CHECK(r.oracle.dropout_prob == 0.05);
  CHECK(!r.oracle.shadow_masking);
  CHECK(r.scan.step_size_mm == 4.0);
  CHECK(!r.scan.centering_correction);
  CHECK(r.scan.max_total_steps == 123);
  CHECK(r.compounding.vote == CompoundingConfig::Vote::majority);
  REQUIRE(r.pose_left.x_mm.has_value());
  CHECK(*r.pose_left.x_mm == 5.0);
  CHECK(!r.pose_right.x_mm.has_value());
  CHECK(r.pose_right.lateral_offset_mm == -3.0);
  CHECK(r.pose_right.tilt_deg == 2.5);
  CHECK(r.perturbation.count == 9);

  // Dumping the re-parsed scenario reproduces the document.
  CHECK(scenario_to_json(r) == j);
}

TEST_CASE("a bare schema_version yields the default scenario") {
  const Scenario s = scenario_from_json(json::parse(R"({"schema_version": 1})"));
  CHECK(s.seed == 42);
  CHECK(s.phantom.neck_radius_mm == 120.0);
  CHECK(s.imaging.image_width_px == 128);
  CHECK(s.oracle.shadow_masking);
  CHECK(s.scan.step_size_mm == 5.0);
  CHECK(s.compounding.vote == CompoundingConfig::Vote::majority);
  CHECK(!s.pose_left.x_mm.has_value());
  CHECK(s.perturbation.count == 30);
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK(contains(parse_error(json::parse(R"({"schema_version": 1, "bogus": 1})")),
                 "scenario.bogus: unknown key"));
  CHECK(contains(parse_error(json::parse(R"({"schema_version": 1, "scan": {"bogus": 1}})")),
                 "scan.bogus: unknown key"));
  CHECK(contains(parse_error(json::parse(
                     R"({"schema_version": 1, "phantom": {"lobe_left": {"radius": 3}}})")),
                 "phantom.lobe_left.radius: unknown key"));
  CHECK(contains(parse_error(json::parse(
                     R"({"schema_version": 1, "initial_poses": {"left": {"y_mm": 0}}})")),
                 "initial_poses.left.y_mm: unknown key"));
}

TEST_CASE("wrong types name the offending field") {
  CHECK(contains(parse_error(json::parse(R"({"schema_version": "1"})")),
                 "scenario.schema_version: expected an integer"));
  CHECK(contains(parse_error(json::parse(R"({"schema_version": 1, "seed": "abc"})")),
                 "scenario.seed: expected an unsigned integer"));
  CHECK(contains(parse_error(json::parse(
                     R"({"schema_version": 1, "imaging": {"image_width_px": 1.5}})")),
                 "imaging.image_width_px: expected an integer"));
  CHECK(contains(parse_error(json::parse(
                     R"({"schema_version": 1, "imaging": {"intensity_thyroid": 300}})")),
                 "imaging.intensity_thyroid: expected an integer in [0, 255]"));
  CHECK(contains(parse_error(json::parse(
                     R"({"schema_version": 1, "segmentation": {"shadow_masking": 1}})")),
                 "segmentation.shadow_masking: expected a boolean"));
  CHECK(contains(parse_error(json::parse(
                     R"({"schema_version": 1, "phantom": {"lobe_left": {"center_mm": [1, 2]}}})")),
                 "phantom.lobe_left.center_mm: expected an array of 3 numbers"));
  CHECK(contains(parse_error(json::parse(
                     R"({"schema_version": 1, "compounding": {"vote": "garbage"}})")),
                 "compounding.vote"));
  CHECK(contains(parse_error(json::parse(
                     R"({"schema_version": 1, "initial_poses": {"left": {"x_mm": "a"}}})")),
                 "initial_poses.left.x_mm: expected a number or null"));
  CHECK(contains(parse_error(json::parse(R"({"schema_version": 1, "scan": 3})")),
                 "scan: expected an object"));
  CHECK(contains(parse_error(json::parse(R"([1, 2])")), "scenario: expected an object"));
}

TEST_CASE("schema_version is required and pinned") {
  CHECK(contains(parse_error(json::object()), "schema_version: missing required field"));
  CHECK(contains(parse_error(json::parse(R"({"schema_version": 2})")), "unsupported version"));

  // A null x_mm is the explicit way to say "use the lobe center".
  const Scenario s = scenario_from_json(
      json::parse(R"({"schema_version": 1, "initial_poses": {"left": {"x_mm": null}}})"));
  CHECK(!s.pose_left.x_mm.has_value());
}

TEST_CASE("semantic validation runs after parsing") {
  CHECK(contains(parse_error(json::parse(
                     R"({"schema_version": 1, "phantom": {"voxel_pitch_mm": 0}})")),
                 "voxel_pitch_mm must be positive"));
  CHECK(contains(parse_error(json::parse(
                     R"({"schema_version": 1, "perturbation": {"count": 0}})")),
                 "perturbation.count must be at least 1"));
  CHECK(contains(parse_error(json::parse(
                     R"({"schema_version": 1, "perturbation": {"tilt_range_deg": -1}})")),
                 "perturbation ranges must be non-negative"));

  Scenario bad = default_scenario();
  bad.schema_version = 3;
  CHECK(contains(thrown_message<ValidationError>([&] { bad.validate(); }),
                 "schema_version must be 1"));
}

TEST_CASE("load_scenario reads files and reports bad ones") {
  const auto good = write_temp("good.json", R"({"schema_version": 1, "seed": 9})");
  const Scenario s = load_scenario(good.string());
  CHECK(s.seed == 9);

  CHECK(contains(thrown_message<ValidationError>(
                     [] { load_scenario("/nonexistent/dir/x.json"); }),
                 "cannot open scenario file"));

  const auto bad = write_temp("bad.json", "{ this is not json");
  CHECK(contains(thrown_message<ValidationError>([&] { load_scenario(bad.string()); }),
                 "not valid JSON"));

  std::filesystem::remove(good);
  std::filesystem::remove(bad);
}

TEST_CASE("initial placement lands on the skin over the lobe") {
  const PhantomModel& model = default_model();
  const ImagingConfig img;

  const ProbePose left = initial_pose_for(model, LobeSide::left, {}, img);
  CHECK(left.translation.x() == 0.0);
  CHECK(left.translation.y() == 18.0);
  CHECK(left.translation.z() == doctest::Approx(std::sqrt(14076.0) - 2.0).epsilon(1e-12));
  // Surface-normal placement couples the whole footprint.
  const std::vector<std::uint8_t> mask = contact_mask(left, model.surface(), img);
  CHECK(std::count(mask.begin(), mask.end(), 1) == img.image_width_px);

  const ProbePose right = initial_pose_for(model, LobeSide::right, {}, img);
  CHECK(right.translation.y() == -18.0);
  CHECK(right.translation.z() == doctest::Approx(left.translation.z()).epsilon(1e-12));

  InitialPoseSpec offset;
  offset.x_mm = 5.0;
  offset.lateral_offset_mm = 4.0;
  const ProbePose moved = initial_pose_for(model, LobeSide::left, offset, img);
  CHECK(moved.translation.x() == 5.0);
  CHECK(moved.translation.y() == 22.0);
  CHECK(moved.translation.z() ==
        doctest::Approx(std::sqrt(120.0 * 120.0 - 22.0 * 22.0) - 2.0).epsilon(1e-12));

  InitialPoseSpec tilted;
  tilted.tilt_deg = 10.0;
  const ProbePose rolled = initial_pose_for(model, LobeSide::left, tilted, img);
  CHECK(rolled.rotation.angularDistance(left.rotation) ==
        doctest::Approx(deg2rad(10.0)).epsilon(1e-9));
  CHECK(rolled.translation.y() == left.translation.y());
}

TEST_CASE("perturbed pose pairs are deterministic and bounded") {
  const PhantomModel& model = default_model();
  const Scenario sc = default_scenario();  // ranges 10 mm, 10 deg

  const auto pairs5 = perturbed_pose_pairs(model, sc, 5, 123);
  REQUIRE(pairs5.size() == 5);

  // Same seed, same draws; a shorter batch is a prefix of a longer one.
  const auto again = perturbed_pose_pairs(model, sc, 5, 123);
  const auto pairs3 = perturbed_pose_pairs(model, sc, 3, 123);
  for (std::size_t i = 0; i < pairs5.size(); ++i) {
    CHECK(pairs5[i].first.translation == again[i].first.translation);
    CHECK(pairs5[i].second.rotation.coeffs() == again[i].second.rotation.coeffs());
    if (i < pairs3.size()) {
      CHECK(pairs5[i].first.translation == pairs3[i].first.translation);
      CHECK(pairs5[i].first.rotation.coeffs() == pairs3[i].first.rotation.coeffs());
      CHECK(pairs5[i].second.translation == pairs3[i].second.translation);
    }
  }
  CHECK(pairs5[0].first.translation != pairs5[1].first.translation);

  const auto other = perturbed_pose_pairs(model, sc, 5, 124);
  CHECK(other[0].first.translation != pairs5[0].first.translation);

  for (const auto& [left, right] : pairs5) {
    // Offsets stay inside the configured window around the lobe centers.
    CHECK(left.translation.y() >= 8.0);
    CHECK(left.translation.y() <= 28.0);
    CHECK(right.translation.y() >= -28.0);
    CHECK(right.translation.y() <= -8.0);
    CHECK(left.translation.x() == 0.0);

    // Settled onto the surface with the standard indentation.
    const double zl = model.surface().height(left.translation.x(), left.translation.y()) - 2.0;
    CHECK(left.translation.z() == doctest::Approx(zl).epsilon(1e-12));

    // Tilt never exceeds its range: compare against the normal-aligned pose.
    const Quat normal_left(
        rot_x(M_PI + model.surface().normal_roll(left.translation.y())));
    CHECK(left.rotation.angularDistance(normal_left) <= deg2rad(10.0) + 1e-9);
    const Quat normal_right(
        rot_x(M_PI + model.surface().normal_roll(right.translation.y())));
    CHECK(right.rotation.angularDistance(normal_right) <= deg2rad(10.0) + 1e-9);
  }

  // Zero ranges collapse every pair onto the nominal placement.
  Scenario frozen = sc;
  frozen.perturbation.lateral_offset_range_mm = 0.0;
  frozen.perturbation.tilt_range_deg = 0.0;
  const auto still = perturbed_pose_pairs(model, frozen, 2, 5);
  const ProbePose nominal = initial_pose_for(model, LobeSide::left, {}, frozen.imaging);
  CHECK(still[0].first.translation == nominal.translation);
  CHECK(still[0].first.rotation.coeffs() == nominal.rotation.coeffs());
  CHECK(still[1].first.translation == nominal.translation);

  CHECK(thrown_message<ValidationError>([&] { perturbed_pose_pairs(model, sc, 0, 1); })
            .has_value());
}
