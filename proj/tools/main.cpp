#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tvs/analysis.hpp"
#include "tvs/rng.hpp"
#include "tvs/scenario.hpp"
#include "tvs/volume_io.hpp"

namespace {

using nlohmann::json;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

struct CommonOpts {
  std::string scenario_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double pitch = 0.0;
  bool pitch_set = false;
  bool no_shadow = false;
  bool no_centering = false;
};

tvs::Scenario load(const CommonOpts& o) {
  tvs::Scenario s = o.scenario_path.empty() ? tvs::default_scenario()
                                            : tvs::load_scenario(o.scenario_path);
  if (o.seed_set) s.seed = o.seed;
  if (o.pitch_set) {
    if (o.pitch <= 0.0) throw tvs::ValidationError("--pitch must be positive");
    s.compounding.voxel_pitch_mm = o.pitch;
  }
  if (o.no_shadow) s.scan.shadow_correction = false;
  if (o.no_centering) s.scan.centering_correction = false;
  s.validate();
  return s;
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw tvs::ValidationError("cannot create output directory " + dir);
}

json event_json(const tvs::ScanEvent& e) {
  json j;
  j["kind"] = tvs::to_string(e.kind);
  j["t"] = e.timestamp;
  j["n"] = e.n_steps;
  j["alpha_deg"] = e.alpha_corr_deg;
  j["y_mm"] = e.y_corr_mm;
  j["pos"] = {e.position.x(), e.position.y(), e.position.z()};
  if (e.kind == tvs::ScanEvent::Kind::presence) j["thyroid"] = e.thyroid;
  if (!e.detail.empty()) j["detail"] = e.detail;
  return j;
}

void write_events(const std::string& path, const tvs::Scenario& s, tvs::LobeSide lobe,
                  std::uint64_t lobe_seed, const std::vector<tvs::ScanEvent>& events) {
  json header;
  header["kind"] = "header";
  header["lobe"] = tvs::to_string(lobe);
  header["seed"] = lobe_seed;
  header["shadow_correction"] = s.scan.shadow_correction;
  header["centering_correction"] = s.scan.centering_correction;
  header["step_size_mm"] = s.scan.step_size_mm;

  std::string out = header.dump() + "\n";
  for (const auto& e : events) out += event_json(e).dump() + "\n";
  tvs::atomic_write_text(path, out);
}

int count_kind(const std::vector<tvs::ScanEvent>& ev, tvs::ScanEvent::Kind k) {
  int n = 0;
  for (const auto& e : ev)
    if (e.kind == k) ++n;
  return n;
}

int cmd_phantom(const CommonOpts& o) {
  tvs::Scenario s = load(o);
  if (o.pitch_set) s.phantom.voxel_pitch_mm = o.pitch;
  ensure_out_dir(o.out_dir);

  const tvs::PhantomModel model = tvs::build_phantom(s.phantom);
  tvs::write_label_grid(model.grid(), o.out_dir + "/phantom_labels");

  const double gt = tvs::ground_truth_volume(model);
  json rep;
  rep["ground_truth_ml"] = gt;
  rep["voxel_pitch_mm"] = s.phantom.voxel_pitch_mm;
  rep["grid_dims"] = {model.grid().dims[0], model.grid().dims[1], model.grid().dims[2]};
  rep["analytic_mm3"] = {{"lobe_left", tvs::ellipsoid_volume_mm3(s.phantom.lobe_left)},
                         {"lobe_right", tvs::ellipsoid_volume_mm3(s.phantom.lobe_right)},
                         {"isthmus", tvs::box_volume_mm3(s.phantom.isthmus)}};
  tvs::atomic_write_text(o.out_dir + "/phantom_report.json", rep.dump(2) + "\n");

  std::printf("ground truth thyroid volume: %s ml\n", fmt("%.4f", gt).c_str());
  return 0;
}

int cmd_scan(const CommonOpts& o, bool export_frames) {
  tvs::Scenario s = load(o);
  ensure_out_dir(o.out_dir);
  const tvs::PhantomModel model = tvs::build_phantom(s.phantom);

  tvs::ScanContext ctx;
  ctx.model = &model;
  ctx.imaging = s.imaging;
  ctx.oracle = s.oracle;
  ctx.scan = s.scan;

  json summary;
  for (tvs::LobeSide side : {tvs::LobeSide::left, tvs::LobeSide::right}) {
    const bool left = side == tvs::LobeSide::left;
    const tvs::InitialPoseSpec& pose_spec = left ? s.pose_left : s.pose_right;
    const std::uint64_t lobe_seed = tvs::derive_seed(s.seed, tvs::seed_tag::lobe, left ? 0 : 1);

    std::vector<tvs::ScanEvent> events;
    const tvs::ProbePose init = tvs::initial_pose_for(model, side, pose_spec, s.imaging);
    const tvs::SweepRecording rec = tvs::scan_lobe(ctx, init, side, lobe_seed, &events);

    const std::string name = tvs::to_string(side);
    write_events(o.out_dir + "/events_" + name + ".jsonl", s, side, lobe_seed, events);

    json lobe;
    lobe["frames_recorded"] = rec.frames.size();
    lobe["pose_samples"] = rec.poses.size();
    lobe["moves"] = count_kind(events, tvs::ScanEvent::Kind::move);
    lobe["rotation_adjustments"] = count_kind(events, tvs::ScanEvent::Kind::adjust_rotation);
    lobe["translation_adjustments"] =
        count_kind(events, tvs::ScanEvent::Kind::adjust_translation);
    lobe["warnings"] = count_kind(events, tvs::ScanEvent::Kind::warning);
    lobe["duration_s"] = rec.frames.empty() ? 0.0 : rec.frames.back().timestamp;
    summary[name] = lobe;

    if (export_frames) {
      const std::string frame_dir = o.out_dir + "/frames";
      ensure_out_dir(frame_dir);
      json index = json::array();
      for (std::size_t i = 0; i < rec.frames.size(); ++i) {
        char fname[64];
        std::snprintf(fname, sizeof(fname), "%s_%05zu.pgm", name.c_str(), i);
        tvs::write_pgm(rec.frames[i].intensity, frame_dir + "/" + fname);
        const auto& tr = rec.frames[i].pose.translation;
        index.push_back({{"file", fname},
                         {"t", rec.frames[i].timestamp},
                         {"pos", {tr.x(), tr.y(), tr.z()}}});
      }
      tvs::atomic_write_text(frame_dir + "/index_" + name + ".json", index.dump(2) + "\n");
    }

    std::printf("%s lobe: %zu frames recorded over %d moves, %d warnings\n", name.c_str(),
                rec.frames.size(), count_kind(events, tvs::ScanEvent::Kind::move),
                count_kind(events, tvs::ScanEvent::Kind::warning));
  }
  tvs::atomic_write_text(o.out_dir + "/scan_summary.json", summary.dump(2) + "\n");
  return 0;
}

int cmd_volumetry(const CommonOpts& o) {
  tvs::Scenario s = load(o);
  ensure_out_dir(o.out_dir);
  const tvs::PhantomModel model = tvs::build_phantom(s.phantom);

  const tvs::ProbePose init_left =
      tvs::initial_pose_for(model, tvs::LobeSide::left, s.pose_left, s.imaging);
  const tvs::ProbePose init_right =
      tvs::initial_pose_for(model, tvs::LobeSide::right, s.pose_right, s.imaging);

  const tvs::VolumetryArtifacts art = tvs::run_robotic_volumetry(
      model, init_left, init_right, s.imaging, s.oracle, s.scan, s.compounding, s.seed);
  const double gt = tvs::ground_truth_volume(model);
  const double conventional = tvs::run_conventional_baseline(model);

  tvs::write_label_volume(art.left, o.out_dir + "/volume_left");
  tvs::write_label_volume(art.right, o.out_dir + "/volume_right");
  tvs::write_label_volume(art.merged, o.out_dir + "/volume_merged");
  write_events(o.out_dir + "/events_left.jsonl", s, tvs::LobeSide::left,
               tvs::derive_seed(s.seed, tvs::seed_tag::lobe, 0), art.events_left);
  write_events(o.out_dir + "/events_right.jsonl", s, tvs::LobeSide::right,
               tvs::derive_seed(s.seed, tvs::seed_tag::lobe, 1), art.events_right);

  json rep;
  rep["seed"] = s.seed;
  rep["ground_truth_ml"] = gt;
  rep["robotic_ml"] = art.robotic_ml;
  rep["robotic_err_pct"] = 100.0 * (art.robotic_ml - gt) / gt;
  rep["conventional_ml"] = conventional;
  rep["conventional_err_pct"] = 100.0 * (conventional - gt) / gt;
  rep["shadow_correction"] = s.scan.shadow_correction;
  rep["centering_correction"] = s.scan.centering_correction;
  tvs::atomic_write_text(o.out_dir + "/report.json", rep.dump(2) + "\n");

  std::printf("robotic: %s ml (%s%%), conventional: %s ml (%s%%), ground truth: %s ml\n",
              fmt("%.3f", art.robotic_ml).c_str(),
              fmt("%+.2f", 100.0 * (art.robotic_ml - gt) / gt).c_str(),
              fmt("%.3f", conventional).c_str(),
              fmt("%+.2f", 100.0 * (conventional - gt) / gt).c_str(), fmt("%.3f", gt).c_str());
  return 0;
}

int cmd_ablate(const CommonOpts& o, int jobs, bool check_trends_flag) {
  tvs::Scenario s = load(o);
  ensure_out_dir(o.out_dir);
  const tvs::PhantomModel model = tvs::build_phantom(s.phantom);

  const auto pairs = tvs::perturbed_pose_pairs(model, s, s.perturbation.count, s.seed);
  const tvs::AblationResult res = tvs::run_ablation(model, pairs, s.imaging, s.oracle, s.scan,
                                                    s.compounding, s.seed, jobs);

  tvs::atomic_write_text(o.out_dir + "/ablation_runs.csv", tvs::ablation_runs_csv(res));
  tvs::atomic_write_text(o.out_dir + "/ablation_summary.csv", tvs::ablation_summary_csv(res));

  const tvs::TrendCheck trends = tvs::check_trends(res);
  json rep;
  rep["seed"] = s.seed;
  rep["runs"] = res.n_runs;
  rep["excluded_runs"] = res.n_excluded;
  rep["ground_truth_ml"] = res.ground_truth_ml;
  for (const auto& cfg : res.configs) {
    rep["configs"][cfg.name] = {{"mean_ml", cfg.mean_ml},
                                {"std_ml", cfg.std_ml},
                                {"mean_abs_err_pct", cfg.mean_abs_err_pct},
                                {"n_used", cfg.n_used}};
  }
  rep["trends"] = {{"std_both_is_min", trends.std_both_is_min},
                   {"err_both_le_none", trends.err_both_le_none},
                   {"err_shadow_le_none", trends.err_shadow_le_none},
                   {"all_hold", trends.all_hold()}};
  tvs::atomic_write_text(o.out_dir + "/ablation.json", rep.dump(2) + "\n");

  std::printf("%s", tvs::ablation_summary_csv(res).c_str());
  std::printf("%s\n", trends.report.c_str());
  if (res.n_excluded > 0)
    std::printf("excluded %d of %d runs (failed under at least one configuration)\n",
                res.n_excluded, res.n_runs);

  if (check_trends_flag && !trends.all_hold()) {
    std::fprintf(stderr, "trend check failed\n");
    return 3;
  }
  return 0;
}

int cmd_dose(double mass_g, double dose_gy, double uptake, double t_eff_h) {
  tvs::DoseParams p;
  p.mass_g = mass_g;
  p.dose_gy = dose_gy;
  p.uptake_24h = uptake;
  p.t_eff_h = t_eff_h;
  std::printf("activity: %s\n", fmt("%.10g", tvs::marinelli_activity(p)).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulated robotic thyroid ultrasound volumetry"};
  app.require_subcommand(1);

  CommonOpts opts;
  int jobs = 1;
  bool check_trends_flag = false;
  bool export_frames = false;
  double mass_g = 0, dose_gy = 0, uptake = 0, t_eff_h = 0;

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--scenario", opts.scenario_path, "Scenario JSON file (defaults used if omitted)");
    if (needs_out) sub->add_option("--out", opts.out_dir, "Output directory")->required();
    sub->add_option("--seed", opts.seed, "Override the scenario seed")
        ->each([&](const std::string&) { opts.seed_set = true; });
    sub->add_option("--pitch", opts.pitch, "Override the voxel pitch in mm")
        ->each([&](const std::string&) { opts.pitch_set = true; });
    sub->add_flag("--no-shadow-correction", opts.no_shadow, "Disable the roll correction");
    sub->add_flag("--no-centering", opts.no_centering, "Disable the lateral centering correction");
  };

  CLI::App* phantom = app.add_subcommand("phantom", "Build the phantom and export its label grid");
  add_common(phantom, true);

  CLI::App* scan = app.add_subcommand("scan", "Run the probe-motion scan over both lobes");
  add_common(scan, true);
  scan->add_flag("--export-frames", export_frames, "Write every recorded frame as PGM");

  CLI::App* volumetry =
      app.add_subcommand("volumetry", "Scan, compound and measure both lobes");
  add_common(volumetry, true);

  CLI::App* ablate = app.add_subcommand("ablate", "Compare correction configurations");
  add_common(ablate, true);
  ablate->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  ablate->add_flag("--check-trends", check_trends_flag,
                   "Exit with status 3 when expected trends do not hold");

  CLI::App* dose = app.add_subcommand("dose", "Marinelli dose planning");
  dose->add_option("--mass-g", mass_g, "Thyroid mass in grams")->required();
  dose->add_option("--dose-gy", dose_gy, "Target dose in Gy")->required();
  dose->add_option("--uptake", uptake, "24h uptake fraction")->required();
  dose->add_option("--teff-h", t_eff_h, "Effective half-life in hours")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (phantom->parsed()) return cmd_phantom(opts);
    if (scan->parsed()) return cmd_scan(opts, export_frames);
    if (volumetry->parsed()) return cmd_volumetry(opts);
    if (ablate->parsed()) return cmd_ablate(opts, jobs, check_trends_flag);
    if (dose->parsed()) return cmd_dose(mass_g, dose_gy, uptake, t_eff_h);
  } catch (const tvs::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const tvs::ScanError& e) {
    std::fprintf(stderr, "scan error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
