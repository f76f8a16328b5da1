#include "tvs/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "tvs/rng.hpp"

namespace tvs {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

double population_std(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / v.size());
}

std::string format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace

void AxisMeasurements::validate() const {
  require(m1_cm > 0.0 && m2_cm > 0.0 && m3_cm > 0.0, "axis measurements must be positive");
}

void DoseParams::validate() const {
  require(mass_g > 0.0, "mass_g must be positive");
  require(dose_gy > 0.0, "dose_gy must be positive");
  require(uptake_24h > 0.0, "uptake_24h must be positive");
  require(t_eff_h > 0.0, "t_eff_h must be positive");
}

double ellipsoid_volume_ml(const AxisMeasurements& m, double factor) {
  m.validate();
  require(factor > 0.0, "ellipsoid factor must be positive");
  return factor * m.m1_cm * m.m2_cm * m.m3_cm;
}

double marinelli_activity(const DoseParams& p) {
  p.validate();
  return 25.0 * p.mass_g * p.dose_gy / (p.uptake_24h * p.t_eff_h);
}

AxisMeasurements axis_measurement_oracle(const PhantomModel& model, LobeSide side) {
  const EllipsoidSpec& lobe =
      side == LobeSide::left ? model.spec().lobe_left : model.spec().lobe_right;
  require(lobe.semi_axes_mm.minCoeff() > 0.0, "lobe has no extent");

  const double coarse = model.spec().voxel_pitch_mm;
  const double fine = coarse / 8.0;
  const double reach = lobe.semi_axes_mm.maxCoeff() + 2.0;

  // Rasters are anchored on the lobe center so the longest chord's line is
  // always sampled exactly.
  const int nb = static_cast<int>(std::ceil(reach / coarse));
  const int na = static_cast<int>(std::ceil(reach / fine));

  double chord[3];
  for (int axis = 0; axis < 3; ++axis) {
    const int b = (axis + 1) % 3, c = (axis + 2) % 3;
    double best = 0.0;
    for (int ib = -nb; ib <= nb; ++ib) {
      for (int ic = -nb; ic <= nb; ++ic) {
        double lo = 0.0, hi = 0.0;
        bool seen = false;
        for (int ia = -na; ia <= na; ++ia) {
          const double pa = ia * fine;
          Vec3 p = lobe.center_mm;
          p[axis] += pa;
          p[b] += ib * coarse;
          p[c] += ic * coarse;
          if (model.in_lobe(side, p)) {
            if (!seen) lo = pa;
            hi = pa;
            seen = true;
          }
        }
        if (seen) best = std::max(best, hi - lo + fine);
      }
    }
    chord[axis] = best;
  }
  return {chord[0] / 10.0, chord[1] / 10.0, chord[2] / 10.0};
}

double run_conventional_baseline(const PhantomModel& model, double factor) {
  return ellipsoid_volume_ml(axis_measurement_oracle(model, LobeSide::left), factor) +
         ellipsoid_volume_ml(axis_measurement_oracle(model, LobeSide::right), factor);
}

VolumetryArtifacts run_robotic_volumetry(const PhantomModel& model, const ProbePose& init_left,
                                         const ProbePose& init_right, const ImagingConfig& imaging,
                                         const SegOracleConfig& oracle, const ScanConfig& scan,
                                         const CompoundingConfig& compounding, std::uint64_t seed) {
  ScanContext ctx;
  ctx.model = &model;
  ctx.imaging = imaging;
  ctx.oracle = oracle;
  ctx.scan = scan;

  VolumetryArtifacts out;
  {
    SweepRecording rec = scan_lobe(ctx, init_left, LobeSide::left,
                                   derive_seed(seed, seed_tag::lobe, 0), &out.events_left);
    out.left = compound(rec, compounding).label;
  }
  {
    SweepRecording rec = scan_lobe(ctx, init_right, LobeSide::right,
                                   derive_seed(seed, seed_tag::lobe, 1), &out.events_right);
    out.right = compound(rec, compounding).label;
  }
  out.merged = merge_lobes(out.left, out.right);
  out.robotic_ml = volume_of(out.merged);
  return out;
}

AblationResult run_ablation(const PhantomModel& model,
                            const std::vector<std::pair<ProbePose, ProbePose>>& initial_poses,
                            const ImagingConfig& imaging, const SegOracleConfig& oracle,
                            const ScanConfig& scan, const CompoundingConfig& compounding,
                            std::uint64_t seed, int jobs) {
  require(!initial_poses.empty(), "ablation needs at least one pose pair");
  require(jobs >= 1, "jobs must be at least 1");

  const int n_runs = static_cast<int>(initial_poses.size());
  AblationResult result;
  result.n_runs = n_runs;
  result.ground_truth_ml = model.ground_truth_volume_ml();

  struct ConfigDef {
    const char* name;
    bool shadow, centering;
  };
  const std::array<ConfigDef, 4> defs{{{"none", false, false},
                                       {"shadow", true, false},
                                       {"centering", false, true},
                                       {"both", true, true}}};

  for (int c = 0; c < 4; ++c) {
    result.configs[c].name = defs[c].name;
    result.configs[c].shadow = defs[c].shadow;
    result.configs[c].centering = defs[c].centering;
    result.configs[c].runs.resize(n_runs);
  }

  // Flat task list; seeds depend only on the run index so every
  // configuration sees identical poses and render noise.
  std::atomic<int> next_task{0};
  const int n_tasks = 4 * n_runs;
  auto worker = [&]() {
    while (true) {
      const int task = next_task.fetch_add(1);
      if (task >= n_tasks) return;
      const int c = task / n_runs;
      const int r = task % n_runs;

      ScanConfig sc = scan;
      sc.shadow_correction = defs[c].shadow;
      sc.centering_correction = defs[c].centering;
      const std::uint64_t run_seed = derive_seed(seed, seed_tag::run, r);

      AblationRun& out = result.configs[c].runs[r];
      out.run = r;
      out.seed = run_seed;
      try {
        const VolumetryArtifacts art =
            run_robotic_volumetry(model, initial_poses[r].first, initial_poses[r].second,
                                  imaging, oracle, sc, compounding, run_seed);
        out.volume_ml = art.robotic_ml;
        out.rel_err = (art.robotic_ml - result.ground_truth_ml) / result.ground_truth_ml;
      } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Pairwise exclusion: a run that failed under any configuration is left
  // out of the statistics of all of them.
  std::vector<bool> usable(n_runs, true);
  for (int r = 0; r < n_runs; ++r)
    for (int c = 0; c < 4; ++c)
      if (result.configs[c].runs[r].failed) usable[r] = false;
  result.n_excluded = static_cast<int>(std::count(usable.begin(), usable.end(), false));

  for (int c = 0; c < 4; ++c) {
    std::vector<double> volumes;
    std::vector<double> abs_errs;
    for (int r = 0; r < n_runs; ++r) {
      if (!usable[r]) continue;
      volumes.push_back(result.configs[c].runs[r].volume_ml);
      abs_errs.push_back(std::abs(result.configs[c].runs[r].rel_err));
    }
    result.configs[c].n_used = static_cast<int>(volumes.size());
    if (!volumes.empty()) {
      result.configs[c].mean_ml = mean_of(volumes);
      result.configs[c].std_ml = population_std(volumes, result.configs[c].mean_ml);
      result.configs[c].mean_abs_err_pct = 100.0 * mean_of(abs_errs);
    }
  }
  return result;
}

std::string ablation_runs_csv(const AblationResult& r) {
  std::string csv = "config,run,seed,volume_ml,rel_err\n";
  for (const auto& cfg : r.configs) {
    for (const auto& run : cfg.runs) {
      if (run.failed) continue;
      csv += cfg.name;
      csv += ',' + std::to_string(run.run);
      csv += ',' + std::to_string(run.seed);
      csv += ',' + format("%.4f", run.volume_ml);
      csv += ',' + format("%.6f", run.rel_err);
      csv += '\n';
    }
  }
  return csv;
}

std::string ablation_summary_csv(const AblationResult& r) {
  std::string csv = "config,mean_ml,std_ml,mean_abs_err_pct\n";
  for (const auto& cfg : r.configs) {
    csv += cfg.name;
    csv += ',' + format("%.4f", cfg.mean_ml);
    csv += ',' + format("%.4f", cfg.std_ml);
    csv += ',' + format("%.3f", cfg.mean_abs_err_pct);
    csv += '\n';
  }
  return csv;
}

TrendCheck check_trends(const AblationResult& r) {
  const auto& none = r.configs[0];
  const auto& shadow = r.configs[1];
  const auto& centering = r.configs[2];
  const auto& both = r.configs[3];

  TrendCheck t;
  t.std_both_is_min = both.std_ml <= none.std_ml && both.std_ml <= shadow.std_ml &&
                      both.std_ml <= centering.std_ml;
  t.err_both_le_none = both.mean_abs_err_pct <= none.mean_abs_err_pct;
  t.err_shadow_le_none = shadow.mean_abs_err_pct <= none.mean_abs_err_pct;

  std::ostringstream rep;
  rep << "std_ml none=" << format("%.4f", none.std_ml)
      << " shadow=" << format("%.4f", shadow.std_ml)
      << " centering=" << format("%.4f", centering.std_ml)
      << " both=" << format("%.4f", both.std_ml)
      << " | both is min: " << (t.std_both_is_min ? "yes" : "NO") << "\n";
  rep << "mean_abs_err_pct none=" << format("%.3f", none.mean_abs_err_pct)
      << " both=" << format("%.3f", both.mean_abs_err_pct)
      << " | both <= none: " << (t.err_both_le_none ? "yes" : "NO") << "\n";
  rep << "mean_abs_err_pct shadow=" << format("%.3f", shadow.mean_abs_err_pct)
      << " | shadow <= none: " << (t.err_shadow_le_none ? "yes" : "NO");
  t.report = rep.str();
  return t;
}

}  // namespace tvs
