#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "tvs/rng.hpp"
#include "tvs/volume_io.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int status = -1;
  std::string output;  // stdout and stderr interleaved
};

CmdResult run_cli(const std::string& args) {
  const std::string cmd = std::string(TVS_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult res;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof(buf), pipe)) > 0) res.output.append(buf, got);
  const int rc = pclose(pipe);
  res.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return res;
}

fs::path fresh_dir(const std::string& name) {
  static const fs::path base =
      fs::temp_directory_path() / ("tvs_cli_" + std::to_string(getpid()));
  const fs::path dir = base / name;
  fs::create_directories(dir);
  return dir;
}

// Small coincident-lobe phantom: scans finish in about a second.
const char* kSmallScenario = R"({
  "schema_version": 1,
  "seed": 5,
  "phantom": {
    "neck_radius_mm": 40.0,
    "neck_length_mm": 60.0,
    "lobe_left":  {"center_mm": [0, 0, 20], "semi_axes_mm": [20, 10, 10]},
    "lobe_right": {"center_mm": [0, 0, 20], "semi_axes_mm": [20, 10, 10]},
    "isthmus": {"extents_mm": [0, 0, 0]},
    "trachea": {"radius_mm": 0}
  },
  "perturbation": {"count": 1, "lateral_offset_range_mm": 0.0, "tilt_range_deg": 0.0}
})";

fs::path small_scenario_file() {
  const fs::path path = fresh_dir("scenarios") / "small.json";
  if (!fs::exists(path)) {
    std::ofstream out(path);
    out << kSmallScenario;
  }
  return path;
}

std::string first_line(const std::string& text) {
  return text.substr(0, text.find('\n'));
}

json parse_file(const fs::path& p) { return json::parse(tvs::read_text(p.string())); }

int count_files(const fs::path& dir, const std::string& prefix, const std::string& suffix) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind(prefix, 0) == 0 && name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      ++n;
  }
  return n;
}

const double kSmallAnalyticMl = 4.0 * M_PI / 3.0 * 20.0 * 10.0 * 10.0 / 1000.0;

}  // namespace

TEST_CASE("dose prints the planned activity") {
  const CmdResult ok = run_cli("dose --mass-g 20 --dose-gy 150 --uptake 0.5 --teff-h 120");
  CHECK(ok.status == 0);
  CHECK(ok.output == "activity: 1250\n");

  const CmdResult bad = run_cli("dose --mass-g 20 --dose-gy 150 --uptake 0 --teff-h 120");
  CHECK(bad.status == 1);
  CHECK(bad.output.find("uptake_24h") != std::string::npos);

  CHECK(run_cli("dose --mass-g 20").status == 1);
}

TEST_CASE("bad invocations exit with a parse error") {
  CHECK(run_cli("").status == 1);
  CHECK(run_cli("frobnicate").status == 1);
  CHECK(run_cli("volumetry").status == 1);  // --out is required
  const CmdResult unknown = run_cli("scan --out /tmp/should_not_exist --frobnicate");
  CHECK(unknown.status == 1);
  CHECK(!fs::exists("/tmp/should_not_exist"));
}

TEST_CASE("scenario problems are reported before any work") {
  const fs::path dir = fresh_dir("scenario_errors");
  const CmdResult missing =
      run_cli("phantom --scenario /nonexistent/x.json --out " + dir.string());
  CHECK(missing.status == 1);
  CHECK(missing.output.find("cannot open scenario file") != std::string::npos);

  const fs::path bad = dir / "bad.json";
  {
    std::ofstream out(bad);
    out << "{ nope";
  }
  const CmdResult malformed =
      run_cli("phantom --scenario " + bad.string() + " --out " + dir.string());
  CHECK(malformed.status == 1);
  CHECK(malformed.output.find("not valid JSON") != std::string::npos);

  const fs::path unknown = dir / "unknown.json";
  {
    std::ofstream out(unknown);
    out << R"({"schema_version": 1, "scan": {"speed": 3}})";
  }
  const CmdResult uk = run_cli("phantom --scenario " + unknown.string() + " --out " + dir.string());
  CHECK(uk.status == 1);
  CHECK(uk.output.find("scan.speed: unknown key") != std::string::npos);

  const CmdResult zero_pitch = run_cli("phantom --scenario " + small_scenario_file().string() +
                                       " --pitch 0 --out " + dir.string());
  CHECK(zero_pitch.status == 1);
  CHECK(zero_pitch.output.find("--pitch must be positive") != std::string::npos);
}

TEST_CASE("phantom exports a coherent label grid") {
  const fs::path dir = fresh_dir("phantom_out");
  const CmdResult res =
      run_cli("phantom --scenario " + small_scenario_file().string() + " --out " + dir.string());
  INFO(res.output);
  CHECK(res.status == 0);
  CHECK(res.output.find("ground truth thyroid volume:") != std::string::npos);

  REQUIRE(fs::exists(dir / "phantom_labels.raw"));
  REQUIRE(fs::exists(dir / "phantom_labels.json"));
  REQUIRE(fs::exists(dir / "phantom_report.json"));

  const json sidecar = parse_file(dir / "phantom_labels.json");
  const auto dims = sidecar["dims"];
  const std::uintmax_t expected =
      std::uintmax_t(dims[0].get<int>()) * dims[1].get<int>() * dims[2].get<int>();
  CHECK(fs::file_size(dir / "phantom_labels.raw") == expected);
  CHECK(sidecar["dtype"] == "uint8");
  CHECK(sidecar["order"] == "x-fastest");

  const json rep = parse_file(dir / "phantom_report.json");
  // Coincident lobes: the gland is one ellipsoid of 8.378 ml.
  CHECK(std::abs(rep["ground_truth_ml"].get<double>() - kSmallAnalyticMl) <
        0.015 * kSmallAnalyticMl);
  CHECK(rep["analytic_mm3"]["lobe_left"].get<double>() ==
        doctest::Approx(1000.0 * kSmallAnalyticMl).epsilon(1e-12));
  CHECK(rep["grid_dims"] == sidecar["dims"]);

  // Pitch override coarsens the exported grid.
  const fs::path dir2 = fresh_dir("phantom_coarse");
  const CmdResult coarse = run_cli("phantom --scenario " + small_scenario_file().string() +
                                   " --pitch 1.0 --out " + dir2.string());
  CHECK(coarse.status == 0);
  const json side2 = parse_file(dir2 / "phantom_labels.json");
  CHECK(side2["spacing_mm"][0].get<double>() == 1.0);
  CHECK(side2["dims"][0].get<int>() == 60);
  const json rep2 = parse_file(dir2 / "phantom_report.json");
  CHECK(rep2["voxel_pitch_mm"].get<double>() == 1.0);
}

TEST_CASE("volumetry is deterministic and accurate on the small phantom") {
  const std::string scenario = small_scenario_file().string();
  const fs::path a = fresh_dir("vol_a"), b = fresh_dir("vol_b");

  const CmdResult ra = run_cli("volumetry --scenario " + scenario + " --out " + a.string());
  INFO(ra.output);
  REQUIRE(ra.status == 0);
  const CmdResult rb = run_cli("volumetry --scenario " + scenario + " --out " + b.string());
  REQUIRE(rb.status == 0);

  for (const char* f : {"report.json", "volume_merged.raw", "volume_merged.json",
                        "events_left.jsonl", "events_right.jsonl"}) {
    CAPTURE(f);
    CHECK(tvs::read_text((a / f).string()) == tvs::read_text((b / f).string()));
  }
  CHECK(ra.output == rb.output);

  const json rep = parse_file(a / "report.json");
  CHECK(rep["seed"].get<std::uint64_t>() == 5);
  const double gt = rep["ground_truth_ml"].get<double>();
  const double robotic = rep["robotic_ml"].get<double>();
  CHECK(std::abs(robotic - gt) / gt < 0.10);
  CHECK(rep["robotic_err_pct"].get<double>() ==
        doctest::Approx(100.0 * (robotic - gt) / gt).epsilon(1e-12));
  CHECK(rep["shadow_correction"].get<bool>());
  CHECK(rep["centering_correction"].get<bool>());
  CHECK(rep.contains("conventional_ml"));
  CHECK(rep.contains("conventional_err_pct"));

  // The merged occupancy volume is consistent with its sidecar.
  const json merged = parse_file(a / "volume_merged.json");
  const auto dims = merged["dims"];
  CHECK(fs::file_size(a / "volume_merged.raw") ==
        std::uintmax_t(dims[0].get<int>()) * dims[1].get<int>() * dims[2].get<int>());

  // The events stream starts with a header naming the lobe and seed.
  const json header = json::parse(first_line(tvs::read_text((a / "events_left.jsonl").string())));
  CHECK(header["kind"] == "header");
  CHECK(header["lobe"] == "left");
  CHECK(header["seed"].get<std::uint64_t>() == tvs::derive_seed(5, tvs::seed_tag::lobe, 0));
  CHECK(header["shadow_correction"].get<bool>());
  CHECK(header["step_size_mm"].get<double>() == 5.0);
}

TEST_CASE("seed and correction flags are plumbed through") {
  const std::string scenario = small_scenario_file().string();
  const fs::path dir = fresh_dir("vol_flags");

  const CmdResult res = run_cli("volumetry --scenario " + scenario +
                                " --seed 7 --no-shadow-correction --no-centering --out " +
                                dir.string());
  INFO(res.output);
  REQUIRE(res.status == 0);

  const json rep = parse_file(dir / "report.json");
  CHECK(rep["seed"].get<std::uint64_t>() == 7);
  CHECK(!rep["shadow_correction"].get<bool>());
  CHECK(!rep["centering_correction"].get<bool>());

  const json header = json::parse(first_line(tvs::read_text((dir / "events_left.jsonl").string())));
  CHECK(header["seed"].get<std::uint64_t>() == tvs::derive_seed(7, tvs::seed_tag::lobe, 0));
  CHECK(!header["shadow_correction"].get<bool>());
  CHECK(!header["centering_correction"].get<bool>());
}

TEST_CASE("scan exports frames with an index") {
  const std::string scenario = small_scenario_file().string();
  const fs::path dir = fresh_dir("scan_out");
  const CmdResult res =
      run_cli("scan --scenario " + scenario + " --export-frames --out " + dir.string());
  INFO(res.output);
  REQUIRE(res.status == 0);

  const json summary = parse_file(dir / "scan_summary.json");
  const int left_frames = summary["left"]["frames_recorded"].get<int>();
  CHECK(left_frames > 100);
  CHECK(summary["left"]["moves"].get<int>() > 0);
  CHECK(summary["right"]["frames_recorded"].get<int>() > 100);
  CHECK(summary["left"]["duration_s"].get<double>() > 0.0);

  const json index = parse_file(dir / "frames" / "index_left.json");
  CHECK(index.is_array());
  CHECK(static_cast<int>(index.size()) == left_frames);
  CHECK(count_files(dir / "frames", "left_", ".pgm") == left_frames);
  CHECK(index[0]["file"] == "left_00000.pgm");
  CHECK(index[0].contains("t"));
  CHECK(index[0]["pos"].size() == 3);

  const std::string pgm = tvs::read_text((dir / "frames" / "left_00000.pgm").string());
  CHECK(pgm.rfind("P5\n128 128\n255\n", 0) == 0);
  CHECK(pgm.size() == 15 + 128 * 128);

  // Every event line parses and carries the common fields.
  std::istringstream events(tvs::read_text((dir / "events_left.jsonl").string()));
  std::string line;
  int lines = 0;
  while (std::getline(events, line)) {
    const json e = json::parse(line);
    if (lines > 0) {
      CHECK(e.contains("kind"));
      CHECK(e.contains("t"));
      CHECK(e["pos"].size() == 3);
    }
    ++lines;
  }
  CHECK(lines > 5);
}

TEST_CASE("a scan that exhausts its step budget exits with code 2") {
  const fs::path dir = fresh_dir("abort_out");
  const fs::path scen = dir / "abort.json";
  {
    json j = json::parse(kSmallScenario);
    j["scan"] = {{"max_total_steps", 2}};
    std::ofstream out(scen);
    out << j.dump(2);
  }
  const CmdResult res = run_cli("volumetry --scenario " + scen.string() + " --out " + dir.string());
  CHECK(res.status == 2);
  CHECK(res.output.find("scan error:") != std::string::npos);
  CHECK(res.output.find("step budget") != std::string::npos);
}

TEST_CASE("ablate writes paired statistics and holds its trends") {
  const std::string scenario = small_scenario_file().string();
  const fs::path a = fresh_dir("ablate_a"), b = fresh_dir("ablate_b");

  const CmdResult ra = run_cli("ablate --scenario " + scenario + " --jobs 2 --check-trends --out " +
                               a.string());
  INFO(ra.output);
  REQUIRE(ra.status == 0);
  CHECK(ra.output.find("std_ml none=") != std::string::npos);

  const std::string runs_csv = tvs::read_text((a / "ablation_runs.csv").string());
  CHECK(first_line(runs_csv) == "config,run,seed,volume_ml,rel_err");
  CHECK(std::count(runs_csv.begin(), runs_csv.end(), '\n') == 5);  // 1 run x 4 configs
  const std::string summary_csv = tvs::read_text((a / "ablation_summary.csv").string());
  CHECK(first_line(summary_csv) == "config,mean_ml,std_ml,mean_abs_err_pct");
  CHECK(std::count(summary_csv.begin(), summary_csv.end(), '\n') == 5);

  const json rep = parse_file(a / "ablation.json");
  CHECK(rep["runs"].get<int>() == 1);
  CHECK(rep["excluded_runs"].get<int>() == 0);
  for (const char* name : {"none", "shadow", "centering", "both"}) {
    CAPTURE(name);
    CHECK(rep["configs"][name]["n_used"].get<int>() == 1);
    const double mean = rep["configs"][name]["mean_ml"].get<double>();
    CHECK(std::abs(mean - kSmallAnalyticMl) / kSmallAnalyticMl < 0.10);
  }
  CHECK(rep["trends"]["all_hold"].get<bool>());

  // Thread count cannot change any output byte.
  const CmdResult rb = run_cli("ablate --scenario " + scenario + " --jobs 1 --out " + b.string());
  REQUIRE(rb.status == 0);
  for (const char* f : {"ablation_runs.csv", "ablation_summary.csv", "ablation.json"}) {
    CAPTURE(f);
    CHECK(tvs::read_text((a / f).string()) == tvs::read_text((b / f).string()));
  }
}
