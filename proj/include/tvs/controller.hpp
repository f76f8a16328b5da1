#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "tvs/imaging.hpp"

namespace tvs {

enum class ShadowSide { none, left, right, both };

struct ScanConfig {
  double step_size_mm = 5.0;
  double alpha_step_deg = 5.0;
  double alpha_max_deg = 30.0;
  double y_max_mm = 80.0;

  // Shadow detector: side margins of this fraction of the image width, cut
  // into vertical segments; a side counts as shadowed when every segment has
  // at least shadow_pixel_frac of its pixels darker than p_brightness.
  double shadow_margin_frac = 0.05;
  int shadow_segments = 8;
  double shadow_pixel_frac = 0.90;
  int p_brightness = 70;

  // Centering: a lobe "touches" a border when thyroid pixels appear within
  // border_frac of the image width from it; corrections aim the outer lobe
  // edge at target_edge_frac from the border.
  double border_frac = 0.04;
  double target_edge_frac = 0.06;

  double presence_window_s = 1.0;
  int max_total_steps = 200;

  bool shadow_correction = true;
  bool centering_correction = true;

  void validate() const;
};

// State of the visual-servo scan controller. The commanded pose is always a
// function of this state (plus the surface), never mutated incrementally.
struct ControllerState {
  enum class Phase { seek_end, recording, done };

  Quat rotation_init = Quat::Identity();
  Vec3 translation_init = Vec3::Zero();
  int n_steps = 0;
  double alpha_corr_deg = 0.0;
  double y_corr_mm = 0.0;
  int direction = -1;
  Phase phase = Phase::seek_end;
};

struct FrameStamp {
  double timestamp = 0.0;
  bool thyroid = false;
};

struct ScanEvent {
  enum class Kind {
    init,
    presence,
    move,
    adjust_rotation,
    adjust_translation,
    warning,
    recording_start,
    recording_stop,
    done
  };
  Kind kind{};
  double timestamp = 0.0;
  int n_steps = 0;
  double alpha_corr_deg = 0.0;
  double y_corr_mm = 0.0;
  Vec3 position = Vec3::Zero();
  bool thyroid = false;
  std::string detail;
};

struct SweepRecording {
  LobeSide lobe = LobeSide::left;
  std::vector<Frame> frames;     // strictly increasing timestamps
  std::vector<ProbePose> poses;  // non-decreasing timestamps, cover all frames
};

struct ScanContext {
  const PhantomModel* model = nullptr;
  ImagingConfig imaging;
  SegOracleConfig oracle;
  ScanConfig scan;
};

const char* to_string(ShadowSide side);
const char* to_string(ScanEvent::Kind kind);
const char* to_string(LobeSide side);

// Classifies acoustic-shadow location from the intensity image margins.
ShadowSide detect_shadow_side(const Image8& intensity, const ScanConfig& cfg);

// Lateral correction in probe-frame millimetres, or nullopt when the lobe
// sits clear of both borders (or the label image is empty). Positive values
// translate the probe along its own y axis.
std::optional<double> centering_offset_mm(const Image8& label, double lateral_spacing_mm,
                                          const ScanConfig& cfg);

// True iff the window (now - presence_window, now] is non-empty and every
// frame stamp inside it saw thyroid.
bool thyroid_present(const std::deque<FrameStamp>& recent, double now_s, const ScanConfig& cfg);

// Pose commanded by the controller state, before surface settling:
//   R = RotX(alpha_corr) * R_init
//   t = t_init + R_init * (step_size * n_steps, y_corr, 0)
ProbePose target_pose(const ControllerState& state, const ScanConfig& cfg);

struct AdjustStep {
  double value = 0.0;
  bool saturated = false;  // clamp left the value unchanged
};

// One corrective roll increment of alpha_step toward `sign`, clamped to
// +-alpha_max.
AdjustStep rotation_adjustment(const ControllerState& state, int sign, const ScanConfig& cfg);

// Lateral correction by delta_u, clamped to +-y_max.
AdjustStep centering_adjustment(const ControllerState& state, double delta_u_mm,
                                const ScanConfig& cfg);

// Roll direction that recovers the most probe-surface contact from the
// current state, probed by evaluating the contact mask at both candidate
// rolls. Ties fall back to +1 for a left shadow, -1 for a right one.
int preferred_roll_sign(const ControllerState& state, const ScanContext& ctx, ShadowSide side);

// Drives one lobe sweep: seeks one lobe end, records while sweeping to the
// other end, applying shadow and centering corrections after every step.
// Simulated wall clock advances one frame period per rendered frame.
class ScanSession {
 public:
  ScanSession(const ScanContext& ctx, LobeSide lobe, std::uint64_t seed,
              std::vector<ScanEvent>* events = nullptr);

  SweepRecording run(const ProbePose& initial);

  // The pieces of run(), exposed so behaviours can be driven in isolation.
  void initialize(const ProbePose& initial);
  Frame render_current();
  void do_pose_adjustment(const Frame& latest);
  bool presence() const;

  const ControllerState& state() const { return state_; }
  const ProbePose& current_pose() const { return current_pose_; }
  double now() const { return t_; }

 private:
  void tick();
  void trim_buffer();
  Frame render_at(const ProbePose& pose);
  void close_pose_segment();
  void apply_state();
  void move_step(int dir);
  void move_until_end(int dir);
  void dwell();
  void emit(ScanEvent::Kind kind, const std::string& detail = "", bool thyroid = false);

  ScanContext ctx_;
  LobeSide lobe_;
  std::vector<ScanEvent>* events_;
  ControllerState state_;
  ProbePose current_pose_;
  SweepRecording rec_;
  std::deque<FrameStamp> buffer_;
  double t_ = 0.0;
  double frame_period_s_ = 1.0 / 30.0;
  int n_window_ = 30;
  std::uint64_t frame_index_ = 0;
  int steps_taken_ = 0;
  bool recording_ = false;
};

SweepRecording scan_lobe(const ScanContext& ctx, const ProbePose& initial, LobeSide lobe,
                         std::uint64_t seed, std::vector<ScanEvent>* events = nullptr);

}  // namespace tvs
