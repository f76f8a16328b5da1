#include "tvs/controller.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tvs/compounding.hpp"

namespace tvs {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

Vec3 lerp(const Vec3& a, const Vec3& b, double t) { return (1.0 - t) * a + t * b; }

}  // namespace

void ScanConfig::validate() const {
  require(step_size_mm > 0.0, "step_size_mm must be positive");
  require(alpha_step_deg > 0.0, "alpha_step_deg must be positive");
  require(alpha_max_deg >= alpha_step_deg, "alpha_max_deg must be at least alpha_step_deg");
  require(y_max_mm > 0.0, "y_max_mm must be positive");
  require(shadow_margin_frac > 0.0 && shadow_margin_frac < 0.5,
          "shadow_margin_frac must be in (0, 0.5)");
  require(shadow_segments > 0, "shadow_segments must be positive");
  require(shadow_pixel_frac > 0.0 && shadow_pixel_frac <= 1.0,
          "shadow_pixel_frac must be in (0, 1]");
  require(p_brightness > 0 && p_brightness <= 255, "p_brightness must be in (0, 255]");
  require(border_frac > 0.0 && border_frac < 0.5, "border_frac must be in (0, 0.5)");
  require(target_edge_frac > 0.0 && target_edge_frac < 0.5,
          "target_edge_frac must be in (0, 0.5)");
  require(target_edge_frac >= border_frac,
          "target_edge_frac must not be inside the border band");
  require(presence_window_s > 0.0, "presence_window_s must be positive");
  require(max_total_steps > 0, "max_total_steps must be positive");
}

const char* to_string(ShadowSide side) {
  switch (side) {
    case ShadowSide::none: return "none";
    case ShadowSide::left: return "left";
    case ShadowSide::right: return "right";
    case ShadowSide::both: return "both";
  }
  return "?";
}

const char* to_string(ScanEvent::Kind kind) {
  switch (kind) {
    case ScanEvent::Kind::init: return "init";
    case ScanEvent::Kind::presence: return "presence";
    case ScanEvent::Kind::move: return "move";
    case ScanEvent::Kind::adjust_rotation: return "adjust_rotation";
    case ScanEvent::Kind::adjust_translation: return "adjust_translation";
    case ScanEvent::Kind::warning: return "warning";
    case ScanEvent::Kind::recording_start: return "recording_start";
    case ScanEvent::Kind::recording_stop: return "recording_stop";
    case ScanEvent::Kind::done: return "done";
  }
  return "?";
}

const char* to_string(LobeSide side) { return side == LobeSide::left ? "left" : "right"; }

ShadowSide detect_shadow_side(const Image8& intensity, const ScanConfig& cfg) {
  const int w = intensity.width, h = intensity.height;
  require(w > 0 && h > 0, "shadow detector needs a non-empty image");
  require(h >= cfg.shadow_segments, "image depth smaller than shadow segment count");

  const int margin = std::max(1, static_cast<int>(std::lround(cfg.shadow_margin_frac * w)));

  auto side_dark = [&](int c0) {
    for (int b = 0; b < cfg.shadow_segments; ++b) {
      const int r0 = b * h / cfg.shadow_segments;
      const int r1 = (b + 1) * h / cfg.shadow_segments;
      int dark = 0, total = 0;
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c0 + margin; ++c) {
          ++total;
          if (intensity.at(c, r) < cfg.p_brightness) ++dark;
        }
      }
      if (dark < cfg.shadow_pixel_frac * total) return false;
    }
    return true;
  };

  const bool left = side_dark(0);
  const bool right = side_dark(w - margin);
  if (left && right) return ShadowSide::both;
  if (left) return ShadowSide::left;
  if (right) return ShadowSide::right;
  return ShadowSide::none;
}

std::optional<double> centering_offset_mm(const Image8& label, double lateral_spacing_mm,
                                          const ScanConfig& cfg) {
  const int w = label.width, h = label.height;
  require(w > 0 && h > 0, "centering needs a non-empty label image");
  const double footprint = w * lateral_spacing_mm;
  const auto u_of = [&](double col) { return (col + 0.5) * lateral_spacing_mm - footprint / 2.0; };

  std::vector<int> count(static_cast<std::size_t>(w), 0);
  int first = -1, last = -1;
  long total = 0;
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r)
      if (label.at(c, r)) ++count[c];
    if (count[c] > 0) {
      if (first < 0) first = c;
      last = c;
      total += count[c];
    }
  }
  if (total == 0) return std::nullopt;

  const int border = std::max(1, static_cast<int>(std::lround(cfg.border_frac * w)));
  const bool touch_left = first < border;
  const bool touch_right = last >= w - border;

  double delta = 0.0;
  if (touch_left && touch_right) {
    // Lobe spills over both sides: recenter on its lateral center of mass.
    double num = 0.0;
    for (int c = 0; c < w; ++c) num += count[c] * u_of(c);
    delta = num / total;
  } else if (touch_left) {
    delta = u_of(first) - (-footprint / 2.0 + cfg.target_edge_frac * footprint);
  } else if (touch_right) {
    delta = u_of(last) - (footprint / 2.0 - cfg.target_edge_frac * footprint);
  } else {
    return std::nullopt;
  }
  if (std::abs(delta) < 0.5 * lateral_spacing_mm) return std::nullopt;  // sub-pixel
  return delta;
}

bool thyroid_present(const std::deque<FrameStamp>& recent, double now_s, const ScanConfig& cfg) {
  bool any = false;
  for (auto it = recent.rbegin(); it != recent.rend(); ++it) {
    if (it->timestamp > now_s) continue;
    if (it->timestamp <= now_s - cfg.presence_window_s) break;
    any = true;
    if (!it->thyroid) return false;
  }
  return any;
}

ProbePose target_pose(const ControllerState& state, const ScanConfig& cfg) {
  ProbePose out;
  const Quat corr(rot_x(deg2rad(state.alpha_corr_deg)));
  out.rotation = (corr * state.rotation_init).normalized();
  const Vec3 local(cfg.step_size_mm * state.n_steps, state.y_corr_mm, 0.0);
  out.translation = state.translation_init + state.rotation_init * local;
  return out;
}

AdjustStep rotation_adjustment(const ControllerState& state, int sign, const ScanConfig& cfg) {
  const double next = std::clamp(state.alpha_corr_deg + sign * cfg.alpha_step_deg,
                                 -cfg.alpha_max_deg, cfg.alpha_max_deg);
  return {next, next == state.alpha_corr_deg};
}

AdjustStep centering_adjustment(const ControllerState& state, double delta_u_mm,
                                const ScanConfig& cfg) {
  const double next = std::clamp(state.y_corr_mm + delta_u_mm, -cfg.y_max_mm, cfg.y_max_mm);
  return {next, next == state.y_corr_mm};
}

int preferred_roll_sign(const ControllerState& state, const ScanContext& ctx, ShadowSide side) {
  const int fallback = side == ShadowSide::left ? 1 : -1;

  auto contact_count = [&](int sign) -> long {
    ControllerState s = state;
    s.alpha_corr_deg = rotation_adjustment(state, sign, ctx.scan).value;
    try {
      const ProbePose p =
          settle_z(target_pose(s, ctx.scan), ctx.model->surface(), ctx.imaging);
      const auto mask = contact_mask(p, ctx.model->surface(), ctx.imaging);
      return std::count(mask.begin(), mask.end(), std::uint8_t{1});
    } catch (const ScanError&) {
      return -1;  // candidate pose fell off the surface patch
    }
  };

  const long plus = contact_count(1), minus = contact_count(-1);
  if (plus > minus) return 1;
  if (minus > plus) return -1;
  return fallback;
}

ScanSession::ScanSession(const ScanContext& ctx, LobeSide lobe, std::uint64_t seed,
                         std::vector<ScanEvent>* events)
    : ctx_(ctx), lobe_(lobe), events_(events) {
  require(ctx_.model != nullptr, "scan context has no phantom model");
  ctx_.imaging.validate();
  ctx_.oracle.validate();
  ctx_.scan.validate();
  ctx_.oracle.rng_seed = seed;
  frame_period_s_ = 1.0 / ctx_.imaging.frame_rate_hz;
  n_window_ = std::max(1, static_cast<int>(std::lround(ctx_.scan.presence_window_s *
                                                       ctx_.imaging.frame_rate_hz)));
  rec_.lobe = lobe;
}

void ScanSession::tick() { t_ += frame_period_s_; }

void ScanSession::trim_buffer() {
  const double horizon = t_ - ctx_.scan.presence_window_s - 2.0 * frame_period_s_;
  while (!buffer_.empty() && buffer_.front().timestamp <= horizon) buffer_.pop_front();
}

void ScanSession::emit(ScanEvent::Kind kind, const std::string& detail, bool thyroid) {
  if (!events_) return;
  ScanEvent e;
  e.kind = kind;
  e.timestamp = t_;
  e.n_steps = state_.n_steps;
  e.alpha_corr_deg = state_.alpha_corr_deg;
  e.y_corr_mm = state_.y_corr_mm;
  e.position = current_pose_.translation;
  e.thyroid = thyroid;
  e.detail = detail;
  events_->push_back(std::move(e));
}

Frame ScanSession::render_at(const ProbePose& pose) {
  tick();
  ProbePose p = pose;
  p.timestamp = t_;
  Frame f = render_frame(p, *ctx_.model, ctx_.imaging, ctx_.oracle, frame_index_++);
  buffer_.push_back({t_, f.has_thyroid()});
  trim_buffer();
  if (recording_) rec_.frames.push_back(f);
  return f;
}

Frame ScanSession::render_current() { return render_at(current_pose_); }

void ScanSession::close_pose_segment() {
  if (!recording_) return;
  if (rec_.poses.empty() || rec_.poses.back().timestamp < t_) {
    ProbePose p = current_pose_;
    p.timestamp = t_;
    rec_.poses.push_back(p);
  }
}

// Commits the pose implied by the controller state. The change occupies one
// clock tick so pose samples never collide with rendered frames.
void ScanSession::apply_state() {
  ProbePose next = settle_z(target_pose(state_, ctx_.scan), ctx_.model->surface(), ctx_.imaging);
  close_pose_segment();
  tick();
  next.timestamp = t_;
  current_pose_ = next;
  if (recording_) rec_.poses.push_back(current_pose_);
}

void ScanSession::move_step(int dir) {
  if (++steps_taken_ > ctx_.scan.max_total_steps) {
    std::ostringstream err;
    err << "step budget (" << ctx_.scan.max_total_steps << ") exceeded scanning the "
        << to_string(lobe_) << " lobe";
    throw ScanError(err.str());
  }

  const ProbePose prev = current_pose_;
  state_.n_steps += dir;
  ProbePose next = settle_z(target_pose(state_, ctx_.scan), ctx_.model->surface(), ctx_.imaging);

  if (recording_) {
    close_pose_segment();
    for (int k = 1; k <= n_window_; ++k) {
      const double u = static_cast<double>(k) / n_window_;
      ProbePose pk;
      pk.translation = lerp(prev.translation, next.translation, u);
      pk.rotation = slerp(prev.rotation, next.rotation, u);
      render_at(pk);
    }
    next.timestamp = t_;
    current_pose_ = next;
    rec_.poses.push_back(current_pose_);
  } else {
    for (int k = 0; k < n_window_; ++k) tick();
    next.timestamp = t_;
    current_pose_ = next;
  }
  emit(ScanEvent::Kind::move);
}

void ScanSession::dwell() {
  for (int k = 0; k < n_window_; ++k) render_current();
}

bool ScanSession::presence() const { return thyroid_present(buffer_, t_, ctx_.scan); }

void ScanSession::initialize(const ProbePose& initial) {
  ProbePose p = initial;
  p.timestamp = t_;
  p = settle_z(p, ctx_.model->surface(), ctx_.imaging);
  if (!plane_contains_thyroid(p, *ctx_.model, ctx_.imaging)) {
    std::ostringstream err;
    err << "no thyroid visible under the initial placement for the " << to_string(lobe_)
        << " lobe";
    throw ScanError(err.str());
  }
  state_ = ControllerState{};
  state_.rotation_init = p.rotation.normalized();
  state_.translation_init = p.translation;
  current_pose_ = p;
  emit(ScanEvent::Kind::init);
}

void ScanSession::do_pose_adjustment(const Frame& latest) {
  const Frame* cur = &latest;
  Frame local;

  if (ctx_.scan.shadow_correction) {
    const int cap = 2 * static_cast<int>(ctx_.scan.alpha_max_deg / ctx_.scan.alpha_step_deg) + 2;
    for (int iter = 0; iter < cap; ++iter) {
      const ShadowSide side = detect_shadow_side(cur->intensity, ctx_.scan);
      if (side == ShadowSide::none) break;
      if (side == ShadowSide::both) {
        emit(ScanEvent::Kind::warning, "shadow on both image sides, leaving roll unchanged");
        break;
      }
      const int sign = preferred_roll_sign(state_, ctx_, side);
      const AdjustStep adj = rotation_adjustment(state_, sign, ctx_.scan);
      if (adj.saturated) {
        emit(ScanEvent::Kind::warning, "roll correction saturated at clamp");
        break;
      }
      state_.alpha_corr_deg = adj.value;
      apply_state();
      emit(ScanEvent::Kind::adjust_rotation, to_string(side));
      local = render_current();
      cur = &local;
    }
  }

  if (ctx_.scan.centering_correction) {
    const int cap = 16;
    double prev_abs = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < cap; ++iter) {
      const auto delta = centering_offset_mm(cur->label, ctx_.imaging.lateral_spacing_mm(),
                                             ctx_.scan);
      if (!delta) break;
      // No-progress exit: tissue attached across the border (isthmus) keeps
      // the touched edge pinned, so chasing it would drift forever.
      if (std::abs(*delta) >= prev_abs - 0.25) break;
      prev_abs = std::abs(*delta);
      const AdjustStep adj = centering_adjustment(state_, *delta, ctx_.scan);
      if (adj.saturated) {
        emit(ScanEvent::Kind::warning, "lateral correction saturated at clamp");
        break;
      }
      state_.y_corr_mm = adj.value;
      apply_state();
      emit(ScanEvent::Kind::adjust_translation);
      local = render_current();
      cur = &local;
    }
  }
}

void ScanSession::move_until_end(int dir) {
  state_.direction = dir;
  while (true) {
    dwell();
    const bool present = presence();
    emit(ScanEvent::Kind::presence, "", present);
    if (!present) break;
    move_step(dir);
    Frame f = render_current();
    do_pose_adjustment(f);
  }
}

SweepRecording ScanSession::run(const ProbePose& initial) {
  initialize(initial);

  state_.phase = ControllerState::Phase::seek_end;
  move_until_end(-1);

  state_.phase = ControllerState::Phase::recording;
  recording_ = true;
  close_pose_segment();
  emit(ScanEvent::Kind::recording_start);

  // One raw step back toward the lobe before sweeping to the other end.
  move_step(1);
  move_until_end(1);

  close_pose_segment();
  recording_ = false;
  emit(ScanEvent::Kind::recording_stop);
  state_.phase = ControllerState::Phase::done;
  emit(ScanEvent::Kind::done);
  return std::move(rec_);
}

SweepRecording scan_lobe(const ScanContext& ctx, const ProbePose& initial, LobeSide lobe,
                         std::uint64_t seed, std::vector<ScanEvent>* events) {
  ScanSession session(ctx, lobe, seed, events);
  return session.run(initial);
}

}  // namespace tvs
