#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "curbsight/geometry.hpp"
#include "curbsight/image.hpp"

namespace curbsight {

inline constexpr double kTau = 6.283185307179586476925;

// Deterministic normal sampler (Box-Muller over mt19937_64) so rendered
// frames are bit-identical for a given seed on every standard library.
class GaussianRng {
 public:
  explicit GaussianRng(uint64_t seed) : rng_(seed) {}

  double uniform() { return (rng_() >> 11) * 0x1.0p-53 + 0x1.0p-54; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double r = std::sqrt(-2.0 * std::log(uniform()));
    double t = 6.283185307179586476925 * uniform();
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::mt19937_64 rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Surface intensities and disturbances of a rendered scene. "clear" throws a
// hard shadow band on the road (crisp spurious edges); "shadow" lowers the
// contrast and adds a soft vertical gradient instead. The optional stripe is
// a painted road marking: a classic curb look-alike for the detector.
struct Photometry {
  double road = 95.0;
  double face = 168.0;
  double top = 222.0;
  double beyond = 135.0;
  double noise_sigma = 0.0;
  double texture_amp = 0.0;
  std::string preset = "clear";
  bool stripe = false;
  double stripe_d_cm = 320.0;
  double stripe_width_cm = 25.0;
  double stripe_delta = 34.0;

  static Photometry clear_day(double noise = 4.0, double texture = 0.0) {
    Photometry p;
    p.noise_sigma = noise;
    p.texture_amp = texture;
    return p;
  }

  static Photometry soft_shadow(double noise = 4.0, double texture = 0.0) {
    Photometry p;
    p.preset = "shadow";
    p.noise_sigma = noise;
    p.texture_amp = texture;
    return p;
  }
};

// Per-frame ground truth. Edge lines are the exact image lines of the three
// curb edges (base, top-front, rear); zeroed when no curb is in the scene.
struct FrameTruth {
  int frame = 0;
  bool present = false;
  bool partial = false;
  CurbState state;
  Line2 e1, e2, e3;
};

namespace detail {

struct SceneShader {
  const CameraRig& rig;
  const Photometry& ph;
  bool curb = false;
  CurbState st;
  Line2 e1, e2, e3;
  double shadow_near_row = -1.0, shadow_far_row = -1.0;
  double stripe_near_row = -1.0, stripe_far_row = -1.0;

  SceneShader(const std::optional<CurbState>& s, const CameraRig& r, const Photometry& p)
      : rig(r), ph(p) {
    if (s) {
      curb = true;
      st = *s;
      e1 = project_curb_edge(st, rig, CurbEdge::base);
      e2 = project_curb_edge(st, rig, CurbEdge::top_front);
      e3 = project_curb_edge(st, rig, CurbEdge::rear);
    }
    if (ph.preset == "clear") {
      double d = curb ? st.d_cm : 320.0;
      shadow_far_row = rig.cy + rig.fy * rig.height_cm / (1.38 * d);
      shadow_near_row = rig.cy + rig.fy * rig.height_cm / (1.18 * d);
    }
    if (ph.stripe) {
      stripe_near_row = rig.cy + rig.fy * rig.height_cm / ph.stripe_d_cm;
      stripe_far_row = rig.cy + rig.fy * rig.height_cm / (ph.stripe_d_cm + ph.stripe_width_cm);
    }
  }

  // 0 road, 1 frontal face, 2 top face, 3 beyond/background
  int classify(double u, double v) const {
    if (!curb) return v > rig.cy ? 0 : 3;
    if (v > e1.v_at(u)) return v > rig.cy ? 0 : 3;
    if (v > e2.v_at(u)) return 1;
    if (v > e3.v_at(u)) return 2;
    return 3;
  }

  double texture(int cls, double u, double v) const {
    if (ph.texture_amp <= 0.0) return 0.0;
    if (cls == 1) {
      double tan_t = std::tan(st.theta_rad);
      double r = (u - rig.cx) / rig.fx;
      double denom = 1.0 - tan_t * r;
      if (std::abs(denom) < 1e-6) return 0.0;
      double x = st.d_cm * r / denom;  // lateral position on the face
      return ph.texture_amp * (0.55 * std::sin(kTau * x / 7.3) +
                               0.35 * std::sin(kTau * x / 3.1 + 1.2));
    }
    if (v <= rig.cy + 0.5) return 0.0;
    if (cls == 0) {
      double z = rig.fy * rig.height_cm / (v - rig.cy);
      double x = z * (u - rig.cx) / rig.fx;
      return 0.35 * ph.texture_amp * std::sin(kTau * x / 23.0) *
             std::sin(kTau * z / 31.0);
    }
    if (cls == 2) {
      double y = rig.height_cm - st.h_cm;
      if (y <= 1.0) return 0.0;
      double z = rig.fy * y / (v - rig.cy);
      double x = z * (u - rig.cx) / rig.fx;
      return 0.25 * ph.texture_amp * std::sin(kTau * x / 12.0);
    }
    return 0.0;
  }

  double shade(double u, double v) const {
    int cls = classify(u, v);
    double levels[4] = {ph.road, ph.face, ph.top, ph.beyond};
    double val = levels[cls] + texture(cls, u, v);
    if (cls == 0) {
      if (stripe_near_row > 0.0 && v > stripe_far_row && v <= stripe_near_row)
        val += ph.stripe_delta;
      if (shadow_near_row > 0.0 && v > shadow_far_row && v <= shadow_near_row) val -= 40.0;
    }
    if (ph.preset == "shadow")
      val = 0.85 * val + 14.0 * (1.0 - v / std::max(1, rig.image_height));
    return val;
  }

  // distance from (u, v) to the nearest shading discontinuity in rows
  double edge_distance(double u, double v) const {
    double d = 1e9;
    auto upd = [&](double row) { d = std::min(d, std::abs(v - row)); };
    if (curb) {
      upd(e1.v_at(u));
      upd(e2.v_at(u));
      upd(e3.v_at(u));
    }
    if (shadow_near_row > 0.0) {
      upd(shadow_near_row);
      upd(shadow_far_row);
    }
    if (stripe_near_row > 0.0) {
      upd(stripe_near_row);
      upd(stripe_far_row);
    }
    return d;
  }
};

}  // namespace detail

struct RenderedFrame {
  ImageU8 image;
  FrameTruth truth;
};

// Analytic render of a flat road with an optional raised curb, viewed by the
// rig. Pixels near a shading discontinuity are 2x2 supersampled; Gaussian
// noise is seeded per frame. A curb with no visible pixel is recorded with
// present=false rather than raised as an error.
inline RenderedFrame render_frame(const std::optional<CurbState>& state, const CameraRig& rig,
                                  const Photometry& ph, uint64_t seed, int frame_index = 0) {
  rig.validate();
  detail::SceneShader shader(state, rig, ph);
  RenderedFrame out;
  out.image = ImageU8(rig.image_width, rig.image_height);
  out.truth.frame = frame_index;

  GaussianRng noise(seed);
  for (int y = 0; y < rig.image_height; ++y) {
    for (int x = 0; x < rig.image_width; ++x) {
      double u = static_cast<double>(x);
      double v = static_cast<double>(y);
      double val;
      if (shader.edge_distance(u, v) < 1.5) {
        val = 0.25 * (shader.shade(u - 0.25, v - 0.25) + shader.shade(u + 0.25, v - 0.25) +
                      shader.shade(u - 0.25, v + 0.25) + shader.shade(u + 0.25, v + 0.25));
      } else {
        val = shader.shade(u, v);
      }
      if (ph.noise_sigma > 0.0) val += ph.noise_sigma * noise.normal();
      out.image.at(x, y) = clamp_u8(val);
    }
  }

  if (state) {
    out.truth.state = *state;
    out.truth.e1 = shader.e1;
    out.truth.e2 = shader.e2;
    out.truth.e3 = shader.e3;
    bool visible = false;
    bool clipped = false;
    for (double u : {0.0, 0.25 * rig.image_width, 0.5 * rig.image_width, 0.75 * rig.image_width,
                     rig.image_width - 1.0}) {
      double v1 = shader.e1.v_at(u);
      double v2 = shader.e2.v_at(u);
      if (v1 > rig.image_height) clipped = true;
      if (v2 < 0.0) clipped = true;
      if (std::min(v1, double(rig.image_height)) > std::max(v2, 0.0)) visible = true;
    }
    out.truth.present = visible;
    out.truth.partial = visible && clipped;
  }
  return out;
}

struct TrajectoryParams {
  double d_start_cm = 500.0;
  double d_end_cm = 100.0;
  double speed_cm_s = 60.0;
  double fps = 21.0;
  double theta0_rad = 0.0;
  double theta_drift_rad_s = 0.0;
  double h_cm = 12.0;
  double e_cm = 20.0;
  double jitter_d_cm = 0.0;
  double jitter_theta_rad = 0.0;
  uint64_t seed = 1;
};

// Constant-speed approach toward the curb with optional yaw drift and
// per-frame pose jitter. The ground truth records the jittered pose.
inline std::vector<CurbState> make_approach_trajectory(const TrajectoryParams& p) {
  if (p.d_start_cm <= p.d_end_cm || p.speed_cm_s <= 0.0 || p.fps <= 0.0)
    throw ConfigError("approach needs d_start > d_end and positive speed/fps");
  GaussianRng rng(p.seed);
  std::vector<CurbState> traj;
  double step = p.speed_cm_s / p.fps;
  int n = static_cast<int>(std::floor((p.d_start_cm - p.d_end_cm) / step)) + 1;
  for (int t = 0; t < n; ++t) {
    CurbState s;
    s.d_cm = p.d_start_cm - step * t;
    s.theta_rad = p.theta0_rad + p.theta_drift_rad_s * t / p.fps;
    s.h_cm = p.h_cm;
    s.e_cm = p.e_cm;
    if (p.jitter_d_cm > 0.0) s.d_cm += p.jitter_d_cm * rng.normal();
    if (p.jitter_theta_rad > 0.0) s.theta_rad += p.jitter_theta_rad * rng.normal();
    traj.push_back(s);
  }
  return traj;
}

inline std::vector<RenderedFrame> render_sequence(const std::vector<CurbState>& traj,
                                                  const CameraRig& rig, const Photometry& ph,
                                                  uint64_t base_seed) {
  std::vector<RenderedFrame> frames;
  frames.reserve(traj.size());
  for (size_t t = 0; t < traj.size(); ++t)
    frames.push_back(
        render_frame(traj[t], rig, ph, base_seed + 0x9e3779b97f4a7c15ULL * (t + 1), int(t)));
  return frames;
}

inline const char* kTruthCsvHeader = "frame,present,partial,D_cm,theta_rad,H_cm,E_cm,a1,b1,a2,b2,a3,b3";

inline void write_truth_csv(const std::string& path, const std::vector<FrameTruth>& truths) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << kTruthCsvHeader << "\n";
  char buf[512];
  for (const FrameTruth& t : truths) {
    std::snprintf(buf, sizeof buf,
                  "%d,%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  t.frame, t.present ? 1 : 0, t.partial ? 1 : 0, t.state.d_cm, t.state.theta_rad,
                  t.state.h_cm, t.state.e_cm, t.e1.a(), t.e1.b(), t.e2.a(), t.e2.b(), t.e3.a(),
                  t.e3.b());
    f << buf;
  }
  if (!f) throw IoError("short write: " + path);
}

inline std::vector<FrameTruth> read_truth_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty ground-truth file: " + path);
  if (line != kTruthCsvHeader) throw IoError("unexpected ground-truth header: " + line);
  std::vector<FrameTruth> out;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double col[13];
    for (int i = 0; i < 13; ++i) {
      std::string cell;
      if (!std::getline(ss, cell, ',')) throw IoError("short ground-truth row: " + line);
      col[i] = std::stod(cell);
    }
    FrameTruth t;
    t.frame = static_cast<int>(col[0]);
    t.present = col[1] != 0.0;
    t.partial = col[2] != 0.0;
    t.state = {col[3], col[4], col[5], col[6]};
    t.e1 = Line2(col[7], col[8]);
    t.e2 = Line2(col[9], col[10]);
    t.e3 = Line2(col[11], col[12]);
    out.push_back(t);
  }
  return out;
}

}  // namespace curbsight
