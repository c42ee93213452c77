#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "curbsight/geometry.hpp"
#include "curbsight/ipcm.hpp"

namespace curbsight {

struct FitConfig {
  double d_max_cm = 500.0;  // residual weight reference
  double w_max_cm = 130.0;  // lateral position of the side boundaries
  double d_lo = 5.0, d_hi = 600.0;
  double theta_lo = -0.6, theta_hi = 0.6;
  double h_lo = 3.0, h_hi = 30.0;
  double e_lo = 5.0, e_hi = 40.0;
  int max_iterations = 80;
};

// Two or three detected edge lines in image space, ordered bottom to top:
// base, top-front, and (for a full tuple) rear.
struct LineTuple {
  std::array<Line2, 3> lines;
  int size = 0;
};

// Depth-ordered candidate tuples. A valid tuple is strictly ordered at the
// principal column, every line runs below the horizon, and no two member
// lines cross inside the frame (curb edges are near-parallel in view).
inline std::vector<LineTuple> enumerate_tuples(const std::vector<Line2>& lines,
                                               const CameraRig& rig) {
  std::vector<const Line2*> ok;
  for (const Line2& l : lines)
    if (l.v_at(rig.cx) > rig.cy + 1.0) ok.push_back(&l);
  std::sort(ok.begin(), ok.end(),
            [&](const Line2* p, const Line2* q) { return p->v_at(rig.cx) > q->v_at(rig.cx); });

  auto compatible = [&](const Line2& p, const Line2& q) {
    if (p.v_at(rig.cx) <= q.v_at(rig.cx)) return false;  // need strict depth order
    std::optional<Vec2> x = intersect_lines(p, q);
    if (!x) return true;  // parallel
    return !(x->x >= 0.0 && x->x < rig.image_width && x->y >= 0.0 && x->y < rig.image_height);
  };

  std::vector<LineTuple> out;
  size_t n = ok.size();
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      if (!compatible(*ok[i], *ok[j])) continue;
      out.push_back({{*ok[i], *ok[j], Line2()}, 2});
      for (size_t k = j + 1; k < n; ++k) {
        if (!compatible(*ok[i], *ok[k]) || !compatible(*ok[j], *ok[k])) continue;
        out.push_back({{*ok[i], *ok[j], *ok[k]}, 3});
      }
    }
  return out;
}

namespace detail {

// homogeneous image line of the road-plane boundary x = side_x_cm (it passes
// through the principal point, and may be arbitrarily close to vertical)
inline Vec3 boundary_line(const CameraRig& rig, double side_x_cm) {
  return {rig.fy * rig.height_cm, -rig.fx * side_x_cm,
          rig.fx * side_x_cm * rig.cy - rig.fy * rig.height_cm * rig.cx};
}

inline double dforward_v(double v, const RemapConfig& cfg) {
  double y = v - cfg.cy;
  return cfg.y0 * (2.0 / y - 1.0 / (y - 0.5));
}

}  // namespace detail

// Remapped row where a detected line crosses the side boundary. The boundary
// maps to one fixed warped column, so a single row pins the crossing.
inline double target_row(const Line2& line, double side_x_cm, const CameraRig& rig,
                         const RemapConfig& cfg) {
  std::optional<Vec2> p = intersect_homogeneous(line.homogeneous(), detail::boundary_line(rig, side_x_cm));
  if (!p) throw DegenerateIntersection();
  return forward_v(p->y, cfg);
}

// 2*size boundary-crossing rows of a tuple, ordered line-major: base left,
// base right, top left, top right, rear left, rear right.
inline std::array<double, 6> target_rows(const LineTuple& t, const CameraRig& rig,
                                         const RemapConfig& cfg, double w_max_cm) {
  std::array<double, 6> rows{};
  for (int i = 0; i < t.size; ++i) {
    rows[2 * i] = target_row(t.lines[i], -w_max_cm, rig, cfg);
    rows[2 * i + 1] = target_row(t.lines[i], w_max_cm, rig, cfg);
  }
  return rows;
}

// Model-predicted boundary-crossing rows for a curb state, same order. The
// crossing of curb edge i with boundary s has the closed form
//   x* = s * w_max * y_i / H_C,   z* = d_i + x* tan(theta),
//   v* = c_y + f_y y_i / z*
// with y_i the edge's height below the camera and d_i its centre depth; for
// the base edge z* ranges to exactly D + s*w_max*tan(theta), and the rear
// edge's centre depth is offset by the across-curb width, E/cos(theta).
inline std::array<double, 6> template_rows(const CurbState& s, int size, const CameraRig& rig,
                                           const RemapConfig& cfg, double w_max_cm) {
  double tan_t = std::tan(s.theta_rad);
  std::array<double, 6> rows{};
  for (int i = 0; i < size; ++i) {
    double y = i == 0 ? rig.height_cm : rig.height_cm - s.h_cm;
    double d = s.d_cm + (i == 2 ? s.e_cm / std::cos(s.theta_rad) : 0.0);
    for (int side = 0; side < 2; ++side) {
      double xs = (side == 0 ? -1.0 : 1.0) * w_max_cm * y / rig.height_cm;
      double z = d + xs * tan_t;
      if (z <= 0.0) throw NonPositiveDepth();
      rows[2 * i + side] = forward_v(rig.cy + rig.fy * y / z, cfg);
    }
  }
  return rows;
}

// Derivatives of the template rows with respect to (D, theta, H, E), again
// line-major; columns beyond the parameter count of a pair are zero.
inline std::array<std::array<double, 4>, 6> template_row_jacobian(const CurbState& s, int size,
                                                                  const CameraRig& rig,
                                                                  const RemapConfig& cfg,
                                                                  double w_max_cm) {
  double tan_t = std::tan(s.theta_rad);
  double sec2 = 1.0 + tan_t * tan_t;
  double cos_t = std::cos(s.theta_rad);
  std::array<std::array<double, 4>, 6> jac{};
  for (int i = 0; i < size; ++i) {
    double y = i == 0 ? rig.height_cm : rig.height_cm - s.h_cm;
    double dy_dh = i == 0 ? 0.0 : -1.0;
    double d = s.d_cm + (i == 2 ? s.e_cm / cos_t : 0.0);
    double dd_dtheta = i == 2 ? s.e_cm * tan_t / cos_t : 0.0;
    double dd_de = i == 2 ? 1.0 / cos_t : 0.0;
    for (int side = 0; side < 2; ++side) {
      double sgn = side == 0 ? -1.0 : 1.0;
      double xs = sgn * w_max_cm * y / rig.height_cm;
      double dxs_dh = sgn * w_max_cm * dy_dh / rig.height_cm;
      double z = d + xs * tan_t;
      if (z <= 0.0) throw NonPositiveDepth();
      double v = rig.cy + rig.fy * y / z;
      double dv_dy = rig.fy / z;
      double dv_dz = -rig.fy * y / (z * z);
      double chain = detail::dforward_v(v, cfg);
      double dz_dd = 1.0;
      double dz_dtheta = dd_dtheta + xs * sec2;
      double dz_dh = dxs_dh * tan_t;
      double dz_de = dd_de;
      auto& row = jac[2 * i + side];
      row[0] = chain * dv_dz * dz_dd;
      row[1] = chain * dv_dz * dz_dtheta;
      row[2] = chain * (dv_dy * dy_dh + dv_dz * dz_dh);
      row[3] = chain * dv_dz * dz_de;
    }
  }
  return jac;
}

// Starting state read directly off the tuple at the principal column: range
// the base row for depth, tilt from the base slope, height from the
// top-front row, width from the rear row's extra depth.
inline CurbState init_state(const LineTuple& t, const CameraRig& rig, const FitConfig& fc) {
  double v1 = t.lines[0].v_at(rig.cx);
  double v2 = t.lines[1].v_at(rig.cx);
  if (v1 <= rig.cy + 1.0 || v2 <= rig.cy + 1.0) throw AtOrAboveHorizon();
  CurbState s;
  s.d_cm = rig.fy * rig.height_cm / (v1 - rig.cy);
  double tan_t = -t.lines[0].a() * rig.fx * s.d_cm / (rig.fy * rig.height_cm);
  s.theta_rad = std::atan(tan_t);
  s.h_cm = rig.height_cm - s.d_cm * (v2 - rig.cy) / rig.fy;
  s.e_cm = 0.0;
  if (t.size == 3) {
    double v3 = t.lines[2].v_at(rig.cx);
    if (v3 <= rig.cy + 1.0) throw AtOrAboveHorizon();
    double z3 = rig.fy * (rig.height_cm - s.h_cm) / (v3 - rig.cy);
    s.e_cm = (z3 - s.d_cm) * std::cos(s.theta_rad);
  }
  s.d_cm = std::clamp(s.d_cm, fc.d_lo, fc.d_hi);
  s.theta_rad = std::clamp(s.theta_rad, fc.theta_lo, fc.theta_hi);
  s.h_cm = std::clamp(s.h_cm, fc.h_lo, fc.h_hi);
  if (t.size == 3) s.e_cm = std::clamp(s.e_cm, fc.e_lo, fc.e_hi);
  return s;
}

struct FitResult {
  CurbState state;
  double rms = 0.0;  // weighted remapped-row residual
  int iterations = 0;
  bool converged = false;
};

namespace detail {

// solve A x = b for small symmetric positive-ish systems, in place
template <int N>
inline bool solve_small(std::array<std::array<double, N>, N> a, std::array<double, N>& b) {
  for (int c = 0; c < N; ++c) {
    int piv = c;
    for (int r = c + 1; r < N; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (std::abs(a[piv][c]) < 1e-300) return false;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (int r = c + 1; r < N; ++r) {
      double f = a[r][c] / a[c][c];
      for (int cc = c; cc < N; ++cc) a[r][cc] -= f * a[c][cc];
      b[r] -= f * b[c];
    }
  }
  for (int c = N - 1; c >= 0; --c) {
    for (int cc = c + 1; cc < N; ++cc) b[c] -= a[c][cc] * b[cc];
    b[c] /= a[c][c];
  }
  return true;
}

inline CurbState clamp_state(CurbState s, int size, const FitConfig& fc) {
  s.d_cm = std::clamp(s.d_cm, fc.d_lo, fc.d_hi);
  s.theta_rad = std::clamp(s.theta_rad, fc.theta_lo, fc.theta_hi);
  s.h_cm = std::clamp(s.h_cm, fc.h_lo, fc.h_hi);
  s.e_cm = size == 3 ? std::clamp(s.e_cm, fc.e_lo, fc.e_hi) : 0.0;
  return s;
}

}  // namespace detail

// Weighted residual vector between the tuple's measured boundary rows and the
// state's predicted ones. Rows are weighted by sqrt(D/d_max): one remapped
// row spans depth proportional to D, so this evens out the depth error that
// one row of residual represents across the range.
inline std::array<double, 6> fit_residuals(const std::array<double, 6>& target,
                                           const CurbState& s, int size, const CameraRig& rig,
                                           const RemapConfig& cfg, const FitConfig& fc) {
  std::array<double, 6> r{};
  std::array<double, 6> model = template_rows(s, size, rig, cfg, fc.w_max_cm);
  double w = std::sqrt(std::max(s.d_cm, 1e-6) / fc.d_max_cm);
  for (int i = 0; i < 2 * size; ++i) r[i] = w * (target[i] - model[i]);
  return r;
}

// Analytic Jacobian of the weighted residuals with respect to the state.
inline std::array<std::array<double, 4>, 6> fit_jacobian(const std::array<double, 6>& target,
                                                         const CurbState& s, int size,
                                                         const CameraRig& rig,
                                                         const RemapConfig& cfg,
                                                         const FitConfig& fc) {
  std::array<std::array<double, 4>, 6> jac{};
  std::array<std::array<double, 4>, 6> mj = template_row_jacobian(s, size, rig, cfg, fc.w_max_cm);
  std::array<double, 6> model = template_rows(s, size, rig, cfg, fc.w_max_cm);
  double d = std::max(s.d_cm, 1e-6);
  double w = std::sqrt(d / fc.d_max_cm);
  double dw_dd = 0.5 / std::sqrt(d * fc.d_max_cm);
  for (int i = 0; i < 2 * size; ++i) {
    for (int k = 0; k < 4; ++k) jac[i][k] = -w * mj[i][k];
    jac[i][0] += dw_dd * (target[i] - model[i]);
  }
  return jac;
}

// Finite-difference Jacobian (central differences with the module's pinned
// steps); the reference implementation the analytic one is held against.
inline std::array<std::array<double, 4>, 6> fit_jacobian_fd(const std::array<double, 6>& target,
                                                            const CurbState& s, int size,
                                                            const CameraRig& rig,
                                                            const RemapConfig& cfg,
                                                            const FitConfig& fc) {
  static constexpr double kSteps[4] = {0.1, 1e-3, 0.05, 0.05};
  std::array<std::array<double, 4>, 6> jac{};
  int params = size == 3 ? 4 : 3;
  for (int k = 0; k < params; ++k) {
    CurbState lo = s, hi = s;
    double* flo[4] = {&lo.d_cm, &lo.theta_rad, &lo.h_cm, &lo.e_cm};
    double* fhi[4] = {&hi.d_cm, &hi.theta_rad, &hi.h_cm, &hi.e_cm};
    *flo[k] -= kSteps[k];
    *fhi[k] += kSteps[k];
    std::array<double, 6> rlo = fit_residuals(target, lo, size, rig, cfg, fc);
    std::array<double, 6> rhi = fit_residuals(target, hi, size, rig, cfg, fc);
    for (int i = 0; i < 2 * size; ++i) jac[i][k] = (rhi[i] - rlo[i]) / (2.0 * kSteps[k]);
  }
  return jac;
}

// Levenberg-Marquardt refinement of a curb state against a tuple's boundary
// rows. States that push a boundary crossing to or above the horizon act as
// a barrier (the trial step is rejected). Pairs fix E at zero and fit three
// parameters; full tuples fit all four.
inline FitResult fit_curb(const LineTuple& t, const CameraRig& rig, const RemapConfig& cfg,
                          const FitConfig& fc = {},
                          const std::optional<CurbState>& init = std::nullopt) {
  if (t.size != 2 && t.size != 3) throw DegenerateFit("tuple needs two or three lines");
  for (int i = 1; i < t.size; ++i)
    if (t.lines[i - 1].v_at(rig.cx) <= t.lines[i].v_at(rig.cx))
      throw DegenerateFit("tuple rows not ordered bottom to top");

  std::array<double, 6> target = target_rows(t, rig, cfg, fc.w_max_cm);
  int n = 2 * t.size;
  int params = t.size == 3 ? 4 : 3;

  CurbState x = detail::clamp_state(init ? *init : init_state(t, rig, fc), t.size, fc);
  auto cost_of = [&](const CurbState& s, std::array<double, 6>& r) {
    r = fit_residuals(target, s, t.size, rig, cfg, fc);
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += r[i] * r[i];
    return c;
  };

  std::array<double, 6> r{};
  double cost = cost_of(x, r);
  double lambda = 1e-3;
  FitResult out;
  int iter = 0;
  for (; iter < fc.max_iterations && !out.converged; ++iter) {
    std::array<std::array<double, 4>, 6> jac = fit_jacobian(target, x, t.size, rig, cfg, fc);
    std::array<std::array<double, 4>, 4> jtj{};
    std::array<double, 4> jtr{};
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < params; ++a) {
        jtr[a] += jac[i][a] * r[i];
        for (int b = 0; b < params; ++b) jtj[a][b] += jac[i][a] * jac[i][b];
      }

    bool stepped = false;
    for (int attempt = 0; attempt < 12 && !stepped; ++attempt) {
      std::array<std::array<double, 4>, 4> a = jtj;
      for (int k = 0; k < params; ++k) a[k][k] += lambda * std::max(jtj[k][k], 1e-12);
      for (int k = params; k < 4; ++k) a[k][k] = 1.0;
      std::array<double, 4> delta{};
      for (int k = 0; k < params; ++k) delta[k] = -jtr[k];
      if (!detail::solve_small<4>(a, delta)) {
        lambda *= 8.0;
        continue;
      }
      CurbState trial = x;
      trial.d_cm += delta[0];
      trial.theta_rad += delta[1];
      trial.h_cm += delta[2];
      if (params == 4) trial.e_cm += delta[3];
      trial = detail::clamp_state(trial, t.size, fc);
      std::array<double, 6> r_trial{};
      double cost_trial;
      try {
        cost_trial = cost_of(trial, r_trial);
      } catch (const Error&) {
        lambda *= 8.0;  // barrier: crossing left the valid depth range
        continue;
      }
      if (cost_trial < cost) {
        double drop = cost - cost_trial;
        x = trial;
        r = r_trial;
        cost = cost_trial;
        lambda = std::max(lambda / 8.0, 1e-10);
        stepped = true;
        if (drop < 1e-14 * (1.0 + cost)) out.converged = true;  // stationary
      } else {
        lambda *= 8.0;
      }
    }
    if (!stepped) {
      // no acceptable step in any damping regime: stalled at a minimum
      out.converged = cost < 1e-8 || lambda > 1e8;
      ++iter;
      break;
    }
  }
  out.state = x;
  out.state.e_cm = t.size == 3 ? x.e_cm : 0.0;
  out.rms = std::sqrt(cost / n);
  out.iterations = iter;
  return out;
}

struct Candidate {
  LineTuple tuple;
  FitResult fit;
};

// Fit every admissible tuple of the detected lines; candidates come back
// sorted by ascending residual. Tuples whose fit degenerates are dropped.
inline std::vector<Candidate> build_candidate_set(const std::vector<Line2>& lines,
                                                  const CameraRig& rig, const RemapConfig& cfg,
                                                  const FitConfig& fc = {}) {
  std::vector<Candidate> out;
  for (const LineTuple& t : enumerate_tuples(lines, rig)) {
    try {
      out.push_back({t, fit_curb(t, rig, cfg, fc)});
    } catch (const Error&) {
      continue;
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Candidate& a, const Candidate& b) { return a.fit.rms < b.fit.rms; });
  return out;
}

}  // namespace curbsight
