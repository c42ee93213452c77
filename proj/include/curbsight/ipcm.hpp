#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "curbsight/geometry.hpp"
#include "curbsight/image.hpp"

namespace curbsight {

// Row remap that undoes the perspective compression of the road plane: after
// the remap, one warped pixel row covers the same road depth everywhere, the
// sampling rate of the reference range d_hat_max. Rows are remapped with
//
//   v~ = y0 * ln((v - cy)^2 / (y0 * (v - cy - 1/2))) - 1/2,   y0 = fy*Hc/d_hat_max,
//
// columns with u~ = y0 * (u - cx) / (v - cy) + cx, which keeps equal road
// widths equally wide in pixels. d_hat_max is snapped to the largest range
// at an integer pixel row not exceeding the requested far limit, so the map
// never interpolates below the native sampling rate.
struct RemapConfig {
  double cx = 0.0;
  double cy = 0.0;
  double y0 = 0.0;
  double d_hat_max_cm = 0.0;
  int reference_row = 0;  // integer row that ranges exactly to d_hat_max
  bool nearest = false;   // debug: nearest-neighbour sampling in warps

  static RemapConfig create(const CameraRig& rig, double d_far_cm, bool nearest = false) {
    if (d_far_cm <= 0.0) throw NonPositiveDistance();
    int row = static_cast<int>(std::ceil(rig.cy + rig.fy * rig.height_cm / d_far_cm));
    if (row <= rig.cy + 1.0) row = static_cast<int>(std::floor(rig.cy + 2.0));
    if (row >= rig.image_height) throw ConfigError("far limit not visible in the frame");
    RemapConfig cfg;
    cfg.cx = rig.cx;
    cfg.cy = rig.cy;
    cfg.reference_row = row;
    cfg.y0 = row - rig.cy;
    cfg.d_hat_max_cm = distance_from_row(static_cast<double>(row), rig);
    cfg.nearest = nearest;
    if (!(cfg.y0 > 1.0)) throw ConfigError("reference row too close to the horizon");
    return cfg;
  }
};

inline double forward_v(double v, const RemapConfig& cfg) {
  double y = v - cfg.cy;
  if (!(y > 0.5)) throw RowAboveReference("row too close to the horizon for the remap");
  return cfg.y0 * std::log(y * y / (cfg.y0 * (y - 0.5))) - 0.5;
}

inline double forward_u(double u, double v, const RemapConfig& cfg) {
  double y = v - cfg.cy;
  if (!(y > 0.0)) throw RowAboveReference("column remap needs a row below the horizon");
  return cfg.y0 * (u - cfg.cx) / y + cfg.cx;
}

inline Vec2 forward_map(const Vec2& p, const RemapConfig& cfg) {
  return {forward_u(p.x, p.y, cfg), forward_v(p.y, cfg)};
}

// Exact row remap as the partial sum y0 * sum_{i=1..n} 1/(y0+i) for the
// integer row n steps below the reference row. Evaluated in extended
// precision; the closed form above approximates this within 2e-3 px.
inline double open_form_v(int v, const RemapConfig& cfg) {
  if (v < cfg.reference_row) throw RowAboveReference("open form starts at the reference row");
  int n = v - cfg.reference_row;
  long double y0 = static_cast<long double>(cfg.y0);
  long double acc = 0.0L;
  for (int i = 1; i <= n; ++i) acc += 1.0L / (y0 + i);
  return static_cast<double>(y0 * acc);
}

// Valid whenever the target row is at least one pixel below the horizon;
// that is exactly m >= 2, so the discriminant check covers the domain.
inline double inverse_v(double v_warped, const RemapConfig& cfg) {
  double m = cfg.y0 * std::exp((v_warped + 0.5) / cfg.y0);
  double disc = m * (m - 2.0);
  if (disc < 0.0) throw NegativeDiscriminant();
  return 0.5 * (m + std::sqrt(disc)) + cfg.cy;
}

inline Vec2 inverse_map(const Vec2& p, const RemapConfig& cfg) {
  double v = inverse_v(p.y, cfg);
  double u = (p.x - cfg.cx) * (v - cfg.cy) / cfg.y0 + cfg.cx;
  return {u, v};
}

// Warped depth slice plus the transform between its raster and remap space:
// raster column j covers u~ = u_min + j * u_scale, raster row i covers
// v~ = v_top + i.
struct WarpedCsr {
  ImageU8 image;
  RemapConfig cfg;
  double u_min = 0.0;
  double v_top = 0.0;
  double u_scale = 1.0;

  Vec2 raster_to_remap(const Vec2& p) const { return {u_min + p.x * u_scale, v_top + p.y}; }
  Vec2 remap_to_raster(const Vec2& p) const { return {(p.x - u_min) / u_scale, p.y - v_top}; }
};

// Resample the slice's trapezoid into a rectangle. Output height keeps unit
// scale in remapped rows; output width is the slice's bottom-row pixel width
// clamped to the frame, spread over the remapped horizontal extent of the
// search region. Pixels that pull from outside the frame read as 0.
//
// The row band extends above the slice's own ground rows by headroom for the
// raised curb: a curb based at the far end of the slice projects its top and
// rear edges above the far boundary row, and those edges must stay inside
// the warped raster to be detectable.
inline WarpedCsr warp_csr(const ImageU8& frame, const Csr& csr, const CameraRig& rig,
                          const CddConfig& cdd, const RemapConfig& cfg,
                          double headroom_h_cm = 30.0, double headroom_e_cm = 40.0) {
  if (frame.empty()) throw EmptyImage();
  csr.validate(cdd);
  WarpedCsr w;
  w.cfg = cfg;
  double v_near = row_from_distance(csr.d_near_cm, rig);
  double top_height = std::max(2.0, rig.height_cm - std::max(0.0, headroom_h_cm));
  double v_far = rig.cy + rig.fy * top_height / (csr.d_far_cm + std::max(0.0, headroom_e_cm));
  v_far = std::max(v_far, rig.cy + 1.5);
  w.v_top = forward_v(v_far, cfg);
  double v_bottom = forward_v(v_near, cfg);
  int out_h = std::max(1, static_cast<int>(std::ceil(v_bottom - w.v_top)));
  double half = rig.fx * cdd.w_max_cm / cfg.d_hat_max_cm;
  w.u_min = cfg.cx - half;
  double bottom_width = 2.0 * rig.fx * cdd.w_max_cm / csr.d_near_cm;
  int out_w = static_cast<int>(std::lround(std::min(bottom_width, double(rig.image_width))));
  out_w = std::max(out_w, 2);
  w.u_scale = 2.0 * half / out_w;
  w.image = ImageU8(out_w, out_h);
  // lowest remapped row whose source row still sits a pixel below the horizon
  double remap_floor = forward_v(cfg.cy + 1.05, cfg);
  for (int i = 0; i < out_h; ++i) {
    // each output row owns a unit interval of remapped rows; near the bottom
    // that interval spans several source rows, so integrate over it instead
    // of point sampling or the edge phase is lost to subsampling
    double rv_lo = std::max(w.v_top + i - 0.5, remap_floor);
    double rv_hi = std::max(w.v_top + i + 0.5, remap_floor);
    double v_lo = inverse_v(rv_lo, cfg);
    double v_hi = inverse_v(rv_hi, cfg);
    int taps = cfg.nearest ? 1 : std::clamp(static_cast<int>(std::ceil(v_hi - v_lo)), 1, 8);
    for (int j = 0; j < out_w; ++j) {
      double ru = w.u_min + j * w.u_scale;
      double val = 0.0;
      for (int t = 0; t < taps; ++t) {
        double rv = taps == 1 ? w.v_top + i : rv_lo + (rv_hi - rv_lo) * (t + 0.5) / taps;
        Vec2 src = inverse_map({ru, std::max(rv, remap_floor)}, cfg);
        // clamp vertically: the rounded-up output height can push the last
        // row a few source pixels past the frame, and a blend toward the
        // outside fill would paint a spurious edge along the raster bottom
        src.y = std::min(src.y, frame.height - 1.0);
        val += cfg.nearest ? sample_nearest(frame, src.x, src.y)
                           : sample_bilinear(frame, src.x, src.y);
      }
      w.image.at(j, i) = clamp_u8(val / taps);
    }
  }
  return w;
}

// Image line traced into warp raster coordinates. Solves the forward map
// column by column and fits over the samples that land inside the raster's
// row band; the warped trace of a straight image line is only nearly
// straight, the fit residual reports how nearly.
inline LineFit map_line_to_warped(const Line2& line, const WarpedCsr& w) {
  std::vector<Vec2> pts;
  int n = std::max(32, w.image.width / 8);
  for (int k = 0; k < n; ++k) {
    double j = (w.image.width - 1) * double(k) / (n - 1);
    double ut = w.u_min + j * w.u_scale;
    // u with forward_u(u, line(u)) == ut
    double denom = w.cfg.y0 - line.a() * (ut - w.cfg.cx);
    if (std::abs(denom) < 1e-9) continue;
    double u = (w.cfg.y0 * w.cfg.cx + (ut - w.cfg.cx) * (line.b() - w.cfg.cy)) / denom;
    double v = line.v_at(u);
    if (v - w.cfg.cy <= 0.5) continue;
    Vec2 r = w.remap_to_raster(forward_map({u, v}, w.cfg));
    if (r.y < -2.0 || r.y > w.image.height + 2.0) continue;
    pts.push_back({j, r.y});
  }
  if (pts.size() < 8) throw DegenerateFit("line leaves the remapped band");
  return least_squares_line(pts);
}

// Line detected in the warp raster expressed back in image coordinates,
// least-squares over sample points spread across the raster columns where
// the line stays inside the raster's row band.
inline LineFit map_line_to_original(const Line2& line, const WarpedCsr& w, int n_points = 16) {
  n_points = std::max(n_points, 8);
  double j_lo = 0.0;
  double j_hi = w.image.width - 1.0;
  if (std::abs(line.a()) > 1e-12) {
    double pad = 2.0;
    double j1 = (-pad - line.b()) / line.a();
    double j2 = (w.image.height + pad - line.b()) / line.a();
    j_lo = std::max(j_lo, std::min(j1, j2));
    j_hi = std::min(j_hi, std::max(j1, j2));
  }
  if (!(j_hi > j_lo + 1.0)) throw DegenerateFit("line misses the raster band");
  std::vector<Vec2> pts;
  for (int k = 0; k < n_points; ++k) {
    double j = j_lo + (j_hi - j_lo) * double(k) / (n_points - 1);
    Vec2 remap = w.raster_to_remap({j, line.v_at(j)});
    pts.push_back(inverse_map(remap, w.cfg));
  }
  if (pts.size() < 8) throw DegenerateFit("too few mappable points");
  return least_squares_line(pts);
}

}  // namespace curbsight
