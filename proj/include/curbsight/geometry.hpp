#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "curbsight/errors.hpp"

namespace curbsight {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

// Calibrated forward-view camera over a flat road. Camera frame: x right,
// y down, z forward; the road plane is y = height_cm. Lengths in cm,
// image coordinates in pixels with v growing downward.
struct CameraRig {
  double fx = 1000.0;
  double fy = 1000.0;
  double cx = 960.0;
  double cy = 540.0;
  double height_cm = 55.0;
  int image_width = 1920;
  int image_height = 1080;

  void validate() const {
    if (fx <= 0.0 || fy <= 0.0) throw ConfigError("focal lengths must be positive");
    if (height_cm <= 0.0) throw ConfigError("camera height must be positive");
    if (image_width <= 0 || image_height <= 0) throw ConfigError("image size must be positive");
    if (cx <= 0.0 || cx >= image_width || cy <= 0.0 || cy >= image_height)
      throw ConfigError("principal point must lie inside the image");
  }
};

// Curb pose and shape: distance to the frontal face along the optical axis,
// yaw relative to the image plane, face height and top-face depth.
// e_cm == 0 marks "not estimated" (fits that use only two edge lines).
struct CurbState {
  double d_cm = 0.0;
  double theta_rad = 0.0;
  double h_cm = 0.0;
  double e_cm = 0.0;
};

// Non-vertical image line v = a*u + b. Homogeneous form [a, -1, b].
class Line2 {
 public:
  Line2() = default;
  Line2(double a, double b) : a_(a), b_(b) {
    if (!(std::abs(a) <= kMaxSlope)) throw NearVerticalLine();
  }

  double a() const { return a_; }
  double b() const { return b_; }
  double v_at(double u) const { return a_ * u + b_; }
  Vec3 homogeneous() const { return {a_, -1.0, b_}; }

  static constexpr double kMaxSlope = 5.0;

 private:
  double a_ = 0.0;
  double b_ = 0.0;
};

inline Vec2 project_point(const Vec3& p, const CameraRig& rig) {
  if (p.z <= 0.0) throw NonPositiveDepth();
  return {rig.fx * p.x / p.z + rig.cx, rig.fy * p.y / p.z + rig.cy};
}

// Road-plane range of an image row: D = f_y * H_C / (v - c_y).
inline double distance_from_row(double v, const CameraRig& rig) {
  if (v <= rig.cy) throw AtOrAboveHorizon();
  return rig.fy * rig.height_cm / (v - rig.cy);
}

inline double row_from_distance(double d_cm, const CameraRig& rig) {
  if (d_cm <= 0.0) throw NonPositiveDistance();
  return rig.cy + rig.fy * rig.height_cm / d_cm;
}

// Vertical pixels per cm of road at range D.
inline double sampling_rate(double d_cm, const CameraRig& rig) {
  if (d_cm <= 0.0) throw NonPositiveDistance();
  return rig.fy / d_cm;
}

inline std::optional<Vec2> intersect_homogeneous(const Vec3& l1, const Vec3& l2) {
  Vec3 p = cross(l1, l2);
  if (std::abs(p.z) < 1e-12) return std::nullopt;
  return Vec2{p.x / p.z, p.y / p.z};
}

// Intersection point, or nullopt for (near) parallel lines.
inline std::optional<Vec2> intersect_lines(const Line2& l1, const Line2& l2) {
  return intersect_homogeneous(l1.homogeneous(), l2.homogeneous());
}

inline Line2 line_through(const Vec2& p, const Vec2& q) {
  Vec3 l = cross(Vec3{p.x, p.y, 1.0}, Vec3{q.x, q.y, 1.0});
  if (std::abs(l.y) < 1e-12) throw NearVerticalLine("line through points is vertical");
  return Line2(-l.x / l.y, -l.z / l.y);
}

// Region of the road plane searched for curbs: |x| <= w_max, d_min <= z <= d_max.
// d_min comes from the rig (the bottom image boundary ranged back to the road).
struct CddConfig {
  double d_min_cm = 0.0;
  double d_max_cm = 500.0;
  double w_max_cm = 130.0;

  static CddConfig from_rig(const CameraRig& rig, double d_max_cm = 500.0,
                            double w_max_cm = 130.0) {
    CddConfig c;
    c.d_min_cm = distance_from_row(static_cast<double>(rig.image_height), rig);
    c.d_max_cm = d_max_cm;
    c.w_max_cm = w_max_cm;
    c.validate();
    return c;
  }

  void validate() const {
    if (!(0.0 < d_min_cm && d_min_cm < d_max_cm))
      throw ConfigError("search region needs 0 < d_min < d_max");
    if (w_max_cm <= 0.0) throw ConfigError("search region half-width must be positive");
  }
};

// Depth slice of the search region currently scanned for the curb.
struct Csr {
  double d_near_cm = 0.0;
  double d_far_cm = 0.0;

  void validate(const CddConfig& cdd) const {
    if (!(cdd.d_min_cm <= d_near_cm && d_near_cm < d_far_cm && d_far_cm <= cdd.d_max_cm))
      throw ConfigError("scan slice must lie inside the search region");
  }
};

// Image lines of the search region's left/right side boundaries. Both pass
// through the principal point (they are parallel to the optical axis).
inline Line2 side_boundary_line(const CameraRig& rig, double x_cm) {
  // u - cx = (fx * x / (fy * H)) * (v - cy)  =>  v = a*u + b
  double dudv = rig.fx * x_cm / (rig.fy * rig.height_cm);
  if (std::abs(dudv) < 1.0 / Line2::kMaxSlope)
    throw NearVerticalLine("side boundary too close to vertical");
  double a = 1.0 / dudv;
  return Line2(a, rig.cy - a * rig.cx);
}

struct CsrTrapezoid {
  Vec2 near_left, near_right, far_left, far_right;
  double row_near = 0.0;  // image row of the slice's near boundary
  double row_far = 0.0;   // image row of the slice's far boundary
};

// Image footprint of a depth slice: trapezoid bounded by the rows of the
// near/far boundaries and by the side boundary lines. Corners may fall
// outside the frame; only total non-overlap is an error.
inline CsrTrapezoid csr_to_image(const Csr& csr, const CameraRig& rig, const CddConfig& cdd) {
  csr.validate(cdd);
  CsrTrapezoid t;
  t.near_left = project_point({-cdd.w_max_cm, rig.height_cm, csr.d_near_cm}, rig);
  t.near_right = project_point({cdd.w_max_cm, rig.height_cm, csr.d_near_cm}, rig);
  t.far_left = project_point({-cdd.w_max_cm, rig.height_cm, csr.d_far_cm}, rig);
  t.far_right = project_point({cdd.w_max_cm, rig.height_cm, csr.d_far_cm}, rig);
  t.row_near = t.near_left.y;
  t.row_far = t.far_left.y;
  if (t.row_near <= 0.0 || t.row_far >= rig.image_height) throw RegionOutsideImage();
  double u_min = std::min(t.far_left.x, t.near_left.x);
  double u_max = std::max(t.far_right.x, t.near_right.x);
  if (u_max <= 0.0 || u_min >= rig.image_width) throw RegionOutsideImage();
  return t;
}

struct LineFit {
  Line2 line;
  double rms = 0.0;
};

// Ordinary least squares for v = a*u + b. Throws DegenerateFit when fewer
// than two points, the u spread is negligible, or the slope is near vertical.
inline LineFit least_squares_line(const std::vector<Vec2>& pts) {
  if (pts.size() < 2) throw DegenerateFit("need at least two points");
  double su = 0.0, sv = 0.0, suu = 0.0, suv = 0.0;
  for (const Vec2& p : pts) {
    su += p.x;
    sv += p.y;
    suu += p.x * p.x;
    suv += p.x * p.y;
  }
  double n = static_cast<double>(pts.size());
  double det = n * suu - su * su;
  if (std::abs(det) < 1e-9 * n * (1.0 + suu)) throw DegenerateFit("u spread too small");
  double a = (n * suv - su * sv) / det;
  double b = (sv - a * su) / n;
  if (std::abs(a) > Line2::kMaxSlope) throw DegenerateFit("fitted line near vertical");
  LineFit f;
  f.line = Line2(a, b);
  double ss = 0.0;
  for (const Vec2& p : pts) {
    double r = p.y - f.line.v_at(p.x);
    ss += r * r;
  }
  f.rms = std::sqrt(ss / n);
  return f;
}

enum class CurbEdge { base = 0, top_front = 1, rear = 2 };

// World point on one of the three curb edges at lateral offset x. The curb
// is a raised step: frontal face meets the road at the base edge, the top
// face spans e_cm (measured across the curb) behind the top-front edge.
inline Vec3 curb_edge_point(const CurbState& s, double camera_height_cm, CurbEdge edge,
                            double x_cm) {
  double z = s.d_cm + x_cm * std::tan(s.theta_rad);
  double y = camera_height_cm;
  if (edge != CurbEdge::base) y -= s.h_cm;
  if (edge == CurbEdge::rear) z += s.e_cm / std::cos(s.theta_rad);
  return {x_cm, y, z};
}

// Image line of a curb edge. The world edge is straight, so its projection
// is the line through the projections of any two of its points.
inline Line2 project_curb_edge(const CurbState& s, const CameraRig& rig, CurbEdge edge) {
  double tan_t = std::tan(s.theta_rad);
  double span = 1000.0;
  if (std::abs(tan_t) > 1e-9) span = std::min(span, 0.45 * s.d_cm / std::abs(tan_t));
  Vec2 p = project_point(curb_edge_point(s, rig.height_cm, edge, -span), rig);
  Vec2 q = project_point(curb_edge_point(s, rig.height_cm, edge, span), rig);
  return line_through(p, q);
}

}  // namespace curbsight
