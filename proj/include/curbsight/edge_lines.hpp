#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "curbsight/geometry.hpp"
#include "curbsight/image.hpp"
#include "curbsight/ipcm.hpp"

namespace curbsight {

struct EdgeParams {
  double blur_sigma = 1.2;
  double low_thresh = 40.0;
  double high_thresh = 100.0;
};

struct HoughParams {
  double angle_band_deg = 20.0;  // around horizontal
  double angle_step_deg = 1.0;
  double offset_step_px = 1.0;
  double min_support_frac = 0.5;  // of the raster width
  int max_lines = 6;
};

struct ClusterParams {
  double tol_a = 0.02;
  double tol_b_px = 3.0;
};

struct ScoredLine {
  Line2 line;
  double votes = 0.0;
};

// Edge pixels plus, for pixels whose gradient is mostly vertical, the
// sub-pixel row of the underlying transition relative to the pixel centre.
struct EdgeMap {
  ImageU8 mask;
  ImageF subrow;

  static EdgeMap from_mask(ImageU8 m) {
    EdgeMap e;
    e.subrow = ImageF(m.width, m.height, 0.0f);
    e.mask = std::move(m);
    return e;
  }
};

// Gradient magnitude edge detection: Gaussian blur, 3x3 Sobel, non-maximum
// suppression along the gradient, hysteresis between the two thresholds.
// Vertical-gradient pixels carry a parabolic sub-pixel row estimate.
inline EdgeMap detect_edges(const ImageU8& img, double low_thresh, double high_thresh,
                            double blur_sigma) {
  if (img.empty()) throw EmptyImage();
  if (!(0.0 < low_thresh && low_thresh < high_thresh))
    throw ConfigError("edge thresholds need 0 < low < high");
  ImageF sm = gaussian_blur(img, blur_sigma);
  int w = img.width, h = img.height;
  ImageF mag(w, h, 0.0f);
  ImageF dir(w, h, 0.0f);
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      double gx = (sm.at(x + 1, y - 1) + 2.0 * sm.at(x + 1, y) + sm.at(x + 1, y + 1)) -
                  (sm.at(x - 1, y - 1) + 2.0 * sm.at(x - 1, y) + sm.at(x - 1, y + 1));
      double gy = (sm.at(x - 1, y + 1) + 2.0 * sm.at(x, y + 1) + sm.at(x + 1, y + 1)) -
                  (sm.at(x - 1, y - 1) + 2.0 * sm.at(x, y - 1) + sm.at(x + 1, y - 1));
      mag.at(x, y) = static_cast<float>(std::hypot(gx, gy));
      dir.at(x, y) = static_cast<float>(std::atan2(gy, gx));
    }

  // non-maximum suppression in one of four gradient sectors
  ImageF thin(w, h, 0.0f);
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      float m = mag.at(x, y);
      if (m < low_thresh) continue;
      double a = dir.at(x, y);
      if (a < 0.0) a += 3.14159265358979323846;
      double deg = a * 57.29577951308232;
      float n1, n2;
      if (deg < 22.5 || deg >= 157.5) {
        n1 = mag.at(x + 1, y);
        n2 = mag.at(x - 1, y);
      } else if (deg < 67.5) {
        n1 = mag.at(x + 1, y + 1);
        n2 = mag.at(x - 1, y - 1);
      } else if (deg < 112.5) {
        n1 = mag.at(x, y + 1);
        n2 = mag.at(x, y - 1);
      } else {
        n1 = mag.at(x - 1, y + 1);
        n2 = mag.at(x + 1, y - 1);
      }
      if (m >= n1 && m >= n2) thin.at(x, y) = m;
    }

  // hysteresis: grow strong edges through connected weak pixels
  ImageU8 out(w, h, 0);
  std::vector<std::pair<int, int>> stack;
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x)
      if (thin.at(x, y) >= high_thresh) {
        out.at(x, y) = 255;
        stack.push_back({x, y});
      }
  while (!stack.empty()) {
    auto [x, y] = stack.back();
    stack.pop_back();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        int nx = x + dx, ny = y + dy;
        if (nx < 1 || nx >= w - 1 || ny < 1 || ny >= h - 1) continue;
        if (out.at(nx, ny) == 0 && thin.at(nx, ny) >= low_thresh) {
          out.at(nx, ny) = 255;
          stack.push_back({nx, ny});
        }
      }
  }

  EdgeMap em = EdgeMap::from_mask(std::move(out));
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      if (em.mask.at(x, y) == 0) continue;
      double a = dir.at(x, y);
      if (a < 0.0) a += 3.14159265358979323846;
      double deg = a * 57.29577951308232;
      if (deg < 67.5 || deg >= 112.5) continue;  // keep mostly vertical gradients
      double m0 = mag.at(x, y), mu = mag.at(x, y - 1), md = mag.at(x, y + 1);
      double denom = mu - 2.0 * m0 + md;
      if (denom < -1e-9)
        em.subrow.at(x, y) =
            static_cast<float>(std::clamp(0.5 * (mu - md) / denom, -0.5, 0.5));
    }
  return em;
}

namespace detail {

inline std::vector<Vec2> edge_points(const EdgeMap& edges) {
  std::vector<Vec2> pts;
  for (int y = 0; y < edges.mask.height; ++y)
    for (int x = 0; x < edges.mask.width; ++x)
      if (edges.mask.at(x, y) != 0) pts.push_back({double(x), y + edges.subrow.at(x, y)});
  return pts;
}

// least-squares refinement of a line hypothesis against nearby edge pixels;
// returns the refined line and its support (pixels within 1.5 px)
inline bool refine_line(const std::vector<Vec2>& pts, Line2& line, double& support) {
  for (double band : {2.5, 1.5}) {
    std::vector<Vec2> close;
    for (const Vec2& p : pts)
      if (std::abs(line.v_at(p.x) - p.y) <= band) close.push_back(p);
    if (close.size() < 8) return false;
    try {
      line = least_squares_line(close).line;
    } catch (const DegenerateFit&) {
      return false;
    }
  }
  double n = 0.0;
  for (const Vec2& p : pts)
    if (std::abs(line.v_at(p.x) - p.y) <= 1.5) n += 1.0;
  support = n;
  return true;
}

}  // namespace detail

// Near-horizontal line candidates from an edge map: Hough voting over the
// angle band, strongest peaks refined by least squares against the edge
// pixels. An accepted line consumes its supporting pixels so that one chain
// of evidence yields one candidate. A candidate needs support across at
// least min_support_frac of the raster width. Result sorted by descending
// support, at most max_lines.
inline std::vector<ScoredLine> vote_lines(const EdgeMap& edges, const HoughParams& hp) {
  if (edges.mask.empty()) throw EmptyImage();
  if (hp.max_lines <= 0 || hp.angle_step_deg <= 0.0 || hp.offset_step_px <= 0.0)
    throw ConfigError("bad voting parameters");
  std::vector<Vec2> pts = detail::edge_points(edges);
  std::vector<ScoredLine> out;
  if (pts.empty()) return out;

  int w = edges.mask.width, h = edges.mask.height;
  double band = hp.angle_band_deg * 3.14159265358979323846 / 180.0;
  int n_angles = 2 * int(std::round(hp.angle_band_deg / hp.angle_step_deg)) + 1;
  std::vector<double> tans(n_angles);
  for (int k = 0; k < n_angles; ++k)
    tans[k] = std::tan(-band + 2.0 * band * k / (n_angles - 1));
  double tan_max = std::tan(band);
  double b_min = -tan_max * w - 2.0;
  double b_max = h + tan_max * w + 2.0;
  int n_off = int((b_max - b_min) / hp.offset_step_px) + 2;
  std::vector<int> acc(size_t(n_angles) * n_off, 0);
  auto idx = [&](int k, int bi) { return size_t(k) * n_off + bi; };
  for (const Vec2& p : pts)
    for (int k = 0; k < n_angles; ++k) {
      double b = p.y - tans[k] * p.x;
      int bi = int((b - b_min) / hp.offset_step_px + 0.5);
      if (bi >= 0 && bi < n_off) ++acc[idx(k, bi)];
    }

  // smooth along the offset axis: a line between bin centres splits its
  // votes over neighbouring offsets
  std::vector<int> peaks(acc.size(), 0);
  for (int k = 0; k < n_angles; ++k)
    for (int bi = 1; bi + 1 < n_off; ++bi)
      peaks[idx(k, bi)] = acc[idx(k, bi - 1)] + acc[idx(k, bi)] + acc[idx(k, bi + 1)];

  double min_support = hp.min_support_frac * w;
  int raw_gate = std::max(8, int(0.2 * min_support));
  int wipe_b = std::max(1, int(4.0 / hp.offset_step_px));
  std::vector<ScoredLine> found;
  for (int round = 0; round < 4 * hp.max_lines; ++round) {
    int best = raw_gate - 1, bk = -1, bb = -1;
    for (int k = 0; k < n_angles; ++k)
      for (int bi = 0; bi < n_off; ++bi)
        if (peaks[idx(k, bi)] > best) {
          best = peaks[idx(k, bi)];
          bk = k;
          bb = bi;
        }
    if (bk < 0) break;
    for (int k = std::max(0, bk - 3); k <= std::min(n_angles - 1, bk + 3); ++k)
      for (int bi = std::max(0, bb - wipe_b); bi <= std::min(n_off - 1, bb + wipe_b); ++bi)
        peaks[idx(k, bi)] = 0;

    Line2 line(tans[bk], b_min + bb * hp.offset_step_px);
    double support = 0.0;
    if (!detail::refine_line(pts, line, support)) continue;
    if (std::abs(line.a()) > tan_max + 0.02) continue;
    if (support < min_support) continue;
    bool dup = false;
    for (const ScoredLine& f : found)
      if (std::abs(f.line.v_at(0.0) - line.v_at(0.0)) < 2.5 &&
          std::abs(f.line.v_at(w - 1.0) - line.v_at(w - 1.0)) < 2.5)
        dup = true;
    if (dup) continue;
    found.push_back({line, support});
    // peel the supporting pixels so later peaks cannot re-explain them
    std::erase_if(pts, [&](const Vec2& p) { return std::abs(line.v_at(p.x) - p.y) <= 1.5; });
    if (pts.size() < size_t(min_support)) break;
  }

  std::sort(found.begin(), found.end(),
            [](const ScoredLine& a, const ScoredLine& b) { return a.votes > b.votes; });
  if (int(found.size()) > hp.max_lines) found.resize(hp.max_lines);
  return found;
}

inline std::vector<ScoredLine> vote_lines(const ImageU8& edge_mask, const HoughParams& hp) {
  return vote_lines(EdgeMap::from_mask(edge_mask), hp);
}

// Single-linkage clustering in (a, b): lines within both tolerances of some
// cluster member merge; each cluster collapses to the member mean with the
// votes summed. Merging repeats until stable, so the result is idempotent.
inline std::vector<ScoredLine> cluster_lines(std::vector<ScoredLine> lines,
                                             const ClusterParams& cp) {
  if (cp.tol_a <= 0.0 || cp.tol_b_px <= 0.0) throw ConfigError("cluster tolerances must be positive");
  bool changed = true;
  while (changed && lines.size() > 1) {
    changed = false;
    size_t n = lines.size();
    std::vector<int> parent(n);
    for (size_t i = 0; i < n; ++i) parent[i] = int(i);
    std::function<int(int)> find = [&](int i) {
      while (parent[i] != i) i = parent[i] = parent[parent[i]];
      return i;
    };
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j)
        if (std::abs(lines[i].line.a() - lines[j].line.a()) <= cp.tol_a &&
            std::abs(lines[i].line.b() - lines[j].line.b()) <= cp.tol_b_px) {
          int ri = find(int(i)), rj = find(int(j));
          if (ri != rj) {
            parent[rj] = ri;
            changed = true;
          }
        }
    if (!changed) break;
    std::vector<ScoredLine> merged;
    std::vector<int> roots;
    for (size_t i = 0; i < n; ++i) {
      int r = find(int(i));
      int slot = -1;
      for (size_t s = 0; s < roots.size(); ++s)
        if (roots[s] == r) slot = int(s);
      if (slot < 0) {
        roots.push_back(r);
        merged.push_back({lines[i].line, 0.0});
        slot = int(roots.size()) - 1;
        merged[slot] = {Line2(0.0, 0.0), 0.0};
      }
      ScoredLine& m = merged[slot];
      double cnt = 0.0;
      for (size_t q = 0; q <= i; ++q)
        if (find(int(q)) == r) cnt += 1.0;
      m.line = Line2(m.line.a() + (lines[i].line.a() - m.line.a()) / cnt,
                     m.line.b() + (lines[i].line.b() - m.line.b()) / cnt);
      m.votes += lines[i].votes;
    }
    lines = std::move(merged);
  }
  return lines;
}

// Full extraction over a warped slice: edges, voting, back-mapping into
// image coordinates, clustering. Result sorted by descending intercept
// (the lowest line in the image, the nearest edge, first).
inline std::vector<ScoredLine> extract_lines(const WarpedCsr& warped, const EdgeParams& ep,
                                             const HoughParams& hp, const ClusterParams& cp) {
  EdgeMap edges = detect_edges(warped.image, ep.low_thresh, ep.high_thresh, ep.blur_sigma);
  std::vector<ScoredLine> warped_lines = vote_lines(edges, hp);
  std::vector<ScoredLine> mapped;
  for (const ScoredLine& sl : warped_lines) {
    try {
      LineFit f = map_line_to_original(sl.line, warped);
      mapped.push_back({f.line, sl.votes});
    } catch (const DegenerateFit&) {
      continue;
    }
  }
  std::vector<ScoredLine> clustered = cluster_lines(std::move(mapped), cp);
  std::sort(clustered.begin(), clustered.end(),
            [](const ScoredLine& a, const ScoredLine& b) { return a.line.b() > b.line.b(); });
  return clustered;
}

}  // namespace curbsight
