#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "curbsight/edge_lines.hpp"
#include "curbsight/geometry.hpp"
#include "curbsight/image.hpp"
#include "curbsight/ipcm.hpp"
#include "curbsight/synthscene.hpp"
#include "curbsight/template_fit.hpp"

namespace curbsight {

using Feature = std::vector<double>;

// 32x32 window, 8x8 px cells, 8 signed orientation bins over the full
// circle, 2x2-cell blocks at cell stride 1 (3x3 blocks), clipped L2
// normalisation: 9 * 4 * 8 = 288 values. Signed bins matter here: a curb
// face meets a brighter top surface while a painted stripe meets darker
// road, and folding the orientation would erase exactly that polarity.
struct HogParams {
  int window = 32;
  int cell = 8;
  int bins = 8;
  // squared gradient-energy floor of the block normaliser: blocks carrying
  // less energy than this shrink toward zero instead of being blown up to
  // unit length, so featureless noise stays distinguishable from structure
  double eps = 4e5;
  double clip = 0.2;
  double blur_sigma = 0.8;
};

inline constexpr int kHogDim = 288;
inline constexpr int kBagSize = 7;

namespace detail {

// bilinear resample of an axis-aligned square region to out x out
inline ImageF resample_square(const ImageU8& img, double x0, double y0, double side, int out) {
  ImageF r(out, out);
  for (int b = 0; b < out; ++b)
    for (int a = 0; a < out; ++a)
      r.at(a, b) = static_cast<float>(sample_bilinear(img, x0 + (a + 0.5) * side / out - 0.5,
                                                      y0 + (b + 0.5) * side / out - 0.5));
  return r;
}

}  // namespace detail

// Orientation histogram descriptor of a prepared window. Gradients are
// clamped central differences; the full signed angle is hard-assigned to
// bins whose centres sit on the axes (so axis-aligned gradients never land
// on a bin boundary). Blocks are L2-normalised against the energy floor,
// clipped, and concatenated row-major (block row, block col, cell row,
// cell col, bin). The clipping keeps one strong border edge from drowning
// the interior texture of the window.
inline Feature hog_descriptor(const ImageF& win, const HogParams& hp = {}) {
  if (win.width != hp.window || win.height != hp.window)
    throw DimensionMismatch("descriptor window has the wrong size");
  int cells = hp.window / hp.cell;  // 4
  double bin_width = 360.0 / hp.bins;
  std::vector<double> hist(size_t(cells) * cells * hp.bins, 0.0);
  for (int y = 0; y < hp.window; ++y)
    for (int x = 0; x < hp.window; ++x) {
      double dx = double(win.at(std::min(x + 1, hp.window - 1), y)) -
                  double(win.at(std::max(x - 1, 0), y));
      double dy = double(win.at(x, std::min(y + 1, hp.window - 1))) -
                  double(win.at(x, std::max(y - 1, 0)));
      double mag = std::hypot(dx, dy);
      if (mag <= 0.0) continue;
      double ang = std::atan2(dy, dx) * 57.29577951308232;  // degrees
      if (ang < 0.0) ang += 360.0;
      int bin = static_cast<int>((ang + 0.5 * bin_width) / bin_width) % hp.bins;
      int cx = x / hp.cell, cy = y / hp.cell;
      hist[(size_t(cy) * cells + cx) * hp.bins + bin] += mag;
    }

  Feature out;
  out.reserve(size_t(cells - 1) * (cells - 1) * 4 * hp.bins);
  for (int by = 0; by + 1 < cells; ++by)
    for (int bx = 0; bx + 1 < cells; ++bx) {
      std::array<double, 32> block{};
      int idx = 0;
      double norm2 = 0.0;
      for (int cy = by; cy <= by + 1; ++cy)
        for (int cx = bx; cx <= bx + 1; ++cx)
          for (int bin = 0; bin < hp.bins; ++bin) {
            double v = hist[(size_t(cy) * cells + cx) * hp.bins + bin];
            block[idx++] = v;
            norm2 += v * v;
          }
      double inv = 1.0 / std::sqrt(norm2 + hp.eps);
      for (int k = 0; k < idx; ++k) out.push_back(std::min(block[k] * inv, hp.clip));
    }
  return out;
}

// Seven square windows over the curb's frontal face in the warped raster,
// centred between the face's bounding lines at columns k/8 of the width.
// The face band must be at least 4 px tall and every window fully inside.
inline std::array<ImageF, kBagSize> sample_face_windows(const ImageU8& raster,
                                                        const Line2& base_raster,
                                                        const Line2& top_raster,
                                                        const HogParams& hp = {}) {
  if (raster.empty()) throw EmptyImage();
  std::array<ImageF, kBagSize> out;
  for (int k = 0; k < kBagSize; ++k) {
    double jx = (raster.width - 1) * (k + 1) / 8.0;
    double vb = base_raster.v_at(jx);
    double vt = top_raster.v_at(jx);
    double gap = vb - vt;
    if (gap < 4.0) throw DegenerateFace();
    double x0 = jx - 0.5 * gap;
    double y0 = vt;
    if (x0 < 0.0 || y0 < 0.0 || x0 + gap > raster.width || y0 + gap > raster.height)
      throw FaceOutsideImage();
    ImageF win = detail::resample_square(raster, x0, y0, gap, hp.window);
    out[k] = gaussian_blur(win, hp.blur_sigma);
  }
  return out;
}

struct SvmModel {
  std::vector<double> w;
  double bias = 0.0;

  double score(const Feature& x) const {
    if (x.size() != w.size()) throw DimensionMismatch("feature/model size mismatch");
    double s = bias;
    for (size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
    return s;
  }

  // ties fall to the negative class
  int decide(const Feature& x) const { return score(x) > 0.0 ? 1 : -1; }
};

struct SvmTrainConfig {
  double lambda = 1e-3;
  int max_iterations = 1500;
  double tol = 1e-10;
};

// Full-batch subgradient descent on the L2-regularised hinge loss with
// monotone backtracking. Hinge terms are class-weighted so an imbalanced
// corpus does not tilt the decision toward the bigger class. No randomness:
// identical corpora give identical models on every platform.
inline SvmModel train_svm(const std::vector<Feature>& xs, const std::vector<int>& ys,
                          const SvmTrainConfig& tc = {}) {
  if (xs.size() != ys.size()) throw DimensionMismatch("features and labels differ in count");
  if (xs.empty()) throw EmptyClass();
  size_t dim = xs[0].size();
  double npos = 0.0, nneg = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != dim) throw DimensionMismatch("inconsistent feature sizes");
    if (ys[i] != 1 && ys[i] != -1) throw ConfigError("labels must be +-1");
    (ys[i] == 1 ? npos : nneg) += 1.0;
  }
  if (npos == 0.0 || nneg == 0.0) throw EmptyClass();

  SvmModel m;
  m.w.assign(dim, 0.0);
  double n = static_cast<double>(xs.size());
  double wpos = n / (2.0 * npos), wneg = n / (2.0 * nneg);
  auto weight = [&](int y) { return y == 1 ? wpos : wneg; };

  auto objective = [&](const std::vector<double>& w, double b) {
    double j = 0.0;
    for (double wk : w) j += wk * wk;
    j *= 0.5 * tc.lambda;
    for (size_t i = 0; i < xs.size(); ++i) {
      double s = b;
      for (size_t k = 0; k < dim; ++k) s += w[k] * xs[i][k];
      j += weight(ys[i]) * std::max(0.0, 1.0 - ys[i] * s) / n;
    }
    return j;
  };

  double cost = objective(m.w, m.bias);
  std::vector<double> gw(dim);
  for (int iter = 0; iter < tc.max_iterations; ++iter) {
    for (size_t k = 0; k < dim; ++k) gw[k] = tc.lambda * m.w[k];
    double gb = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
      double s = m.bias;
      for (size_t k = 0; k < dim; ++k) s += m.w[k] * xs[i][k];
      if (ys[i] * s < 1.0) {
        double wy = weight(ys[i]);
        for (size_t k = 0; k < dim; ++k) gw[k] -= wy * ys[i] * xs[i][k] / n;
        gb -= wy * ys[i] / n;
      }
    }
    double gnorm2 = gb * gb;
    for (double g : gw) gnorm2 += g * g;
    if (gnorm2 < tc.tol * tc.tol) break;

    double eta = 1.0;
    bool stepped = false;
    std::vector<double> wt(dim);
    while (eta > 1e-12) {
      for (size_t k = 0; k < dim; ++k) wt[k] = m.w[k] - eta * gw[k];
      double bt = m.bias - eta * gb;
      double trial = objective(wt, bt);
      if (trial < cost) {
        m.w = wt;
        m.bias = bt;
        double drop = cost - trial;
        cost = trial;
        stepped = true;
        if (drop < tc.tol * (1.0 + cost)) iter = tc.max_iterations;  // converged
        break;
      }
      eta *= 0.5;
    }
    if (!stepped) break;  // subgradient no longer descends: done
  }
  return m;
}

inline const char* kSvmMagic = "curbsight-svm v1";

inline void save_svm(const std::string& path, const SvmModel& m) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << kSvmMagic << "\n" << m.w.size() << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g\n", m.bias);
  f << buf;
  for (double wk : m.w) {
    std::snprintf(buf, sizeof buf, "%.17g\n", wk);
    f << buf;
  }
  if (!f) throw IoError("short write: " + path);
}

inline SvmModel load_svm(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::string magic;
  std::getline(f, magic);
  if (magic != kSvmMagic) throw IoError("not a classifier model file: " + path);
  size_t dim = 0;
  f >> dim;
  SvmModel m;
  if (!(f >> m.bias)) throw IoError("truncated model file: " + path);
  m.w.resize(dim);
  for (size_t i = 0; i < dim; ++i)
    if (!(f >> m.w[i])) throw IoError("truncated model file: " + path);
  return m;
}

// Majority vote over a full bag of windows: positive needs at least 4 of 7.
inline int classify_bag(const SvmModel& m, const std::vector<Feature>& bag) {
  if (bag.size() != kBagSize) throw WrongBagSize();
  int votes = 0;
  for (const Feature& f : bag)
    if (m.decide(f) == 1) votes++;
  return votes * 2 >= kBagSize + 1 ? 1 : -1;
}

// Appearance gate of the candidate pipeline: a candidate survives when the
// windows over its frontal face look like curb face to the classifier.
// Candidates whose face cannot be sampled are dropped.
inline std::vector<Candidate> filter_candidates(const std::vector<Candidate>& cands,
                                                const WarpedCsr& warped, const SvmModel& model,
                                                const HogParams& hp = {}) {
  std::vector<Candidate> out;
  for (const Candidate& c : cands) {
    try {
      Line2 base = map_line_to_warped(c.tuple.lines[0], warped).line;
      Line2 top = map_line_to_warped(c.tuple.lines[1], warped).line;
      std::array<ImageF, kBagSize> wins = sample_face_windows(warped.image, base, top, hp);
      std::vector<Feature> bag;
      bag.reserve(kBagSize);
      for (const ImageF& w : wins) bag.push_back(hog_descriptor(w, hp));
      if (classify_bag(model, bag) == 1) out.push_back(c);
    } catch (const Error&) {
      continue;
    }
  }
  return out;
}

struct TrainingCorpus {
  std::vector<Feature> features;
  std::vector<int> labels;
};

// Deterministic synthetic corpus: windows over rendered curb faces are the
// positive class; windows over plain road (shifted below the face, and from
// curb-free frames, stripes and shadows included) are the negative class.
inline TrainingCorpus make_training_corpus(const CameraRig& rig, int scenes, uint64_t seed,
                                           const HogParams& hp = {}) {
  if (scenes <= 0) throw ConfigError("corpus needs at least one scene");
  CddConfig cdd = CddConfig::from_rig(rig);
  Csr csr{cdd.d_min_cm, cdd.d_max_cm};
  RemapConfig cfg = RemapConfig::create(rig, csr.d_far_cm);
  GaussianRng rng(seed);
  TrainingCorpus corpus;

  auto add_bag = [&](const ImageU8& raster, const Line2& base, const Line2& top, int label) {
    try {
      std::array<ImageF, kBagSize> wins = sample_face_windows(raster, base, top, hp);
      for (const ImageF& w : wins) {
        corpus.features.push_back(hog_descriptor(w, hp));
        corpus.labels.push_back(label);
      }
    } catch (const Error&) {
    }
  };

  for (int sc = 0; sc < scenes; ++sc) {
    bool with_curb = sc % 2 == 0;
    Photometry ph = sc % 4 < 2 ? Photometry::clear_day(4.0, 10.0) : Photometry::soft_shadow(4.0, 10.0);
    if (sc % 3 == 0) {
      ph.stripe = true;
      ph.stripe_d_cm = 140.0 + 220.0 * rng.uniform();
      ph.stripe_delta = 48.0;
    }
    uint64_t frame_seed = seed * 6364136223846793005ULL + uint64_t(sc) * 1442695040888963407ULL;

    if (with_curb) {
      CurbState st;
      st.d_cm = 130.0 + 300.0 * rng.uniform();
      st.theta_rad = -0.22 + 0.44 * rng.uniform();
      st.h_cm = 8.0 + 12.0 * rng.uniform();
      st.e_cm = 10.0 + 20.0 * rng.uniform();
      RenderedFrame fr = render_frame(st, rig, ph, frame_seed, sc);
      WarpedCsr w = warp_csr(fr.image, csr, rig, cdd, cfg);
      Line2 base = map_line_to_warped(fr.truth.e1, w).line;
      Line2 top = map_line_to_warped(fr.truth.e2, w).line;
      add_bag(w.image, base, top, 1);
      // same geometry shifted onto the road below the face: hard negatives
      double gap = base.v_at(w.image.width * 0.5) - top.v_at(w.image.width * 0.5);
      double shift = 1.6 * gap + 3.0;
      add_bag(w.image, Line2(base.a(), base.b() + shift), Line2(top.a(), top.b() + shift), -1);
    } else {
      RenderedFrame fr = render_frame(std::nullopt, rig, ph, frame_seed, sc);
      WarpedCsr w = warp_csr(fr.image, csr, rig, cdd, cfg);
      // pseudo face bands on empty road at random depths
      auto band_at = [&](double d, double gap) {
        double v_img = rig.cy + rig.fy * rig.height_cm / d;
        double base_row = forward_v(v_img, cfg) - w.v_top;
        add_bag(w.image, Line2(0.0, base_row), Line2(0.0, base_row - gap), -1);
      };
      band_at(140.0 + 280.0 * rng.uniform(), 14.0 + 18.0 * rng.uniform());
      band_at(140.0 + 280.0 * rng.uniform(), 14.0 + 18.0 * rng.uniform());
      if (ph.stripe) {
        // band aligned with the painted stripe: the hardest negative, since
        // its borders mimic a curb face and only the interior texture differs
        double vn = rig.cy + rig.fy * rig.height_cm / ph.stripe_d_cm;
        double vf = rig.cy + rig.fy * rig.height_cm / (ph.stripe_d_cm + ph.stripe_width_cm);
        add_bag(w.image, Line2(0.0, forward_v(vn, cfg) - w.v_top),
                Line2(0.0, forward_v(vf, cfg) - w.v_top), -1);
      }
      if (ph.preset == "clear") {
        // bands on and half off the shadow: its far border has the same
        // brighter-above polarity as a curb face meeting its top surface
        double vn = rig.cy + rig.fy * rig.height_cm / (1.18 * 320.0);
        double vf = rig.cy + rig.fy * rig.height_cm / (1.38 * 320.0);
        double rn = forward_v(vn, cfg) - w.v_top;
        double rf = forward_v(vf, cfg) - w.v_top;
        add_bag(w.image, Line2(0.0, rn), Line2(0.0, rf), -1);
        double half = 0.5 * (rn - rf);
        add_bag(w.image, Line2(0.0, rn - half), Line2(0.0, rf - half), -1);
      }
    }
  }
  if (corpus.features.empty()) throw EmptyClass();
  return corpus;
}

}  // namespace curbsight
