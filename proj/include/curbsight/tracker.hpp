#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "curbsight/errors.hpp"
#include "curbsight/geometry.hpp"

namespace curbsight {

enum class TrackerMode { collecting, tracking };

struct TrackerConfig {
  int collect_frames = 5;  // candidate-bearing frames buffered before lock-on
  int window = 7;          // sliding regression window once locked
  int max_misses = 5;      // consecutive gate failures before starting over
  // per-parameter step scales of the lock-on chain cost (cm, rad, cm, cm)
  double scale_d = 1.0;
  double scale_theta = 0.01;
  double scale_h = 0.5;
  double scale_e = 1.0;
  // prediction gates never tighten below these residual spreads
  double sigma_floor_d = 4.0;
  double sigma_floor_theta = 0.02;
  double sigma_floor_h = 1.0;
  double sigma_floor_e = 3.0;
  double gate_sigmas = 3.0;
  double csr_margin_cm = 30.0;  // scan slice half-depth around the track
  long combo_guard = 100000;   // exhaustive lock-on search budget

  void validate() const {
    if (collect_frames < 2) throw ConfigError("lock-on needs at least two frames");
    if (window < collect_frames) throw ConfigError("window cannot be smaller than the buffer");
    if (max_misses < 1) throw ConfigError("miss budget must be positive");
    if (scale_d <= 0.0 || scale_theta <= 0.0 || scale_h <= 0.0 || scale_e <= 0.0)
      throw ConfigError("step scales must be positive");
    if (sigma_floor_d <= 0.0 || sigma_floor_theta <= 0.0 || sigma_floor_h <= 0.0 ||
        sigma_floor_e <= 0.0)
      throw ConfigError("sigma floors must be positive");
    if (gate_sigmas <= 0.0) throw ConfigError("gate width must be positive");
    if (csr_margin_cm <= 0.0) throw ConfigError("scan margin must be positive");
    if (combo_guard < 1) throw ConfigError("search budget must be positive");
  }
};

struct TrackerOutput {
  int frame = 0;
  TrackerMode mode = TrackerMode::collecting;
  bool detected = false;
  std::optional<CurbState> predicted;
  std::optional<CurbState> chosen;
  std::optional<CurbState> smoothed;
  Csr csr;  // depth slice to scan on the next frame
};

namespace detail {

inline std::array<double, 4> state_array(const CurbState& s) {
  return {s.d_cm, s.theta_rad, s.h_cm, s.e_cm};
}

inline CurbState state_from_array(const std::array<double, 4>& a) {
  return {a[0], a[1], a[2], a[3]};
}

// least-squares line x(t) = slope * t + intercept with residual spread
struct TrendLine {
  double slope = 0.0;
  double intercept = 0.0;
  double sigma = 0.0;
  double at(double t) const { return slope * t + intercept; }
};

inline TrendLine fit_trend(const std::vector<double>& ts, const std::vector<double>& xs) {
  size_t n = ts.size();
  TrendLine line;
  if (n == 1) {
    line.intercept = xs[0];
    return line;
  }
  double mt = 0.0, mx = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mt += ts[i];
    mx += xs[i];
  }
  mt /= double(n);
  mx /= double(n);
  double stt = 0.0, stx = 0.0;
  for (size_t i = 0; i < n; ++i) {
    stt += (ts[i] - mt) * (ts[i] - mt);
    stx += (ts[i] - mt) * (xs[i] - mx);
  }
  line.slope = stt > 0.0 ? stx / stt : 0.0;
  line.intercept = mx - line.slope * mt;
  if (n > 2) {
    double sse = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double r = xs[i] - line.at(ts[i]);
      sse += r * r;
    }
    line.sigma = std::sqrt(sse / double(n - 2));
  }
  return line;
}

}  // namespace detail

// Frame-to-frame association and smoothing of curb measurements.
//
// The tracker starts out collecting: it buffers the candidate lists of the
// first few candidate-bearing frames, then picks one candidate per frame so
// that the chain moves as smoothly as possible (exhaustive search under a
// budget, greedy chaining beyond it). The chain seeds per-parameter trend
// lines which from then on predict each frame, gate the candidates around
// the prediction, accept the nearest-in-depth survivor and re-fit. Misses
// leave the trend untouched; too many in a row throw the track away.
class CurbTracker {
 public:
  explicit CurbTracker(const CddConfig& cdd, const TrackerConfig& tc = {})
      : cdd_(cdd), tc_(tc) {
    cdd.validate();
    tc.validate();
  }

  TrackerMode mode() const { return mode_; }
  int window_size() const { return static_cast<int>(window_.size()); }

  TrackerOutput step(const std::vector<CurbState>& candidates) {
    TrackerOutput out;
    out.frame = t_;
    out.csr = full_csr();

    if (mode_ == TrackerMode::collecting) {
      if (candidates.empty()) {
        buffer_.clear();  // the lock-on buffer holds consecutive frames only
      } else {
        buffer_.push_back({t_, candidates});
        if (static_cast<int>(buffer_.size()) == tc_.collect_frames) lock_on(out);
      }
      out.detected = out.chosen.has_value();
    } else {
      track(candidates, out);
    }

    out.mode = mode_;
    ++t_;
    return out;
  }

 private:
  struct Sample {
    int t = 0;
    CurbState state;
  };

  struct Trend {
    std::array<detail::TrendLine, 4> lines;
    bool has_e = false;

    CurbState at(double t) const {
      return detail::state_from_array(
          {lines[0].at(t), lines[1].at(t), lines[2].at(t), has_e ? lines[3].at(t) : 0.0});
    }
  };

  Csr full_csr() const { return Csr{cdd_.d_min_cm, cdd_.d_max_cm}; }

  Csr csr_around(double d) const {
    Csr c{std::max(cdd_.d_min_cm, d - tc_.csr_margin_cm),
          std::min(cdd_.d_max_cm, d + tc_.csr_margin_cm)};
    if (!(c.d_near_cm < c.d_far_cm)) return far_end_csr();
    return c;
  }

  Csr far_end_csr() const {
    return Csr{std::max(cdd_.d_min_cm, cdd_.d_max_cm - 2.0 * tc_.csr_margin_cm), cdd_.d_max_cm};
  }

  Trend fit_trend_lines() const {
    Trend tr;
    std::vector<double> ts, xs;
    for (int p = 0; p < 4; ++p) {
      ts.clear();
      xs.clear();
      for (const Sample& s : window_) {
        auto a = detail::state_array(s.state);
        if (p == 3 && a[3] <= 0.0) continue;  // pairs carry no top-face depth
        ts.push_back(double(s.t));
        xs.push_back(a[p]);
      }
      if (p == 3) {
        tr.has_e = ts.size() >= 2;
        if (!tr.has_e) continue;
      }
      tr.lines[p] = detail::fit_trend(ts, xs);
    }
    return tr;
  }

  std::array<double, 4> gate_sigmas_of(const Trend& tr) const {
    return {std::max(tr.lines[0].sigma, tc_.sigma_floor_d),
            std::max(tr.lines[1].sigma, tc_.sigma_floor_theta),
            std::max(tr.lines[2].sigma, tc_.sigma_floor_h),
            std::max(tr.lines[3].sigma, tc_.sigma_floor_e)};
  }

  // one candidate per buffered frame, smoothest chain overall
  void lock_on(TrackerOutput& out) {
    std::vector<size_t> sizes;
    double combos = 1.0;
    for (const auto& [t, cands] : buffer_) {
      sizes.push_back(cands.size());
      combos *= double(cands.size());
    }

    std::vector<size_t> best(buffer_.size(), 0);
    if (combos <= double(tc_.combo_guard)) {
      std::vector<size_t> idx(buffer_.size(), 0);
      double best_cost = std::numeric_limits<double>::infinity();
      for (;;) {
        double cost = 0.0;
        for (size_t f = 1; f < buffer_.size(); ++f)
          cost += step_cost(buffer_[f - 1].second[idx[f - 1]], buffer_[f].second[idx[f]]);
        if (cost < best_cost) {
          best_cost = cost;
          best = idx;
        }
        size_t f = 0;
        while (f < idx.size() && ++idx[f] == sizes[f]) idx[f++] = 0;
        if (f == idx.size()) break;
      }
    } else {
      // over budget: chain greedily from every possible start
      double best_cost = std::numeric_limits<double>::infinity();
      for (size_t i0 = 0; i0 < sizes[0]; ++i0) {
        std::vector<size_t> idx{i0};
        double cost = 0.0;
        for (size_t f = 1; f < buffer_.size(); ++f) {
          const CurbState& prev = buffer_[f - 1].second[idx.back()];
          size_t pick = 0;
          double pick_cost = std::numeric_limits<double>::infinity();
          for (size_t i = 0; i < sizes[f]; ++i) {
            double c = step_cost(prev, buffer_[f].second[i]);
            if (c < pick_cost) {
              pick_cost = c;
              pick = i;
            }
          }
          idx.push_back(pick);
          cost += pick_cost;
        }
        if (cost < best_cost) {
          best_cost = cost;
          best = idx;
        }
      }
    }

    window_.clear();
    for (size_t f = 0; f < buffer_.size(); ++f)
      window_.push_back({buffer_[f].first, buffer_[f].second[best[f]]});
    buffer_.clear();
    mode_ = TrackerMode::tracking;
    misses_ = 0;

    Trend tr = fit_trend_lines();
    out.chosen = window_.back().state;
    out.smoothed = clamp_d(tr.at(double(t_)));
    out.csr = csr_for(tr);
  }

  double step_cost(const CurbState& a, const CurbState& b) const {
    double dd = (b.d_cm - a.d_cm) / tc_.scale_d;
    double dt = (b.theta_rad - a.theta_rad) / tc_.scale_theta;
    double dh = (b.h_cm - a.h_cm) / tc_.scale_h;
    double cost = dd * dd + dt * dt + dh * dh;
    if (a.e_cm > 0.0 && b.e_cm > 0.0) {
      double de = (b.e_cm - a.e_cm) / tc_.scale_e;
      cost += de * de;
    }
    return cost;
  }

  CurbState clamp_d(CurbState s) const {
    s.d_cm = std::clamp(s.d_cm, cdd_.d_min_cm, cdd_.d_max_cm);
    return s;
  }

  Csr csr_for(const Trend& tr) const {
    double next_d = tr.lines[0].at(double(t_ + 1));
    if (next_d < cdd_.d_min_cm || next_d > cdd_.d_max_cm) return far_end_csr();
    return csr_around(next_d);
  }

  void track(const std::vector<CurbState>& candidates, TrackerOutput& out) {
    Trend tr = fit_trend_lines();
    CurbState pred = clamp_d(tr.at(double(t_)));
    out.predicted = pred;
    std::array<double, 4> sig = gate_sigmas_of(tr);

    const CurbState* pick = nullptr;
    double pick_dist = std::numeric_limits<double>::infinity();
    for (const CurbState& c : candidates) {
      if (std::abs(c.d_cm - pred.d_cm) > tc_.gate_sigmas * sig[0]) continue;
      if (std::abs(c.theta_rad - pred.theta_rad) > tc_.gate_sigmas * sig[1]) continue;
      if (std::abs(c.h_cm - pred.h_cm) > tc_.gate_sigmas * sig[2]) continue;
      if (tr.has_e && c.e_cm > 0.0 &&
          std::abs(c.e_cm - pred.e_cm) > tc_.gate_sigmas * sig[3])
        continue;
      double dist = std::abs(c.d_cm - pred.d_cm) / sig[0];
      if (dist < pick_dist) {
        pick_dist = dist;
        pick = &c;
      }
    }

    if (pick) {
      misses_ = 0;
      window_.push_back({t_, *pick});
      while (static_cast<int>(window_.size()) > tc_.window) window_.pop_front();
      Trend refit = fit_trend_lines();
      out.detected = true;
      out.chosen = *pick;
      out.smoothed = clamp_d(refit.at(double(t_)));
      out.csr = csr_for(refit);
      return;
    }

    ++misses_;
    out.smoothed = pred;
    if (misses_ >= tc_.max_misses) {
      mode_ = TrackerMode::collecting;
      window_.clear();
      misses_ = 0;
      out.csr = full_csr();
      return;
    }
    out.csr = csr_for(tr);
  }

  CddConfig cdd_;
  TrackerConfig tc_;
  TrackerMode mode_ = TrackerMode::collecting;
  int t_ = 0;
  int misses_ = 0;
  std::vector<std::pair<int, std::vector<CurbState>>> buffer_;
  std::deque<Sample> window_;
};

}  // namespace curbsight
