#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "curbsight/errors.hpp"
#include "curbsight/geometry.hpp"
#include "curbsight/synthscene.hpp"

namespace curbsight {

// One row of a detection or tracking log: the per-frame verdict and, when a
// curb was reported, its estimated state.
struct FrameEstimate {
  int frame = 0;
  bool present = false;
  CurbState state;
};

inline constexpr const char* kEstimateCsvHeader = "frame,present,d_cm,theta_rad,h_cm,e_cm";

inline void write_estimates_csv(const std::string& path, const std::vector<FrameEstimate>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << kEstimateCsvHeader << "\n";
  char buf[160];
  for (const FrameEstimate& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.8f,%.6f,%.6f\n", r.frame, r.present ? 1 : 0,
                  r.state.d_cm, r.state.theta_rad, r.state.h_cm, r.state.e_cm);
    f << buf;
  }
  if (!f) throw IoError("short write: " + path);
}

inline std::vector<FrameEstimate> read_estimates_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind(kEstimateCsvHeader, 0) != 0)
    throw IoError("not an estimate log: " + path);
  std::vector<FrameEstimate> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    FrameEstimate r;
    int present = 0;
    if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%lf", &r.frame, &present, &r.state.d_cm,
                    &r.state.theta_rad, &r.state.h_cm, &r.state.e_cm) != 6)
      throw IoError("malformed estimate row: " + line);
    r.present = present != 0;
    rows.push_back(r);
  }
  return rows;
}

struct EvalConfig {
  double tp_gate_cm = 50.0;   // a curb report this far off in depth is no match
  double bin_width_cm = 25.0;

  void validate() const {
    if (tp_gate_cm <= 0.0) throw ConfigError("match gate must be positive");
    if (bin_width_cm <= 0.0) throw ConfigError("bin width must be positive");
  }
};

struct ClassificationStats {
  int tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  bool degenerate = false;  // precision or recall undefined: scores forced to 0
};

// indices into the per-parameter arrays
inline constexpr int kParamD = 0, kParamTheta = 1, kParamH = 2, kParamE = 3;
inline constexpr std::array<const char*, 4> kParamNames = {"d", "theta", "h", "e"};

struct ErrorBin {
  double lo_cm = 0.0, hi_cm = 0.0;
  std::array<int, 4> count{};
  std::array<double, 4> mae{};
  std::array<double, 4> bias{};
  // 5, 25, 50, 75 and 95 percent quantiles of the signed error
  std::array<std::array<double, 5>, 4> quantiles{};
  double mape_d = 0.0;  // percent
};

struct EvalReport {
  int frames = 0;
  ClassificationStats cls;
  std::vector<ErrorBin> bins;
  std::array<int, 4> overall_count{};
  std::array<double, 4> overall_mae{};
  std::array<double, 4> overall_bias{};
  double overall_mape_d = 0.0;
};

namespace detail {

// linear-interpolation quantile of an unsorted sample
inline double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0.0;
  if (v.size() == 1) return v[0];
  double pos = p * double(v.size() - 1);
  size_t i = static_cast<size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  double f = pos - double(i);
  return v[i] + f * (v[i + 1] - v[i]);
}

}  // namespace detail

// Frame-aligned comparison of a log against ground truth. Present/present
// frames whose depth disagrees past the gate count as both a false positive
// and a missed curb. Error statistics cover matched frames whose true
// distance lies inside the rangeable region, binned by true distance.
inline EvalReport evaluate_frames(const std::vector<FrameTruth>& truths,
                                  const std::vector<FrameEstimate>& estimates,
                                  const CddConfig& cdd, const EvalConfig& cfg = {}) {
  cfg.validate();
  cdd.validate();
  if (truths.size() != estimates.size())
    throw MisalignedLogs("log and truth have different frame counts");
  for (size_t i = 0; i < truths.size(); ++i)
    if (truths[i].frame != estimates[i].frame)
      throw MisalignedLogs("log and truth disagree on frame numbers");

  EvalReport rep;
  rep.frames = static_cast<int>(truths.size());
  int n_bins = static_cast<int>(std::ceil((cdd.d_max_cm - cdd.d_min_cm) / cfg.bin_width_cm));
  std::vector<std::array<std::vector<double>, 4>> samples(static_cast<size_t>(n_bins));
  std::vector<std::vector<double>> ape(static_cast<size_t>(n_bins));  // |dD|/D, matched frames

  int correct = 0;
  for (size_t i = 0; i < truths.size(); ++i) {
    const FrameTruth& gt = truths[i];
    const FrameEstimate& est = estimates[i];
    if (!gt.present && !est.present) {
      rep.cls.tn++;
      correct++;
      continue;
    }
    if (gt.present && !est.present) {
      rep.cls.fn++;
      continue;
    }
    if (!gt.present && est.present) {
      rep.cls.fp++;
      continue;
    }
    if (std::abs(est.state.d_cm - gt.state.d_cm) > cfg.tp_gate_cm) {
      rep.cls.fp++;  // reported a curb that is not the real one
      rep.cls.fn++;  // and the real one went unreported
      continue;
    }
    rep.cls.tp++;
    correct++;

    if (gt.state.d_cm < cdd.d_min_cm || gt.state.d_cm > cdd.d_max_cm) continue;
    int b = std::min(n_bins - 1,
                     static_cast<int>((gt.state.d_cm - cdd.d_min_cm) / cfg.bin_width_cm));
    samples[b][kParamD].push_back(est.state.d_cm - gt.state.d_cm);
    samples[b][kParamTheta].push_back(est.state.theta_rad - gt.state.theta_rad);
    samples[b][kParamH].push_back(est.state.h_cm - gt.state.h_cm);
    if (est.state.e_cm > 0.0 && gt.state.e_cm > 0.0)
      samples[b][kParamE].push_back(est.state.e_cm - gt.state.e_cm);
    ape[b].push_back(std::abs(est.state.d_cm - gt.state.d_cm) / gt.state.d_cm);
  }

  rep.cls.accuracy = rep.frames > 0 ? double(correct) / double(rep.frames) : 0.0;
  if (rep.cls.tp + rep.cls.fp == 0 || rep.cls.tp + rep.cls.fn == 0) {
    rep.cls.degenerate = true;
  } else {
    rep.cls.precision = double(rep.cls.tp) / double(rep.cls.tp + rep.cls.fp);
    rep.cls.recall = double(rep.cls.tp) / double(rep.cls.tp + rep.cls.fn);
    if (rep.cls.precision + rep.cls.recall > 0.0)
      rep.cls.f1 =
          2.0 * rep.cls.precision * rep.cls.recall / (rep.cls.precision + rep.cls.recall);
  }

  std::array<double, 4> sum_abs{}, sum_signed{};
  std::array<int, 4> n_all{};
  double sum_ape = 0.0;
  int n_ape = 0;
  for (int b = 0; b < n_bins; ++b) {
    ErrorBin bin;
    bin.lo_cm = cdd.d_min_cm + b * cfg.bin_width_cm;
    bin.hi_cm = std::min(cdd.d_max_cm, bin.lo_cm + cfg.bin_width_cm);
    for (int p = 0; p < 4; ++p) {
      const std::vector<double>& v = samples[b][p];
      bin.count[p] = static_cast<int>(v.size());
      if (!v.empty()) {
        double sa = 0.0, ss = 0.0;
        for (double e : v) {
          sa += std::abs(e);
          ss += e;
        }
        bin.mae[p] = sa / double(v.size());
        bin.bias[p] = ss / double(v.size());
        const double qs[5] = {0.05, 0.25, 0.5, 0.75, 0.95};
        for (int q = 0; q < 5; ++q) bin.quantiles[p][q] = detail::quantile(v, qs[q]);
        sum_abs[p] += sa;
        sum_signed[p] += ss;
        n_all[p] += bin.count[p];
      }
    }
    if (!ape[b].empty()) {
      double s = 0.0;
      for (double a : ape[b]) s += a;
      bin.mape_d = 100.0 * s / double(ape[b].size());
      sum_ape += s;
      n_ape += static_cast<int>(ape[b].size());
    }
    rep.bins.push_back(bin);
  }
  for (int p = 0; p < 4; ++p) {
    rep.overall_count[p] = n_all[p];
    if (n_all[p] > 0) {
      rep.overall_mae[p] = sum_abs[p] / double(n_all[p]);
      rep.overall_bias[p] = sum_signed[p] / double(n_all[p]);
    }
  }
  if (n_ape > 0) rep.overall_mape_d = 100.0 * sum_ape / double(n_ape);
  return rep;
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["frames"] = rep.frames;
  j["classification"] = {
      {"tp", rep.cls.tp},           {"tn", rep.cls.tn},
      {"fp", rep.cls.fp},           {"fn", rep.cls.fn},
      {"accuracy", rep.cls.accuracy}, {"precision", rep.cls.precision},
      {"recall", rep.cls.recall},   {"f1", rep.cls.f1},
      {"degenerate", rep.cls.degenerate}};
  nlohmann::json overall;
  for (int p = 0; p < 4; ++p) {
    overall[kParamNames[p]] = {{"count", rep.overall_count[p]},
                               {"mae", rep.overall_mae[p]},
                               {"bias", rep.overall_bias[p]}};
  }
  overall["d"]["mape_pct"] = rep.overall_mape_d;
  j["overall"] = overall;
  j["bins"] = nlohmann::json::array();
  for (const ErrorBin& b : rep.bins) {
    nlohmann::json jb;
    jb["lo_cm"] = b.lo_cm;
    jb["hi_cm"] = b.hi_cm;
    for (int p = 0; p < 4; ++p) {
      jb[kParamNames[p]] = {{"count", b.count[p]},
                            {"mae", b.mae[p]},
                            {"bias", b.bias[p]},
                            {"quantiles", b.quantiles[p]}};
    }
    jb["d"]["mape_pct"] = b.mape_d;
    j["bins"].push_back(jb);
  }
  return j;
}

inline void write_report_json(const std::string& path, const EvalReport& rep) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << report_to_json(rep).dump(2) << "\n";
  if (!f) throw IoError("short write: " + path);
}

inline void write_bins_csv(const std::string& path, const EvalReport& rep) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "lo_cm,hi_cm,n_d,d_mae_cm,d_bias_cm,d_mape_pct,n_theta,theta_mae_rad,n_h,h_mae_cm,n_e,"
       "e_mae_cm\n";
  char buf[240];
  for (const ErrorBin& b : rep.bins) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f,%d,%.4f,%.4f,%.4f,%d,%.6f,%d,%.4f,%d,%.4f\n",
                  b.lo_cm, b.hi_cm, b.count[kParamD], b.mae[kParamD], b.bias[kParamD], b.mape_d,
                  b.count[kParamTheta], b.mae[kParamTheta], b.count[kParamH], b.mae[kParamH],
                  b.count[kParamE], b.mae[kParamE]);
    f << buf;
  }
  if (!f) throw IoError("short write: " + path);
}

// candlestick rows for gnuplot: bin centre, whisker and box quantiles,
// median and sample count of one parameter's signed error
inline void write_box_data(const std::string& path, const EvalReport& rep, int param = kParamD) {
  if (param < 0 || param > 3) throw ConfigError("parameter index out of range");
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "# center_cm q05 q25 q50 q75 q95 n  (" << kParamNames[param] << " error)\n";
  char buf[200];
  for (const ErrorBin& b : rep.bins) {
    if (b.count[param] == 0) continue;
    std::snprintf(buf, sizeof buf, "%.2f %.6f %.6f %.6f %.6f %.6f %d\n",
                  0.5 * (b.lo_cm + b.hi_cm), b.quantiles[param][0], b.quantiles[param][1],
                  b.quantiles[param][2], b.quantiles[param][3], b.quantiles[param][4],
                  b.count[param]);
    f << buf;
  }
  if (!f) throw IoError("short write: " + path);
}

}  // namespace curbsight
