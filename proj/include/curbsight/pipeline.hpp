#pragma once

#include <utility>
#include <vector>

#include "curbsight/appearance.hpp"
#include "curbsight/config.hpp"
#include "curbsight/edge_lines.hpp"
#include "curbsight/eval.hpp"
#include "curbsight/ipcm.hpp"
#include "curbsight/template_fit.hpp"
#include "curbsight/tracker.hpp"

namespace curbsight {

// One frame through the geometric stack: warp the scan slice, extract line
// candidates, fit curb templates, keep those whose face passes the
// appearance gate. Survivors stay sorted by fit residual.
struct FrameDetection {
  Csr csr;  // slice that was scanned
  int n_lines = 0;
  int n_fitted = 0;
  std::vector<Candidate> survivors;

  bool present() const { return !survivors.empty(); }
  const CurbState& best() const { return survivors.front().fit.state; }
};

inline FrameDetection detect_frame(const ImageU8& frame, const Csr& csr, const Config& cfg,
                                   const RemapConfig& remap, const SvmModel& model) {
  FrameDetection out;
  out.csr = csr;
  WarpedCsr warped = warp_csr(frame, csr, cfg.rig, cfg.cdd(), remap, cfg.headroom_h_cm,
                              cfg.headroom_e_cm);
  std::vector<ScoredLine> scored = extract_lines(warped, cfg.edges, cfg.hough, cfg.cluster);
  out.n_lines = static_cast<int>(scored.size());
  std::vector<Line2> lines;
  lines.reserve(scored.size());
  for (const ScoredLine& s : scored) lines.push_back(s.line);
  std::vector<Candidate> cands = build_candidate_set(lines, cfg.rig, remap, cfg.fit);
  out.n_fitted = static_cast<int>(cands.size());
  out.survivors = filter_candidates(cands, warped, model, cfg.hog);
  return out;
}

struct TrackedFrame {
  FrameDetection detection;
  TrackerOutput track;
};

// Detection with the tracker in the loop: each frame is scanned over the
// slice the previous step asked for, and the surviving candidate states
// drive the next tracker update.
class Pipeline {
 public:
  Pipeline(const Config& cfg, SvmModel model)
      : cfg_(cfg),
        model_(std::move(model)),
        remap_(RemapConfig::create(cfg.rig, cfg.d_max_cm)),
        tracker_(cfg.cdd(), cfg.tracker),
        csr_{cfg.cdd().d_min_cm, cfg.cdd().d_max_cm} {
    cfg_.validate();
  }

  TrackedFrame step(const ImageU8& frame) {
    TrackedFrame tf;
    tf.detection = detect_frame(frame, csr_, cfg_, remap_, model_);
    std::vector<CurbState> states;
    states.reserve(tf.detection.survivors.size());
    for (const Candidate& c : tf.detection.survivors) states.push_back(c.fit.state);
    tf.track = tracker_.step(states);
    csr_ = tf.track.csr;
    return tf;
  }

  const Config& config() const { return cfg_; }
  const RemapConfig& remap() const { return remap_; }
  const Csr& next_csr() const { return csr_; }
  TrackerMode mode() const { return tracker_.mode(); }

 private:
  Config cfg_;
  SvmModel model_;
  RemapConfig remap_;
  CurbTracker tracker_;
  Csr csr_;
};

inline FrameEstimate to_estimate(int frame, const FrameDetection& det) {
  FrameEstimate e;
  e.frame = frame;
  if (det.present()) {
    e.present = true;
    e.state = det.best();
  }
  return e;
}

inline FrameEstimate to_estimate(int frame, const TrackedFrame& tf) {
  FrameEstimate e;
  e.frame = frame;
  if (tf.track.smoothed) {
    e.present = true;
    e.state = *tf.track.smoothed;
  }
  return e;
}

}  // namespace curbsight
