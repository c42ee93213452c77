#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "curbsight/config.hpp"
#include "curbsight/eval.hpp"
#include "curbsight/pipeline.hpp"
#include "curbsight/synthscene.hpp"
#include "curbsight/version.hpp"

namespace fs = std::filesystem;
using namespace curbsight;

namespace {

constexpr double kDegPerRad = 57.29577951308232;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;

  Config load() const {
    Config cfg = config_path.empty() ? Config{} : load_config(config_path);
    for (const std::string& s : overrides) apply_override(cfg, s);
    cfg.validate();
    return cfg;
  }
};

void add_config_opts(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--config", o.config_path, "json config file");
  sub->add_option("--set", o.overrides, "override: section.key=value (repeatable)");
}

// frames of a sequence directory, ordered by the number in the file name
std::vector<std::pair<int, std::string>> list_frames(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") paths.push_back(e.path().string());
  if (paths.empty()) throw IoError("no .pgm frames in: " + dir);
  std::sort(paths.begin(), paths.end());
  std::vector<std::pair<int, std::string>> out;
  for (size_t i = 0; i < paths.size(); ++i) {
    std::string stem = fs::path(paths[i]).stem().string();
    size_t k = stem.size();
    while (k > 0 && std::isdigit(static_cast<unsigned char>(stem[k - 1]))) --k;
    int id = k < stem.size() ? std::atoi(stem.c_str() + k) : static_cast<int>(i);
    out.emplace_back(id, paths[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void append_state_cells(std::string& row, const std::optional<CurbState>& s) {
  char buf[96];
  if (s)
    std::snprintf(buf, sizeof buf, ",%.3f,%.6f,%.3f,%.3f", s->d_cm, s->theta_rad, s->h_cm,
                  s->e_cm);
  else
    std::snprintf(buf, sizeof buf, ",NA,NA,NA,NA");
  row += buf;
}

const char* mode_name(TrackerMode m) {
  return m == TrackerMode::tracking ? "tracking" : "collecting";
}

struct RenderOpts {
  CommonOpts common;
  std::string out_dir;
  int frames = 30;
  double d_start = 450.0, d_end = 150.0;
  double theta = 0.08, height = 12.0, extent = 20.0;
  bool no_curb = false;
  std::string preset = "clear";
  double noise = 4.0, texture = 0.0;
  bool stripe = false;
  double stripe_d = 320.0, stripe_width = 25.0, stripe_delta = 34.0;
  uint64_t seed = 1;
};

void run_render(const RenderOpts& o) {
  Config cfg = o.common.load();
  Photometry ph =
      o.preset == "shadow" ? Photometry::soft_shadow(o.noise, o.texture)
                           : Photometry::clear_day(o.noise, o.texture);
  ph.stripe = o.stripe;
  ph.stripe_d_cm = o.stripe_d;
  ph.stripe_width_cm = o.stripe_width;
  ph.stripe_delta = o.stripe_delta;

  fs::create_directories(o.out_dir);
  std::vector<FrameTruth> truths;
  for (int i = 0; i < o.frames; ++i) {
    std::optional<CurbState> st;
    if (!o.no_curb) {
      double t = o.frames > 1 ? double(i) / double(o.frames - 1) : 0.0;
      st = CurbState{o.d_start + (o.d_end - o.d_start) * t, o.theta, o.height, o.extent};
    }
    uint64_t fseed = o.seed * 6364136223846793005ULL + uint64_t(i) * 1442695040888963407ULL;
    RenderedFrame rf = render_frame(st, cfg.rig, ph, fseed, i);
    char name[32], comment[64];
    std::snprintf(name, sizeof name, "frame_%04d.pgm", i);
    std::snprintf(comment, sizeof comment, "curbsight seed=%llu frame=%d",
                  static_cast<unsigned long long>(o.seed), i);
    write_pgm((fs::path(o.out_dir) / name).string(), rf.image, comment);
    truths.push_back(rf.truth);
  }
  write_truth_csv((fs::path(o.out_dir) / "truth.csv").string(), truths);

  nlohmann::json meta;
  meta["tool"] = "curbsight render";
  meta["version"] = kVersionString;
  meta["seed"] = o.seed;
  meta["frames"] = o.frames;
  meta["curb"] = !o.no_curb;
  if (!o.no_curb)
    meta["sweep"] = {{"d_start_cm", o.d_start}, {"d_end_cm", o.d_end},
                     {"theta_rad", o.theta},    {"h_cm", o.height},
                     {"e_cm", o.extent}};
  meta["photometry"] = {{"preset", ph.preset},
                        {"noise_sigma", ph.noise_sigma},
                        {"texture_amp", ph.texture_amp},
                        {"stripe", ph.stripe},
                        {"stripe_d_cm", ph.stripe_d_cm},
                        {"stripe_width_cm", ph.stripe_width_cm},
                        {"stripe_delta", ph.stripe_delta}};
  meta["rig"] = config_to_json(cfg)["rig"];
  std::ofstream mf(fs::path(o.out_dir) / "meta.json");
  mf << meta.dump(2) << "\n";
  std::printf("rendered %d frame%s to %s\n", o.frames, o.frames == 1 ? "" : "s",
              o.out_dir.c_str());
}

struct TrainOpts {
  CommonOpts common;
  std::string out_path;
  int scenes = 40;
  uint64_t seed = 77;
};

void run_train(const TrainOpts& o) {
  Config cfg = o.common.load();
  TrainingCorpus corpus = make_training_corpus(cfg.rig, o.scenes, o.seed, cfg.hog);
  SvmModel model = train_svm(corpus.features, corpus.labels, cfg.svm);
  int correct = 0;
  for (size_t i = 0; i < corpus.features.size(); ++i)
    if (model.decide(corpus.features[i]) == corpus.labels[i]) ++correct;
  save_svm(o.out_path, model);
  std::printf("trained on %zu windows from %d scenes, training accuracy %.3f, saved %s\n",
              corpus.features.size(), o.scenes, double(correct) / double(corpus.features.size()),
              o.out_path.c_str());
}

struct DetectOpts {
  CommonOpts common;
  std::string model_path, frames_dir, out_path, candidates_path;
};

void run_detect(const DetectOpts& o) {
  Config cfg = o.common.load();
  SvmModel model = load_svm(o.model_path);
  RemapConfig remap = RemapConfig::create(cfg.rig, cfg.d_max_cm);
  CddConfig cdd = cfg.cdd();
  Csr full{cdd.d_min_cm, cdd.d_max_cm};

  std::ofstream tsv;
  if (!o.candidates_path.empty()) {
    tsv.open(o.candidates_path);
    if (!tsv) throw IoError("cannot open for writing: " + o.candidates_path);
    tsv << "frame\trank\tlines\trms\td_cm\ttheta_deg\th_cm\te_cm\n";
  }

  std::vector<FrameEstimate> ests;
  int hits = 0;
  for (const auto& [idx, path] : list_frames(o.frames_dir)) {
    ImageU8 img = read_pgm(path);
    FrameDetection det = detect_frame(img, full, cfg, remap, model);
    ests.push_back(to_estimate(idx, det));
    if (det.present()) ++hits;
    if (tsv.is_open()) {
      char buf[160];
      for (size_t r = 0; r < det.survivors.size(); ++r) {
        const Candidate& c = det.survivors[r];
        std::snprintf(buf, sizeof buf, "%d\t%zu\t%d\t%.4f\t%.2f\t%.3f\t%.2f\t%.2f\n", idx, r,
                      c.tuple.size, c.fit.rms, c.fit.state.d_cm,
                      c.fit.state.theta_rad * kDegPerRad, c.fit.state.h_cm, c.fit.state.e_cm);
        tsv << buf;
      }
    }
  }
  write_estimates_csv(o.out_path, ests);
  std::printf("detected a curb on %d of %zu frames, wrote %s\n", hits, ests.size(),
              o.out_path.c_str());
}

struct TrackOpts {
  CommonOpts common;
  std::string model_path, frames_dir, out_path, est_path;
};

void run_track(const TrackOpts& o) {
  Config cfg = o.common.load();
  SvmModel model = load_svm(o.model_path);
  Pipeline pipe(cfg, std::move(model));

  std::ofstream log(o.out_path);
  if (!log) throw IoError("cannot open for writing: " + o.out_path);
  log << "frame,mode,detected"
         ",pred_d_cm,pred_theta_rad,pred_h_cm,pred_e_cm"
         ",chosen_d_cm,chosen_theta_rad,chosen_h_cm,chosen_e_cm"
         ",smooth_d_cm,smooth_theta_rad,smooth_h_cm,smooth_e_cm"
         ",csr_near_cm,csr_far_cm\n";

  std::vector<FrameEstimate> ests;
  std::string final_mode = "collecting";
  size_t n = 0;
  for (const auto& [idx, path] : list_frames(o.frames_dir)) {
    ImageU8 img = read_pgm(path);
    TrackedFrame tf = pipe.step(img);
    std::string row = std::to_string(idx);
    row += ",";
    row += mode_name(tf.track.mode);
    row += tf.track.detected ? ",1" : ",0";
    append_state_cells(row, tf.track.predicted);
    append_state_cells(row, tf.track.chosen);
    append_state_cells(row, tf.track.smoothed);
    char buf[48];
    std::snprintf(buf, sizeof buf, ",%.2f,%.2f\n", tf.track.csr.d_near_cm, tf.track.csr.d_far_cm);
    row += buf;
    log << row;
    if (!o.est_path.empty()) ests.push_back(to_estimate(idx, tf));
    final_mode = mode_name(tf.track.mode);
    ++n;
  }
  if (!o.est_path.empty()) write_estimates_csv(o.est_path, ests);
  std::printf("tracked %zu frames, final mode %s, wrote %s\n", n, final_mode.c_str(),
              o.out_path.c_str());
}

struct EvalOpts {
  CommonOpts common;
  std::string truth_path, est_path, report_path, bins_path, box_path;
  std::string box_param = "d";
};

void run_evaluate(const EvalOpts& o) {
  Config cfg = o.common.load();
  std::vector<FrameTruth> gt = read_truth_csv(o.truth_path);
  std::vector<FrameEstimate> est = read_estimates_csv(o.est_path);
  EvalReport rep = evaluate_frames(gt, est, cfg.cdd(), cfg.eval);
  if (!o.report_path.empty()) write_report_json(o.report_path, rep);
  if (!o.bins_path.empty()) write_bins_csv(o.bins_path, rep);
  if (!o.box_path.empty()) {
    int param = -1;
    for (int p = 0; p < 4; ++p)
      if (o.box_param == kParamNames[p]) param = p;
    if (param < 0) throw ConfigError("box parameter must be one of d, theta, h, e");
    write_box_data(o.box_path, rep, param);
  }
  std::printf(
      "frames %d  tp %d fp %d fn %d tn %d  acc %.3f  f1 %.3f%s  depth mape %.2f%%  h mae %.2f cm\n",
      rep.frames, rep.cls.tp, rep.cls.fp, rep.cls.fn, rep.cls.tn, rep.cls.accuracy, rep.cls.f1,
      rep.cls.degenerate ? " (degenerate)" : "", rep.overall_mape_d, rep.overall_mae[kParamH]);
}

struct RemapCheckOpts {
  CommonOpts common;
  double tol = 2e-3;
};

int run_remap_check(const RemapCheckOpts& o) {
  Config cfg = o.common.load();
  RemapConfig remap = RemapConfig::create(cfg.rig, cfg.d_max_cm);
  double worst = 0.0;
  for (int v = remap.reference_row; v <= cfg.rig.image_height; ++v)
    worst = std::max(worst, std::abs(forward_v(v, remap) - open_form_v(v, remap)));
  int rows = cfg.rig.image_height - remap.reference_row + 1;
  std::printf("row remap: closed form vs exact sum over %d rows, max deviation %.3g px (tol %g)\n",
              rows, worst, o.tol);
  return worst <= o.tol ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"monocular forward-view curb detection and localization"};
  app.set_version_flag("--version", std::string(kVersionString));
  app.require_subcommand(1);

  RenderOpts ro;
  CLI::App* render = app.add_subcommand("render", "render a synthetic approach sequence");
  render->add_option("--out", ro.out_dir, "output directory")->required();
  render->add_option("--frames", ro.frames, "frame count")->check(CLI::PositiveNumber);
  render->add_option("--d-start", ro.d_start, "curb distance on the first frame, cm");
  render->add_option("--d-end", ro.d_end, "curb distance on the last frame, cm");
  render->add_option("--theta", ro.theta, "curb yaw, rad");
  render->add_option("--height", ro.height, "curb height, cm");
  render->add_option("--extent", ro.extent, "curb top depth extent, cm");
  render->add_flag("--no-curb", ro.no_curb, "render free road");
  render->add_option("--preset", ro.preset, "lighting preset")
      ->check(CLI::IsMember({"clear", "shadow"}));
  render->add_option("--noise", ro.noise, "pixel noise sigma");
  render->add_option("--texture", ro.texture, "surface texture amplitude");
  render->add_flag("--stripe", ro.stripe, "paint a road marking stripe");
  render->add_option("--stripe-d", ro.stripe_d, "stripe distance, cm");
  render->add_option("--stripe-width", ro.stripe_width, "stripe depth extent, cm");
  render->add_option("--stripe-delta", ro.stripe_delta, "stripe brightness lift");
  render->add_option("--seed", ro.seed, "noise seed");
  add_config_opts(render, ro.common);

  TrainOpts to;
  CLI::App* train = app.add_subcommand("train", "train the curb face classifier");
  train->add_option("--out", to.out_path, "model file to write")->required();
  train->add_option("--scenes", to.scenes, "synthetic scenes in the corpus")
      ->check(CLI::PositiveNumber);
  train->add_option("--seed", to.seed, "corpus seed");
  add_config_opts(train, to.common);

  DetectOpts dopt;
  CLI::App* detect = app.add_subcommand("detect", "per-frame detection over a sequence");
  detect->add_option("--model", dopt.model_path, "classifier model file")->required();
  detect->add_option("--frames", dopt.frames_dir, "directory of .pgm frames")->required();
  detect->add_option("--out", dopt.out_path, "estimate csv to write")->required();
  detect->add_option("--candidates", dopt.candidates_path, "tsv dump of surviving candidates");
  add_config_opts(detect, dopt.common);

  TrackOpts tko;
  CLI::App* track = app.add_subcommand("track", "detection with tracking in the loop");
  track->add_option("--model", tko.model_path, "classifier model file")->required();
  track->add_option("--frames", tko.frames_dir, "directory of .pgm frames")->required();
  track->add_option("--out", tko.out_path, "track log csv to write")->required();
  track->add_option("--est", tko.est_path, "also write an estimate csv");
  add_config_opts(track, tko.common);

  EvalOpts eo;
  CLI::App* evaluate = app.add_subcommand("evaluate", "score an estimate log against truth");
  evaluate->add_option("--truth", eo.truth_path, "ground truth csv")->required();
  evaluate->add_option("--est", eo.est_path, "estimate csv")->required();
  evaluate->add_option("--report", eo.report_path, "json report to write");
  evaluate->add_option("--bins", eo.bins_path, "per-bin csv to write");
  evaluate->add_option("--box", eo.box_path, "gnuplot candlestick data to write");
  evaluate->add_option("--box-param", eo.box_param, "parameter of the box file: d, theta, h, e");
  add_config_opts(evaluate, eo.common);

  RemapCheckOpts rco;
  CLI::App* remap_check =
      app.add_subcommand("remap-check", "verify the closed-form row remap against the exact sum");
  remap_check->add_option("--tol", rco.tol, "acceptable deviation, px");
  add_config_opts(remap_check, rco.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (render->parsed()) run_render(ro);
    else if (train->parsed()) run_train(to);
    else if (detect->parsed()) run_detect(dopt);
    else if (track->parsed()) run_track(tko);
    else if (evaluate->parsed()) run_evaluate(eo);
    else if (remap_check->parsed()) return run_remap_check(rco);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
