#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "curbsight/appearance.hpp"
#include "curbsight/edge_lines.hpp"
#include "curbsight/errors.hpp"
#include "curbsight/eval.hpp"
#include "curbsight/geometry.hpp"
#include "curbsight/template_fit.hpp"
#include "curbsight/tracker.hpp"

namespace curbsight {

// Every tunable of the detection and tracking stack in one place. The
// defaults are the shipped operating point; a config file only needs the
// keys it wants to change.
struct Config {
  CameraRig rig;
  double d_max_cm = 500.0;
  double w_max_cm = 130.0;
  double headroom_h_cm = 30.0;
  double headroom_e_cm = 40.0;
  EdgeParams edges;
  HoughParams hough;
  ClusterParams cluster;
  FitConfig fit;
  HogParams hog;
  SvmTrainConfig svm;
  TrackerConfig tracker;
  EvalConfig eval;

  CddConfig cdd() const { return CddConfig::from_rig(rig, d_max_cm, w_max_cm); }

  void validate() const {
    rig.validate();
    cdd().validate();
    tracker.validate();
    eval.validate();
    if (headroom_h_cm < 0.0 || headroom_e_cm < 0.0)
      throw ConfigError("headrooms cannot be negative");
  }
};

namespace detail {

inline double num_of(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError("expected a number at " + where);
  return v.get<double>();
}

inline int int_of(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError("expected an integer at " + where);
  return v.get<int>();
}

}  // namespace detail

// Route one dotted key to its field. Shared by file loading and --set
// overrides so both reject the same unknown keys the same way.
inline void config_set(Config& c, const std::string& section, const std::string& key,
                       const nlohmann::json& v) {
  using detail::int_of;
  using detail::num_of;
  const std::string where = section + "." + key;
  if (section == "rig") {
    if (key == "fx") c.rig.fx = num_of(v, where);
    else if (key == "fy") c.rig.fy = num_of(v, where);
    else if (key == "cx") c.rig.cx = num_of(v, where);
    else if (key == "cy") c.rig.cy = num_of(v, where);
    else if (key == "height_cm") c.rig.height_cm = num_of(v, where);
    else if (key == "image_width") c.rig.image_width = int_of(v, where);
    else if (key == "image_height") c.rig.image_height = int_of(v, where);
    else throw ConfigError("unknown config key: " + where);
  } else if (section == "range") {
    if (key == "d_max_cm") c.d_max_cm = num_of(v, where);
    else if (key == "w_max_cm") c.w_max_cm = num_of(v, where);
    else if (key == "headroom_h_cm") c.headroom_h_cm = num_of(v, where);
    else if (key == "headroom_e_cm") c.headroom_e_cm = num_of(v, where);
    else throw ConfigError("unknown config key: " + where);
  } else if (section == "edges") {
    if (key == "blur_sigma") c.edges.blur_sigma = num_of(v, where);
    else if (key == "low_thresh") c.edges.low_thresh = num_of(v, where);
    else if (key == "high_thresh") c.edges.high_thresh = num_of(v, where);
    else throw ConfigError("unknown config key: " + where);
  } else if (section == "hough") {
    if (key == "angle_band_deg") c.hough.angle_band_deg = num_of(v, where);
    else if (key == "angle_step_deg") c.hough.angle_step_deg = num_of(v, where);
    else if (key == "offset_step_px") c.hough.offset_step_px = num_of(v, where);
    else if (key == "min_support_frac") c.hough.min_support_frac = num_of(v, where);
    else if (key == "max_lines") c.hough.max_lines = int_of(v, where);
    else throw ConfigError("unknown config key: " + where);
  } else if (section == "cluster") {
    if (key == "tol_a") c.cluster.tol_a = num_of(v, where);
    else if (key == "tol_b_px") c.cluster.tol_b_px = num_of(v, where);
    else throw ConfigError("unknown config key: " + where);
  } else if (section == "fit") {
    if (key == "d_lo") c.fit.d_lo = num_of(v, where);
    else if (key == "d_hi") c.fit.d_hi = num_of(v, where);
    else if (key == "theta_lo") c.fit.theta_lo = num_of(v, where);
    else if (key == "theta_hi") c.fit.theta_hi = num_of(v, where);
    else if (key == "h_lo") c.fit.h_lo = num_of(v, where);
    else if (key == "h_hi") c.fit.h_hi = num_of(v, where);
    else if (key == "e_lo") c.fit.e_lo = num_of(v, where);
    else if (key == "e_hi") c.fit.e_hi = num_of(v, where);
    else if (key == "max_iterations") c.fit.max_iterations = int_of(v, where);
    else throw ConfigError("unknown config key: " + where);
  } else if (section == "hog") {
    if (key == "window") c.hog.window = int_of(v, where);
    else if (key == "cell") c.hog.cell = int_of(v, where);
    else if (key == "bins") c.hog.bins = int_of(v, where);
    else if (key == "eps") c.hog.eps = num_of(v, where);
    else if (key == "clip") c.hog.clip = num_of(v, where);
    else if (key == "blur_sigma") c.hog.blur_sigma = num_of(v, where);
    else throw ConfigError("unknown config key: " + where);
  } else if (section == "svm") {
    if (key == "lambda") c.svm.lambda = num_of(v, where);
    else if (key == "max_iterations") c.svm.max_iterations = int_of(v, where);
    else if (key == "tol") c.svm.tol = num_of(v, where);
    else throw ConfigError("unknown config key: " + where);
  } else if (section == "tracker") {
    if (key == "collect_frames") c.tracker.collect_frames = int_of(v, where);
    else if (key == "window") c.tracker.window = int_of(v, where);
    else if (key == "max_misses") c.tracker.max_misses = int_of(v, where);
    else if (key == "scale_d") c.tracker.scale_d = num_of(v, where);
    else if (key == "scale_theta") c.tracker.scale_theta = num_of(v, where);
    else if (key == "scale_h") c.tracker.scale_h = num_of(v, where);
    else if (key == "scale_e") c.tracker.scale_e = num_of(v, where);
    else if (key == "sigma_floor_d") c.tracker.sigma_floor_d = num_of(v, where);
    else if (key == "sigma_floor_theta") c.tracker.sigma_floor_theta = num_of(v, where);
    else if (key == "sigma_floor_h") c.tracker.sigma_floor_h = num_of(v, where);
    else if (key == "sigma_floor_e") c.tracker.sigma_floor_e = num_of(v, where);
    else if (key == "gate_sigmas") c.tracker.gate_sigmas = num_of(v, where);
    else if (key == "csr_margin_cm") c.tracker.csr_margin_cm = num_of(v, where);
    else if (key == "combo_guard") c.tracker.combo_guard = int_of(v, where);
    else throw ConfigError("unknown config key: " + where);
  } else if (section == "eval") {
    if (key == "tp_gate_cm") c.eval.tp_gate_cm = num_of(v, where);
    else if (key == "bin_width_cm") c.eval.bin_width_cm = num_of(v, where);
    else throw ConfigError("unknown config key: " + where);
  } else {
    throw ConfigError("unknown config section: " + section);
  }
}

inline void apply_json(Config& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  for (const auto& [section, body] : j.items()) {
    if (!body.is_object()) throw ConfigError("config section must be an object: " + section);
    for (const auto& [key, value] : body.items()) config_set(c, section, key, value);
  }
  // the fit weighting references the same operating range as the scan
  c.fit.d_max_cm = c.d_max_cm;
  c.fit.w_max_cm = c.w_max_cm;
}

inline Config load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f, nullptr, true, true);  // allow comments
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid json: ") + e.what());
  }
  Config c;
  apply_json(c, j);
  c.validate();
  return c;
}

// "section.key=value" override, value in json syntax (bare numbers work)
inline void apply_override(Config& c, const std::string& spec) {
  auto eq = spec.find('=');
  auto dot = spec.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ConfigError("override must look like section.key=value: " + spec);
  std::string section = spec.substr(0, dot);
  std::string key = spec.substr(dot + 1, eq - dot - 1);
  nlohmann::json v;
  try {
    v = nlohmann::json::parse(spec.substr(eq + 1));
  } catch (const nlohmann::json::parse_error&) {
    throw ConfigError("override value is not valid json: " + spec);
  }
  config_set(c, section, key, v);
  c.fit.d_max_cm = c.d_max_cm;
  c.fit.w_max_cm = c.w_max_cm;
}

inline nlohmann::json config_to_json(const Config& c) {
  nlohmann::json j;
  j["rig"] = {{"fx", c.rig.fx},
              {"fy", c.rig.fy},
              {"cx", c.rig.cx},
              {"cy", c.rig.cy},
              {"height_cm", c.rig.height_cm},
              {"image_width", c.rig.image_width},
              {"image_height", c.rig.image_height}};
  j["range"] = {{"d_max_cm", c.d_max_cm},
                {"w_max_cm", c.w_max_cm},
                {"headroom_h_cm", c.headroom_h_cm},
                {"headroom_e_cm", c.headroom_e_cm}};
  j["edges"] = {{"blur_sigma", c.edges.blur_sigma},
                {"low_thresh", c.edges.low_thresh},
                {"high_thresh", c.edges.high_thresh}};
  j["hough"] = {{"angle_band_deg", c.hough.angle_band_deg},
                {"angle_step_deg", c.hough.angle_step_deg},
                {"offset_step_px", c.hough.offset_step_px},
                {"min_support_frac", c.hough.min_support_frac},
                {"max_lines", c.hough.max_lines}};
  j["cluster"] = {{"tol_a", c.cluster.tol_a}, {"tol_b_px", c.cluster.tol_b_px}};
  j["fit"] = {{"d_lo", c.fit.d_lo},         {"d_hi", c.fit.d_hi},
              {"theta_lo", c.fit.theta_lo}, {"theta_hi", c.fit.theta_hi},
              {"h_lo", c.fit.h_lo},         {"h_hi", c.fit.h_hi},
              {"e_lo", c.fit.e_lo},         {"e_hi", c.fit.e_hi},
              {"max_iterations", c.fit.max_iterations}};
  j["hog"] = {{"window", c.hog.window}, {"cell", c.hog.cell},
              {"bins", c.hog.bins},     {"eps", c.hog.eps},
              {"clip", c.hog.clip},     {"blur_sigma", c.hog.blur_sigma}};
  j["svm"] = {{"lambda", c.svm.lambda},
              {"max_iterations", c.svm.max_iterations},
              {"tol", c.svm.tol}};
  j["tracker"] = {{"collect_frames", c.tracker.collect_frames},
                  {"window", c.tracker.window},
                  {"max_misses", c.tracker.max_misses},
                  {"scale_d", c.tracker.scale_d},
                  {"scale_theta", c.tracker.scale_theta},
                  {"scale_h", c.tracker.scale_h},
                  {"scale_e", c.tracker.scale_e},
                  {"sigma_floor_d", c.tracker.sigma_floor_d},
                  {"sigma_floor_theta", c.tracker.sigma_floor_theta},
                  {"sigma_floor_h", c.tracker.sigma_floor_h},
                  {"sigma_floor_e", c.tracker.sigma_floor_e},
                  {"gate_sigmas", c.tracker.gate_sigmas},
                  {"csr_margin_cm", c.tracker.csr_margin_cm},
                  {"combo_guard", static_cast<int>(c.tracker.combo_guard)}};
  j["eval"] = {{"tp_gate_cm", c.eval.tp_gate_cm}, {"bin_width_cm", c.eval.bin_width_cm}};
  return j;
}

}  // namespace curbsight
