#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "curbsight/eval.hpp"
#include "curbsight/synthscene.hpp"

using namespace curbsight;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

const std::string& cli_path() {
  static std::string path = [] {
    const char* p = std::getenv("CURBSIGHT_CLI");
    REQUIRE(p != nullptr);
    return std::string(p);
  }();
  return path;
}

const fs::path& work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "curbsight_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args) {
  fs::path out = work_dir() / "stdout.txt";
  fs::path err = work_dir() / "stderr.txt";
  std::string cmd = cli_path() + " " + args + " > " + out.string() + " 2> " + err.string();
  int status = std::system(cmd.c_str());
  RunResult r;
  r.code = (status >= 0 && status <= 255) ? status : (status >> 8) & 0xff;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

int count_lines(const fs::path& p) {
  std::ifstream f(p);
  std::string line;
  int n = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace

TEST_CASE("version, help and usage errors") {
  RunResult v = run("--version");
  CHECK(v.code == 0);
  CHECK(v.out.find("0.1.0") != std::string::npos);

  CHECK(run("").code == 2);            // a subcommand is required
  CHECK(run("frobnicate").code == 2);  // and it has to exist
  CHECK(run("detect").code == 2);      // missing required options
  CHECK(run("render --out x --preset dusk").code == 2);
}

TEST_CASE("remap self check") {
  RunResult r = run("remap-check");
  CHECK(r.code == 0);
  CHECK(r.out.find("max deviation") != std::string::npos);

  CHECK(run("remap-check --tol 1e-9").code == 1);  // honest failure path

  // a shorter scan range starts the remapped band lower in the image
  RunResult s = run("remap-check --set range.d_max_cm=300");
  CHECK(s.code == 0);
  CHECK(s.out.find("over 357 rows") != std::string::npos);
}

TEST_CASE("config problems exit with their own code") {
  RunResult r = run("remap-check --set zig.zag=1");
  CHECK(r.code == 3);
  CHECK(r.err.find("unknown config section") != std::string::npos);

  fs::path cfg = work_dir() / "bad_key.json";
  std::ofstream(cfg) << "{\"rig\": {\"focal\": 900}}\n";
  RunResult k = run("remap-check --config " + cfg.string());
  CHECK(k.code == 3);
  CHECK(k.err.find("rig.focal") != std::string::npos);

  fs::path junk = work_dir() / "junk.json";
  std::ofstream(junk) << "{not json";
  CHECK(run("remap-check --config " + junk.string()).code == 3);

  fs::path ok = work_dir() / "ok.json";
  std::ofstream(ok) << "{\"hough\": {\"max_lines\": 5}}\n";
  CHECK(run("remap-check --config " + ok.string()).code == 0);
}

TEST_CASE("train, render, detect, track and evaluate chain") {
  fs::path dir = work_dir();
  fs::path model = dir / "model.svm";
  fs::path seq = dir / "seq";

  RunResult tr = run("train --out " + model.string() + " --scenes 16 --seed 33");
  REQUIRE(tr.code == 0);
  CHECK(tr.out.find("training accuracy") != std::string::npos);
  REQUIRE(fs::exists(model));

  RunResult re = run("render --out " + seq.string() +
                     " --frames 8 --d-start 380 --d-end 170 --theta 0.06 --height 14"
                     " --extent 22 --noise 3 --texture 6 --seed 9");
  REQUIRE(re.code == 0);
  for (int i = 0; i < 8; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.pgm", i);
    CHECK(fs::exists(seq / name));
  }
  CHECK(slurp(seq / "frame_0000.pgm").find("curbsight seed=9") != std::string::npos);

  std::vector<FrameTruth> truth = read_truth_csv((seq / "truth.csv").string());
  REQUIRE(truth.size() == 8);
  CHECK(truth.front().state.d_cm == Catch::Approx(380.0));
  CHECK(truth.back().state.d_cm == Catch::Approx(170.0));

  std::ifstream mf(seq / "meta.json");
  nlohmann::json meta = nlohmann::json::parse(mf);
  CHECK(meta["frames"] == 8);
  CHECK(meta["rig"]["image_width"] == 1920);
  CHECK(meta["photometry"]["preset"] == "clear");

  fs::path est = dir / "est.csv";
  fs::path cands = dir / "cands.tsv";
  RunResult de = run("detect --model " + model.string() + " --frames " + seq.string() +
                     " --out " + est.string() + " --candidates " + cands.string());
  REQUIRE(de.code == 0);
  std::vector<FrameEstimate> rows = read_estimates_csv(est.string());
  REQUIRE(rows.size() == 8);
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].present);
    CHECK(rows[i].state.d_cm == Catch::Approx(truth[i].state.d_cm).margin(25.0));
  }
  std::ifstream ct(cands);
  std::string header;
  std::getline(ct, header);
  CHECK(header == "frame\trank\tlines\trms\td_cm\ttheta_deg\th_cm\te_cm");
  CHECK(count_lines(cands) >= 9);

  fs::path tlog = dir / "track.csv";
  fs::path test_ = dir / "est_track.csv";
  RunResult tk = run("track --model " + model.string() + " --frames " + seq.string() + " --out " +
                     tlog.string() + " --est " + test_.string());
  REQUIRE(tk.code == 0);
  CHECK(tk.out.find("final mode tracking") != std::string::npos);
  std::ifstream lf(tlog);
  std::string line;
  std::getline(lf, line);
  CHECK(line.rfind("frame,mode,detected,pred_d_cm", 0) == 0);
  std::vector<std::string> body;
  while (std::getline(lf, line)) body.push_back(line);
  REQUIRE(body.size() == 8);
  CHECK(body[0].find("collecting") != std::string::npos);
  CHECK(body[4].find("tracking") != std::string::npos);
  CHECK(body[7].find("NA") == std::string::npos);  // locked: every column filled

  fs::path report = dir / "report.json";
  fs::path bins = dir / "bins.csv";
  fs::path box = dir / "box.dat";
  RunResult ev = run("evaluate --truth " + (seq / "truth.csv").string() + " --est " +
                     est.string() + " --report " + report.string() + " --bins " + bins.string() +
                     " --box " + box.string());
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("acc 1.000") != std::string::npos);
  std::ifstream rf(report);
  nlohmann::json rep = nlohmann::json::parse(rf);
  CHECK(rep["classification"]["tp"] == 8);
  CHECK(rep["classification"]["fp"] == 0);
  CHECK(count_lines(bins) == 17);  // header + one row per 25 cm bin
  CHECK(count_lines(box) >= 2);

  CHECK(run("evaluate --truth " + (dir / "missing.csv").string() + " --est " + est.string())
            .code == 1);
  CHECK(run("evaluate --truth " + (seq / "truth.csv").string() + " --est " + est.string() +
            " --box " + box.string() + " --box-param q")
            .code == 3);
}
