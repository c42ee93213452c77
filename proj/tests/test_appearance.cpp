#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "curbsight/appearance.hpp"

using namespace curbsight;
using Catch::Approx;

namespace {

std::vector<Line2> plain_lines(const std::vector<ScoredLine>& scored) {
  std::vector<Line2> out;
  for (const ScoredLine& s : scored) out.push_back(s.line);
  return out;
}

// Naive reference descriptor: walks each block's pixel region directly and
// re-derives every histogram from scratch, no shared cell table.
std::vector<double> reference_descriptor(const ImageF& win) {
  const int cell = 8, bins = 8, cells = 4;
  auto cell_hist = [&](int cx0, int cy0) {
    std::array<double, 8> h{};
    for (int y = cy0 * cell; y < (cy0 + 1) * cell; ++y)
      for (int x = cx0 * cell; x < (cx0 + 1) * cell; ++x) {
        int xm = x > 0 ? x - 1 : 0, xp = x < 31 ? x + 1 : 31;
        int ym = y > 0 ? y - 1 : 0, yp = y < 31 ? y + 1 : 31;
        double dx = double(win.at(xp, y)) - double(win.at(xm, y));
        double dy = double(win.at(x, yp)) - double(win.at(x, ym));
        double mag = std::sqrt(dx * dx + dy * dy);
        if (mag <= 0.0) continue;
        double ang = std::atan2(dy, dx) * 57.29577951308232;
        if (ang < 0.0) ang += 360.0;
        int bin = static_cast<int>((ang + 22.5) / 45.0);
        if (bin > bins - 1) bin = 0;  // wrap of the topmost half-bin
        h[bin] += mag;
      }
    return h;
  };

  std::vector<double> out;
  for (int by = 0; by < cells - 1; ++by)
    for (int bx = 0; bx < cells - 1; ++bx) {
      std::vector<double> block;
      for (int cy = by; cy <= by + 1; ++cy)
        for (int cx = bx; cx <= bx + 1; ++cx) {
          auto h = cell_hist(cx, cy);
          block.insert(block.end(), h.begin(), h.end());
        }
      double n2 = 0.0;
      for (double v : block) n2 += v * v;
      double inv = 1.0 / std::sqrt(n2 + 4e5);
      for (double v : block) out.push_back(std::min(v * inv, 0.2));
    }
  return out;
}

ImageF random_window(std::mt19937& rng) {
  std::uniform_real_distribution<float> ud(0.0f, 255.0f);
  ImageF w(32, 32);
  for (float& p : w.px) p = ud(rng);
  return w;
}

double bin_mass(const Feature& f, int bin) {
  double m = 0.0;
  for (size_t i = bin; i < f.size(); i += 8) m += f[i];
  return m;
}

double total_mass(const Feature& f) {
  double m = 0.0;
  for (double v : f) m += v;
  return m;
}

int accuracy_count(const SvmModel& m, const std::vector<Feature>& xs, const std::vector<int>& ys) {
  int ok = 0;
  for (size_t i = 0; i < xs.size(); ++i)
    if (m.decide(xs[i]) == ys[i]) ok++;
  return ok;
}

double hinge_objective(const SvmModel& m, const std::vector<Feature>& xs,
                       const std::vector<int>& ys, double lambda) {
  double j = 0.0;
  for (double wk : m.w) j += wk * wk;
  j *= 0.5 * lambda;
  for (size_t i = 0; i < xs.size(); ++i)
    j += std::max(0.0, 1.0 - ys[i] * m.score(xs[i])) / double(xs.size());
  return j;
}

// small linearly separable toy set, margin 2 around the first coordinate
void toy_set(std::vector<Feature>& xs, std::vector<int>& ys) {
  for (int i = 0; i < 20; ++i) {
    xs.push_back({2.0 + 0.1 * i, 0.3 * (i % 5) - 0.6});
    ys.push_back(1);
    xs.push_back({-2.0 - 0.1 * i, 0.3 * ((i + 2) % 5) - 0.6});
    ys.push_back(-1);
  }
}

}  // namespace

TEST_CASE("orientation descriptor matches a naive reference", "[hog]") {
  std::mt19937 rng(4021);
  for (int trial = 0; trial < 40; ++trial) {
    ImageF win = random_window(rng);
    Feature got = hog_descriptor(win);
    std::vector<double> want = reference_descriptor(win);
    REQUIRE(got.size() == size_t(kHogDim));
    REQUIRE(want.size() == size_t(kHogDim));
    double worst = 0.0;
    for (size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("descriptor structure on synthetic gradients", "[hog]") {
  SECTION("constant window has a zero descriptor") {
    ImageF win(32, 32, 77.0f);
    Feature f = hog_descriptor(win);
    REQUIRE(f.size() == size_t(kHogDim));
    for (double v : f) CHECK(v == 0.0);
  }

  SECTION("vertical step puts all mass in the horizontal-gradient bin") {
    ImageF win(32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) win.at(x, y) = x < 16 ? 10.0f : 200.0f;
    Feature f = hog_descriptor(win);
    double total = total_mass(f);
    REQUIRE(total > 0.0);
    CHECK(bin_mass(f, 0) == Approx(total));
  }

  SECTION("gradient polarity picks opposite bins") {
    ImageF down(32, 32), up(32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        down.at(x, y) = y < 16 ? 10.0f : 200.0f;  // brighter below: +90 degrees
        up.at(x, y) = y < 16 ? 200.0f : 10.0f;    // brighter above: 270 degrees
      }
    Feature fd = hog_descriptor(down);
    Feature fu = hog_descriptor(up);
    REQUIRE(total_mass(fd) > 0.0);
    CHECK(bin_mass(fd, 2) == Approx(total_mass(fd)));
    CHECK(bin_mass(fu, 6) == Approx(total_mass(fu)));
  }

  SECTION("oblique ramp lands in one interior bin") {
    ImageF win(32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) win.at(x, y) = float(3 * y - 3 * x);
    // gradient angle 135 degrees: the centre of bin 3
    Feature f = hog_descriptor(win);
    double total = total_mass(f);
    REQUIRE(total > 0.0);
    CHECK(bin_mass(f, 3) / total > 0.999);
  }

  SECTION("strong content saturates blocks, weak content is suppressed") {
    std::mt19937 rng(99);
    ImageF loud = random_window(rng);  // uniform [0, 255]: huge gradients
    ImageF quiet(32, 32);
    std::uniform_real_distribution<float> small(-3.0f, 3.0f);
    for (float& p : quiet.px) p = 100.0f + small(rng);
    Feature fl = hog_descriptor(loud);
    Feature fq = hog_descriptor(quiet);
    for (int b = 0; b < 9; ++b) {
      double nl = 0.0, nq = 0.0;
      for (int k = 0; k < 32; ++k) {
        nl += fl[b * 32 + k] * fl[b * 32 + k];
        nq += fq[b * 32 + k] * fq[b * 32 + k];
      }
      CHECK(nl <= 1.0 + 1e-12);
      CHECK(nl > 0.7);   // well above the energy floor: norm kept (minus clip)
      CHECK(nq < 0.25);  // below the energy floor: block shrunk
    }
  }

  SECTION("wrong window size is rejected") {
    ImageF win(31, 32, 0.0f);
    CHECK_THROWS_AS(hog_descriptor(win), DimensionMismatch);
  }
}

TEST_CASE("face window sampling geometry", "[windows]") {
  // raster whose value equals its row index: resampling is easy to predict
  ImageU8 raster(400, 200);
  for (int y = 0; y < 200; ++y)
    for (int x = 0; x < 400; ++x) raster.at(x, y) = uint8_t(y);

  SECTION("windows sit between the lines and resample exactly") {
    Line2 base(0.0, 150.0), top(0.0, 118.0);  // gap 32: source rows map 1:1
    auto wins = sample_face_windows(raster, base, top);
    for (const ImageF& w : wins) {
      REQUIRE(w.width == 32);
      REQUIRE(w.height == 32);
      // blur borders clamp, so check interior rows only
      for (int b = 4; b < 28; ++b)
        for (int a = 4; a < 28; a += 7) CHECK(w.at(a, b) == Approx(118.0 + b).margin(1e-3));
    }
  }

  SECTION("thin face bands are rejected") {
    CHECK_THROWS_AS(sample_face_windows(raster, Line2(0.0, 120.0), Line2(0.0, 117.0)),
                    DegenerateFace);
  }

  SECTION("windows leaving the raster are rejected") {
    CHECK_THROWS_AS(sample_face_windows(raster, Line2(0.0, 36.0), Line2(0.0, -4.0)),
                    FaceOutsideImage);
    CHECK_THROWS_AS(sample_face_windows(raster, Line2(0.0, 210.0), Line2(0.0, 150.0)),
                    FaceOutsideImage);
  }

  SECTION("empty raster is rejected") {
    CHECK_THROWS_AS(sample_face_windows(ImageU8(), Line2(0.0, 150.0), Line2(0.0, 118.0)),
                    EmptyImage);
  }
}

TEST_CASE("linear classifier training on separable data", "[svm]") {
  std::vector<Feature> xs;
  std::vector<int> ys;
  toy_set(xs, ys);

  SECTION("training separates the classes and lowers the objective") {
    SvmModel m = train_svm(xs, ys);
    CHECK(accuracy_count(m, xs, ys) == int(xs.size()));
    // untrained model scores objective 1.0 (all hinge terms active)
    CHECK(hinge_objective(m, xs, ys, 1e-3) < 0.1);
    CHECK(m.w[0] > 0.0);
  }

  SECTION("training is deterministic") {
    SvmModel a = train_svm(xs, ys);
    SvmModel b = train_svm(xs, ys);
    REQUIRE(a.w.size() == b.w.size());
    for (size_t i = 0; i < a.w.size(); ++i) CHECK(a.w[i] == b.w[i]);
    CHECK(a.bias == b.bias);
  }

  SECTION("objective is monotone in the iteration budget") {
    double prev = 1e300;
    for (int budget = 1; budget <= 15; ++budget) {
      SvmTrainConfig tc;
      tc.max_iterations = budget;
      SvmModel m = train_svm(xs, ys, tc);
      double j = hinge_objective(m, xs, ys, tc.lambda);
      CHECK(j <= prev + 1e-12);
      prev = j;
    }
  }

  SECTION("a zero score falls to the negative class") {
    SvmModel m;
    m.w = {1.0, 0.0};
    m.bias = 0.0;
    CHECK(m.decide({0.0, 5.0}) == -1);
    CHECK(m.decide({1e-12, 0.0}) == 1);
  }

  SECTION("degenerate inputs are rejected") {
    CHECK_THROWS_AS(train_svm({}, {}), EmptyClass);
    CHECK_THROWS_AS(train_svm({{1.0}, {2.0}}, {1, 1}), EmptyClass);
    CHECK_THROWS_AS(train_svm({{1.0}, {2.0}}, {1}), DimensionMismatch);
    CHECK_THROWS_AS(train_svm({{1.0}, {2.0, 3.0}}, {1, -1}), DimensionMismatch);
    CHECK_THROWS_AS(train_svm({{1.0}, {2.0}}, {1, 0}), ConfigError);
    SvmModel m;
    m.w = {1.0, 2.0};
    CHECK_THROWS_AS(m.score({1.0}), DimensionMismatch);
  }
}

TEST_CASE("model file round trip", "[svm]") {
  std::string path = "appearance_model_roundtrip.txt";
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  SvmModel m;
  m.w.resize(kHogDim);
  for (double& w : m.w) w = ud(rng);
  m.bias = -0.815624938271604;

  save_svm(path, m);
  SvmModel r = load_svm(path);
  REQUIRE(r.w.size() == m.w.size());
  CHECK(r.bias == m.bias);  // 17 significant digits round-trip exactly
  for (size_t i = 0; i < m.w.size(); ++i) CHECK(r.w[i] == m.w[i]);

  SECTION("the file starts with the format line") {
    std::ifstream f(path);
    std::string first;
    std::getline(f, first);
    CHECK(first == std::string(kSvmMagic));
  }

  SECTION("foreign and missing files are rejected") {
    std::ofstream bad("appearance_model_bad.txt");
    bad << "P5\n1 1\n255\n";
    bad.close();
    CHECK_THROWS_AS(load_svm("appearance_model_bad.txt"), IoError);
    CHECK_THROWS_AS(load_svm("appearance_model_missing.txt"), IoError);
    std::remove("appearance_model_bad.txt");
  }
  std::remove(path.c_str());
}

TEST_CASE("bag vote needs a majority of positive windows", "[svm]") {
  SvmModel m;
  m.w = {1.0};
  m.bias = -0.5;
  Feature pos = {1.0};  // score +0.5
  Feature neg = {0.0};  // score -0.5

  std::vector<Feature> bag(7, neg);
  CHECK(classify_bag(m, bag) == -1);
  for (int k = 0; k < 3; ++k) bag[k] = pos;
  CHECK(classify_bag(m, bag) == -1);  // 3 of 7 is not enough
  bag[3] = pos;
  CHECK(classify_bag(m, bag) == 1);  // 4 of 7 carries the vote
  std::vector<Feature> short_bag(6, pos);
  CHECK_THROWS_AS(classify_bag(m, short_bag), WrongBagSize);
}

TEST_CASE("learned face classifier separates rendered scenes", "[appearance]") {
  CameraRig rig;
  CddConfig cdd = CddConfig::from_rig(rig);
  Csr csr{cdd.d_min_cm, cdd.d_max_cm};
  RemapConfig rcfg = RemapConfig::create(rig, csr.d_far_cm);

  TrainingCorpus corpus = make_training_corpus(rig, 40, 77);
  REQUIRE(corpus.features.size() == corpus.labels.size());
  REQUIRE(corpus.features.size() >= 400);
  int pos = 0, neg = 0;
  for (size_t i = 0; i < corpus.labels.size(); ++i) {
    REQUIRE(corpus.features[i].size() == size_t(kHogDim));
    (corpus.labels[i] == 1 ? pos : neg)++;
  }
  CHECK(pos >= 100);
  CHECK(neg >= 250);

  SvmModel model = train_svm(corpus.features, corpus.labels);
  int ok = accuracy_count(model, corpus.features, corpus.labels);
  CHECK(double(ok) / double(corpus.labels.size()) >= 0.97);

  // held-out scenes from a different seed
  TrainingCorpus held = make_training_corpus(rig, 16, 991);
  int ok_h = accuracy_count(model, held.features, held.labels);
  CHECK(double(ok_h) / double(held.labels.size()) >= 0.95);

  SECTION("the true candidate survives filtering, stripes do not") {
    Photometry ph = Photometry::clear_day(4.0, 10.0);
    ph.stripe = true;
    ph.stripe_d_cm = 150.0;
    ph.stripe_delta = 48.0;
    CurbState gt{260.0, 0.08, 13.0, 18.0};
    RenderedFrame fr = render_frame(gt, rig, ph, 5150, 0);
    WarpedCsr w = warp_csr(fr.image, csr, rig, cdd, rcfg);
    std::vector<Line2> lines = plain_lines(extract_lines(w, {}, {}, {}));
    REQUIRE(lines.size() >= 3);
    std::vector<Candidate> cands = build_candidate_set(lines, rig, rcfg);
    REQUIRE(!cands.empty());
    std::vector<Candidate> kept = filter_candidates(cands, w, model);
    bool found = false;
    for (const Candidate& c : kept) {
      if (c.tuple.size != 3) continue;
      if (std::abs(c.fit.state.d_cm - gt.d_cm) < 2.0 &&
          std::abs(c.fit.state.theta_rad - gt.theta_rad) < 0.05 &&
          std::abs(c.fit.state.h_cm - gt.h_cm) < 1.0 && std::abs(c.fit.state.e_cm - gt.e_cm) < 3.0)
        found = true;
    }
    CHECK(found);
    CHECK(kept.size() <= cands.size());

    // same photometry without the curb: stripe and shadow candidates only,
    // and every one of them should fail the appearance gate
    RenderedFrame bare = render_frame(std::nullopt, rig, ph, 6021, 1);
    WarpedCsr wb = warp_csr(bare.image, csr, rig, cdd, rcfg);
    std::vector<Line2> bare_lines = plain_lines(extract_lines(wb, {}, {}, {}));
    std::vector<Candidate> bare_cands = build_candidate_set(bare_lines, rig, rcfg);
    std::vector<Candidate> bare_kept = filter_candidates(bare_cands, wb, model);
    CHECK(bare_kept.empty());
  }
}
