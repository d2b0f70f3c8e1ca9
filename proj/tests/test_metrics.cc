// tests/test_metrics.cc

// Copyright 2026  The e2esv authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <vector>

#include "doctest.h"
#include "e2esv/common.hpp"
#include "e2esv/metrics.hpp"

using namespace e2esv;

namespace {

// Brute-force EER: naive counting loops at every distinct score, the
// documented virtual endpoints, first bracketing pair, linear interpolation.
double NaiveEer(const ScoreSet &s) {
  std::set<double> distinct(s.target_scores.begin(), s.target_scores.end());
  distinct.insert(s.impostor_scores.begin(), s.impostor_scores.end());
  std::vector<std::pair<double, double>> seq;  // (far, frr)
  seq.push_back({1.0, 0.0});
  for (double t : distinct) {
    std::size_t far_n = 0, frr_n = 0;
    for (double x : s.impostor_scores)
      if (x >= t) ++far_n;
    for (double x : s.target_scores)
      if (x < t) ++frr_n;
    seq.push_back({static_cast<double>(far_n) /
                       static_cast<double>(s.impostor_scores.size()),
                   static_cast<double>(frr_n) /
                       static_cast<double>(s.target_scores.size())});
  }
  seq.push_back({0.0, 1.0});
  for (std::size_t j = 0; j + 1 < seq.size(); ++j) {
    const double d0 = seq[j].first - seq[j].second;
    const double d1 = seq[j + 1].first - seq[j + 1].second;
    if (d0 >= 0.0 && d1 <= 0.0) {
      const double lambda = (d0 == d1) ? 0.0 : d0 / (d0 - d1);
      return seq[j].first + (seq[j + 1].first - seq[j].first) * lambda;
    }
  }
  REQUIRE(false);
  return -1.0;
}

ScoreSet RandomScores(Rng *rng, bool grid = false) {
  ScoreSet s;
  const std::size_t nt = static_cast<std::size_t>(rng->UniformInt(1, 30));
  const std::size_t ni = static_cast<std::size_t>(rng->UniformInt(1, 30));
  auto draw = [&] {
    if (grid)
      return static_cast<double>(rng->UniformInt(0, 1000)) / 1024.0;
    return rng->Uniform(0.0, 1.0);
  };
  for (std::size_t i = 0; i < nt; ++i)
    s.target_scores.push_back(0.15 + 0.85 * draw());
  for (std::size_t i = 0; i < ni; ++i)
    s.impostor_scores.push_back(0.85 * draw());
  return s;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("e2esv_metrics_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("EER hand-worked cases") {
  // Perfect separation.
  EerResult r = ComputeEer({{0.8, 0.9}, {0.1, 0.2}});
  CHECK(r.eer == 0.0);
  CHECK(r.threshold > 0.2);
  CHECK(r.threshold <= 0.8);

  // Identical score distributions: FAR = FRR = 1/2 at the crossing.
  CHECK(ComputeEer({{0.5, 0.7}, {0.5, 0.7}}).eer ==
        doctest::Approx(0.5).epsilon(1e-12));

  // Fully reversed scores.
  CHECK(ComputeEer({{0.1}, {0.9}}).eer == doctest::Approx(1.0).epsilon(1e-12));

  // One impostor sits between the targets: the crossing lands where
  // FAR = FRR = 1/4.
  CHECK(ComputeEer({{0.6, 0.7, 0.8, 0.9}, {0.1, 0.2, 0.3, 0.65}}).eer ==
        doctest::Approx(0.25).epsilon(1e-12));

  // Interleaved scores: D = FAR - FRR walks 1, 1/2, 0, -1/2, so the
  // crossing lands exactly on the step with FAR = FRR = 1/2.
  EerResult mid = ComputeEer({{0.3, 0.7}, {0.4, 0.6}});
  CHECK(mid.eer == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(mid.threshold == doctest::Approx(0.6).epsilon(1e-12));

  // A genuine interpolation: targets {0.5}, impostors {0.2, 0.4, 0.6}.
  // D walks 1, 2/3, 1/3 then -2/3 at t=0.5; the bracketing pair spans
  // FAR 1/3 -> 1/3 with FRR 0 -> 1, crossing at lambda = 1/3, EER = 1/3.
  CHECK(ComputeEer({{0.5}, {0.2, 0.4, 0.6}}).eer ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  CHECK_THROWS_AS((void)ComputeEer({{}, {0.5}}), DataError);
  CHECK_THROWS_AS((void)ComputeEer({{0.5}, {}}), DataError);
}

TEST_CASE("EER matches the brute-force sweep on random score sets") {
  Rng rng(81);
  for (int c = 0; c < 1000; ++c) {
    ScoreSet s = RandomScores(&rng);
    EerResult r = ComputeEer(s);
    CHECK(std::abs(r.eer - NaiveEer(s)) <= 1e-9);
    CHECK(r.eer >= 0.0);
    CHECK(r.eer <= 1.0);
    // The threshold lies within the observed score range.
    const double lo =
        std::min(*std::min_element(s.target_scores.begin(),
                                   s.target_scores.end()),
                 *std::min_element(s.impostor_scores.begin(),
                                   s.impostor_scores.end()));
    const double hi =
        std::max(*std::max_element(s.target_scores.begin(),
                                   s.target_scores.end()),
                 *std::max_element(s.impostor_scores.begin(),
                                   s.impostor_scores.end()));
    CHECK(r.threshold >= lo);
    CHECK(r.threshold <= hi);
  }
}

TEST_CASE("EER is invariant under strictly increasing transforms") {
  Rng rng(82);
  for (int c = 0; c < 200; ++c) {
    // Grid-valued scores keep transformed values distinct where the
    // originals were distinct.
    ScoreSet s = RandomScores(&rng, /*grid=*/true);
    const double base = ComputeEer(s).eer;
    auto apply = [&s](double (*f)(double)) {
      ScoreSet t = s;
      for (double &x : t.target_scores) x = f(x);
      for (double &x : t.impostor_scores) x = f(x);
      return t;
    };
    CHECK(ComputeEer(apply([](double x) { return 2.0 * x + 0.5; })).eer ==
          base);
    CHECK(ComputeEer(apply([](double x) { return std::tanh(x); })).eer ==
          base);
    CHECK(ComputeEer(apply([](double x) { return std::exp(x); })).eer == base);
  }
}

TEST_CASE("DET curve matches naive rates and is monotone") {
  Rng rng(83);
  for (int c = 0; c < 100; ++c) {
    ScoreSet s = RandomScores(&rng);
    std::vector<DetPoint> det = ComputeDetCurve(s);
    std::set<double> distinct(s.target_scores.begin(), s.target_scores.end());
    distinct.insert(s.impostor_scores.begin(), s.impostor_scores.end());
    REQUIRE(det.size() == distinct.size());

    double prev_t = -1e300;
    std::size_t i = 0;
    for (double t : distinct) {
      CHECK(det[i].threshold == t);
      std::size_t far_n = 0, frr_n = 0;
      for (double x : s.impostor_scores)
        if (x >= t) ++far_n;
      for (double x : s.target_scores)
        if (x < t) ++frr_n;
      CHECK(det[i].far ==
            static_cast<double>(far_n) /
                static_cast<double>(s.impostor_scores.size()));
      CHECK(det[i].frr ==
            static_cast<double>(frr_n) /
                static_cast<double>(s.target_scores.size()));
      if (i > 0) {
        CHECK(det[i].far <= det[i - 1].far);
        CHECK(det[i].frr >= det[i - 1].frr);
      }
      CHECK(t > prev_t);
      prev_t = t;
      ++i;
    }
    CHECK(det.front().far == 1.0);
    CHECK(det.front().frr == 0.0);
  }
}

TEST_CASE("split by label skips unlabeled trials and wants scores") {
  std::vector<Trial> trials;
  trials.push_back({"u1", "s1", 1, 0.9});
  trials.push_back({"u2", "s1", 0, 0.3});
  trials.push_back({"u3", "s1", -1, 0.7});
  ScoreSet s = SplitByLabel(trials);
  CHECK(s.target_scores == std::vector<double>{0.9});
  CHECK(s.impostor_scores == std::vector<double>{0.3});

  std::vector<Trial> unscored;
  unscored.push_back({"u1", "s1", 1,
                      std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS((void)SplitByLabel(unscored), DataError);
}

TEST_CASE("trial files roundtrip") {
  TempDir tmp;
  Rng rng(84);
  std::vector<Trial> trials;
  for (int i = 0; i < 50; ++i) {
    Trial t;
    t.test_utterance = "utt" + std::to_string(i);
    t.claimed_speaker = "spk" + std::to_string(i % 7);
    t.label = static_cast<int>(rng.UniformInt(-1, 1));
    t.score = rng.Normal() * std::pow(10.0, rng.UniformInt(-8, 8));
    trials.push_back(t);
  }

  const auto plain = tmp.path / "trials.tsv";
  WriteTrials(plain, trials);
  std::vector<Trial> back = ReadTrials(plain);
  REQUIRE(back.size() == trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    CHECK(back[i].test_utterance == trials[i].test_utterance);
    CHECK(back[i].claimed_speaker == trials[i].claimed_speaker);
    CHECK(back[i].label == trials[i].label);
    CHECK(std::isnan(back[i].score));
  }

  // Scores survive the %.17g round trip bit-exactly.
  const auto scored = tmp.path / "scored.tsv";
  WriteScoredTrials(scored, trials);
  back = ReadTrials(scored);
  REQUIRE(back.size() == trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i)
    CHECK(back[i].score == trials[i].score);

  // Comments and blank lines are skipped; junk is rejected.
  {
    std::ofstream os(tmp.path / "hand.tsv");
    os << "# header comment\n\nu1\ts1\t1\n\nu2\ts2\t?\n";
  }
  back = ReadTrials(tmp.path / "hand.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].label == 1);
  CHECK(back[1].label == -1);

  {
    std::ofstream os(tmp.path / "bad.tsv");
    os << "u1\ts1\tmaybe\n";
  }
  CHECK_THROWS_AS((void)ReadTrials(tmp.path / "bad.tsv"), DataError);
  {
    std::ofstream os(tmp.path / "short.tsv");
    os << "u1\ts1\n";
  }
  CHECK_THROWS_AS((void)ReadTrials(tmp.path / "short.tsv"), DataError);
  CHECK_THROWS_AS((void)ReadTrials(tmp.path / "missing.tsv"), DataError);
  {
    std::ofstream os(tmp.path / "empty.tsv");
    os << "# nothing\n";
  }
  CHECK_THROWS_AS((void)ReadTrials(tmp.path / "empty.tsv"), DataError);
}

TEST_CASE("report writers produce the documented formats") {
  TempDir tmp;
  WriteEerReport(tmp.path / "eer.txt", {0.0625, 0.415});
  std::ifstream is(tmp.path / "eer.txt");
  std::string line;
  std::getline(is, line);
  CHECK(line == "EER=0.0625\tthreshold=0.41499999999999998");

  std::vector<DetPoint> det = {{0.25, 1.0, 0.0}, {0.5, 0.0, 1.0}};
  WriteDetCurve(tmp.path / "det.csv", det);
  std::ifstream ds(tmp.path / "det.csv");
  std::getline(ds, line);
  CHECK(line == "threshold,far,frr");
  std::getline(ds, line);
  CHECK(line == "0.25,1,0");

  CHECK(FormatF64(0.1) == "0.10000000000000001");
  CHECK(FormatF64(1.0) == "1");
}
