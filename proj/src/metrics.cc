// src/metrics.cc

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

#include "e2esv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace e2esv {

std::string FormatF64(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ScoreSet SplitByLabel(const std::vector<Trial> &trials) {
  ScoreSet out;
  for (const Trial &t : trials) {
    if (t.label < 0) continue;
    if (std::isnan(t.score))
      throw DataError("trial " + t.test_utterance + " vs " +
                      t.claimed_speaker + " has no score");
    (t.label == 1 ? out.target_scores : out.impostor_scores).push_back(t.score);
  }
  return out;
}

namespace {
// FAR/FRR step values at each distinct observed score, ascending, with the
// virtual endpoints prepended/appended.  thresholds for the endpoints repeat
// the closest real score so interpolation degenerates cleanly there.
struct RatePoint {
  double threshold, far, frr;
};

std::vector<RatePoint> RateSequence(const ScoreSet &scores) {
  std::vector<double> all(scores.impostor_scores);
  all.insert(all.end(), scores.target_scores.begin(),
             scores.target_scores.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::vector<double> tgt(scores.target_scores);
  std::vector<double> imp(scores.impostor_scores);
  std::sort(tgt.begin(), tgt.end());
  std::sort(imp.begin(), imp.end());
  const double nt = static_cast<double>(tgt.size());
  const double ni = static_cast<double>(imp.size());

  std::vector<RatePoint> seq;
  seq.reserve(all.size() + 2);
  seq.push_back({all.front(), 1.0, 0.0});
  for (double t : all) {
    // FAR: impostors with score >= t;  FRR: targets with score < t.
    const auto imp_ge =
        imp.end() - std::lower_bound(imp.begin(), imp.end(), t);
    const auto tgt_lt = std::lower_bound(tgt.begin(), tgt.end(), t) -
                        tgt.begin();
    seq.push_back({t, static_cast<double>(imp_ge) / ni,
                   static_cast<double>(tgt_lt) / nt});
  }
  seq.push_back({all.back(), 0.0, 1.0});
  return seq;
}
}  // namespace

EerResult ComputeEer(const ScoreSet &scores) {
  if (scores.target_scores.empty() || scores.impostor_scores.empty())
    throw DataError("EER needs at least one target and one impostor score");
  const std::vector<RatePoint> seq = RateSequence(scores);
  // D = FAR - FRR is non-increasing along the sequence, starts at +1 and
  // ends at -1; find the first adjacent pair bracketing zero.
  for (std::size_t j = 0; j + 1 < seq.size(); ++j) {
    const double d0 = seq[j].far - seq[j].frr;
    const double d1 = seq[j + 1].far - seq[j + 1].frr;
    if (d0 >= 0.0 && d1 <= 0.0) {
      const double lambda = (d0 == d1) ? 0.0 : d0 / (d0 - d1);
      EerResult res;
      res.eer = seq[j].far + (seq[j + 1].far - seq[j].far) * lambda;
      res.threshold =
          seq[j].threshold + (seq[j + 1].threshold - seq[j].threshold) * lambda;
      return res;
    }
  }
  throw NumericError("EER crossing not found (non-monotone rate sequence)");
}

std::vector<DetPoint> ComputeDetCurve(const ScoreSet &scores) {
  if (scores.target_scores.empty() || scores.impostor_scores.empty())
    throw DataError("DET curve needs both target and impostor scores");
  const std::vector<RatePoint> seq = RateSequence(scores);
  std::vector<DetPoint> points;
  points.reserve(seq.size() - 2);
  for (std::size_t j = 1; j + 1 < seq.size(); ++j)  // skip virtual endpoints
    points.push_back({seq[j].threshold, seq[j].far, seq[j].frr});
  return points;
}

std::vector<Trial> ReadTrials(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open trial list " + path.string());
  std::vector<Trial> trials;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 3 || fields.size() > 4)
      throw DataError("trial list " + path.string() + " line " +
                      std::to_string(lineno) + ": expected 3 or 4 fields");
    Trial t;
    t.test_utterance = fields[0];
    t.claimed_speaker = fields[1];
    if (fields[2] == "1")
      t.label = 1;
    else if (fields[2] == "0")
      t.label = 0;
    else if (fields[2] == "?")
      t.label = -1;
    else
      throw DataError("trial list " + path.string() + " line " +
                      std::to_string(lineno) + ": bad label '" + fields[2] +
                      "'");
    if (fields.size() == 4) {
      try {
        t.score = std::stod(fields[3]);
      } catch (const std::exception &) {
        throw DataError("trial list " + path.string() + " line " +
                        std::to_string(lineno) + ": bad score '" + fields[3] +
                        "'");
      }
    }
    trials.push_back(std::move(t));
  }
  if (trials.empty())
    throw DataError("trial list " + path.string() + " has no trials");
  return trials;
}

void WriteTrials(const std::filesystem::path &path,
                 const std::vector<Trial> &trials) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write trials " + path.string());
  for (const Trial &t : trials) {
    const char *label =
        t.label == 1 ? "1" : (t.label == 0 ? "0" : "?");
    os << t.test_utterance << '\t' << t.claimed_speaker << '\t' << label
       << '\n';
  }
  if (!os) throw DataError("failed writing trials " + path.string());
}

void WriteScoredTrials(const std::filesystem::path &path,
                       const std::vector<Trial> &trials) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write scored trials " + path.string());
  for (const Trial &t : trials) {
    const char *label =
        t.label == 1 ? "1" : (t.label == 0 ? "0" : "?");
    os << t.test_utterance << '\t' << t.claimed_speaker << '\t' << label
       << '\t' << FormatF64(t.score) << '\n';
  }
  if (!os) throw DataError("failed writing scored trials " + path.string());
}

void WriteDetCurve(const std::filesystem::path &path,
                   const std::vector<DetPoint> &points) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write DET curve " + path.string());
  os << "threshold,far,frr\n";
  for (const DetPoint &p : points)
    os << FormatF64(p.threshold) << ',' << FormatF64(p.far) << ','
       << FormatF64(p.frr) << '\n';
  if (!os) throw DataError("failed writing DET curve " + path.string());
}

void WriteEerReport(const std::filesystem::path &path, const EerResult &eer) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write EER report " + path.string());
  os << "EER=" << FormatF64(eer.eer) << "\tthreshold="
     << FormatF64(eer.threshold) << '\n';
  if (!os) throw DataError("failed writing EER report " + path.string());
}

}  // namespace e2esv
