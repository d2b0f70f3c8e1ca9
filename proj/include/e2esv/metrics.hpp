// include/e2esv/metrics.hpp

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

#ifndef E2ESV_METRICS_HPP_
#define E2ESV_METRICS_HPP_

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "e2esv/common.hpp"

namespace e2esv {

// One verification trial.  label is 1 (target), 0 (impostor), or -1 when
// unlabeled ('?' in trial files); score is NaN until scored.
struct Trial {
  std::string test_utterance;
  std::string claimed_speaker;
  int label = -1;
  double score = std::numeric_limits<double>::quiet_NaN();
};

struct ScoreSet {
  std::vector<double> target_scores;
  std::vector<double> impostor_scores;
};

// Splits labeled, scored trials; unlabeled trials are skipped.
ScoreSet SplitByLabel(const std::vector<Trial> &trials);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Equal error rate with linear interpolation between adjacent thresholds.
//
// With the accept rule score >= t, FAR(t) is the impostor fraction at or
// above t and FRR(t) the target fraction below t; both are step functions
// that only change at observed scores.  The pair sequence over the distinct
// scores — extended by the virtual endpoints (FAR 1, FRR 0) and
// (FAR 0, FRR 1) — is scanned for the first sign change of FAR - FRR, and
// the crossing is interpolated linearly.  Both score lists must be
// non-empty.
EerResult ComputeEer(const ScoreSet &scores);

struct DetPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

// (threshold, FAR, FRR) at every distinct observed score, ascending.
std::vector<DetPoint> ComputeDetCurve(const ScoreSet &scores);

// --- text formats ---------------------------------------------------------
// Trials TSV: "test_utt<TAB>claimed_speaker<TAB>label" with label 0, 1 or ?;
// '#' lines and blank lines are skipped.  Scored files append a fourth
// column with the score (%.17g).
std::vector<Trial> ReadTrials(const std::filesystem::path &path);
void WriteTrials(const std::filesystem::path &path,
                 const std::vector<Trial> &trials);
void WriteScoredTrials(const std::filesystem::path &path,
                       const std::vector<Trial> &trials);
// DET CSV: "threshold,far,frr" header plus one row per point (%.17g).
void WriteDetCurve(const std::filesystem::path &path,
                   const std::vector<DetPoint> &points);
// Report: single line "EER=<value>\tthreshold=<value>".
void WriteEerReport(const std::filesystem::path &path, const EerResult &eer);

std::string FormatF64(double v);  // shortest round-trip-exact ("%.17g")

}  // namespace e2esv

#endif  // E2ESV_METRICS_HPP_
