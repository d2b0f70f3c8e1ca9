// include/e2esv/scoring.hpp

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

#ifndef E2ESV_SCORING_HPP_
#define E2ESV_SCORING_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "e2esv/pooling.hpp"

namespace e2esv {

// A claimed identity: the average of the enrollment supervectors.
struct SpeakerModel {
  std::string speaker_id;
  Supervector mean;
  std::size_t enrollment_count = 0;
};

// Averages enrollment supervectors.  Errors: empty list, mixed pooling
// kinds/dims, or an all-zero mean (degenerate enrollment).
SpeakerModel EnrollSpeaker(const std::string &speaker_id,
                           const std::vector<Supervector> &utterances);

// Cosine similarity between a test supervector and a speaker model,
// clamped to [-1, 1].  Mismatched kinds or zero norms are errors.
double CosineScore(const Supervector &test, const SpeakerModel &model);

// Calibrated accept probability P(accept) = sigmoid(w * score + b).
struct LogisticHead {
  double w = 10.0;
  double b = -5.0;
};
double AcceptProbability(const LogisticHead &head, double score);
bool Accept(const LogisticHead &head, double score, double threshold = 0.5);

// Enrollment store ("E2ES"): pooling kind + per-speaker models.
struct EnrollmentStore {
  PoolingKind kind = PoolingKind::kMean;
  std::map<std::string, SpeakerModel> speakers;
};
void WriteEnrollmentStore(const std::filesystem::path &path,
                          const EnrollmentStore &store);
EnrollmentStore ReadEnrollmentStore(const std::filesystem::path &path);

}  // namespace e2esv

#endif  // E2ESV_SCORING_HPP_
