// include/e2esv/pipeline.hpp

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

#ifndef E2ESV_PIPELINE_HPP_
#define E2ESV_PIPELINE_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "e2esv/corpus.hpp"
#include "e2esv/metrics.hpp"
#include "e2esv/phonetic.hpp"
#include "e2esv/pooling.hpp"
#include "e2esv/scoring.hpp"
#include "e2esv/speaker_net.hpp"

namespace e2esv {

// The complete verification model: the frozen phone classifier, the speaker
// feature net, the pooling configuration with its (possibly unused)
// attention parameters, and the calibration head.  config_json carries an
// opaque echo of the training configuration.
struct EndToEndModel {
  PhoneticModel phonetic;
  SpeakerNet net;
  AttentionParams att;
  TensorPtr head_w;  // scalar, Eq. "P = sigmoid(w * cos + b)" slope
  TensorPtr head_b;  // scalar offset
  PoolingKind pooling = PoolingKind::kAttention;
  std::string config_json;

  LogisticHead Head() const;
  // Speaker net + (for attention pooling) attention vectors + the head.
  // The phone net is frozen and never included.
  std::vector<TensorPtr> TrainableParams() const;

  void SaveFile(const std::filesystem::path &path) const;
  static EndToEndModel LoadFile(const std::filesystem::path &path);
};

// Fresh model around an already-trained phone classifier.  The head starts
// at (w, b) = (10, -5).
EndToEndModel InitEndToEnd(PhoneticModel phonetic, SpeakerNetKind net_kind,
                           PoolingKind pooling, uint64_t seed);

// Per-utterance data the training loop and the extractor both reuse: the
// mean-normalized features plus the frozen phone-net outputs.  Everything
// except the context windows (rebuilt on demand; they are an order of
// magnitude larger) is cached.
struct PreparedUtterance {
  FrameSequence cmn;         // [T x 38]
  TensorPtr gamma;           // [T x 10] softmax posteriors, no-grad
  TensorPtr bottleneck;      // [T x 64] phone bottleneck, no-grad
};

class UtteranceCache {
 public:
  // Both pointees must outlive the cache.
  UtteranceCache(const CorpusIndex *corpus, const PhoneticModel *phonetic)
      : corpus_(corpus), phonetic_(phonetic) {}
  const PreparedUtterance &Get(const std::string &utt_id);
  std::size_t Size() const { return cache_.size(); }

 private:
  const CorpusIndex *corpus_;
  const PhoneticModel *phonetic_;
  std::map<std::string, PreparedUtterance> cache_;
};

// [T x 38] mean-normalized features -> [T x 3 x 31 x 12] window tensor
// (a no-grad leaf).
TensorPtr WindowsTensor(const FrameSequence &cmn);

// Inference-mode supervector of one utterance.
Supervector ExtractSupervector(const EndToEndModel &model,
                               const PreparedUtterance &prep,
                               std::vector<double> *alpha_out = nullptr);

// Enrolls every speaker of the given (enrollment) corpus.
EnrollmentStore EnrollCorpus(const EndToEndModel &model,
                             UtteranceCache *cache,
                             const CorpusIndex &enroll);

// Fills trial.score for every trial; test utterances come from cache's
// corpus, claimed speakers from the store.
void ScoreTrials(const EndToEndModel &model, const EnrollmentStore &store,
                 UtteranceCache *cache, std::vector<Trial> *trials);

}  // namespace e2esv

#endif  // E2ESV_PIPELINE_HPP_
