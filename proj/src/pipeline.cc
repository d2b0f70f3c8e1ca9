// src/pipeline.cc

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

#include "e2esv/pipeline.hpp"

#include <fstream>
#include <utility>

namespace e2esv {

namespace fs = std::filesystem;

LogisticHead EndToEndModel::Head() const {
  return LogisticHead{head_w->Scalar(), head_b->Scalar()};
}

std::vector<TensorPtr> EndToEndModel::TrainableParams() const {
  std::vector<TensorPtr> params = net.TrainableParams();
  if (pooling == PoolingKind::kAttention) {
    params.push_back(att.wh);
    params.push_back(att.wb);
  }
  params.push_back(head_w);
  params.push_back(head_b);
  return params;
}

static const char kModelMagic[4] = {'E', '2', 'E', 'E'};

void EndToEndModel::SaveFile(const fs::path &path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  io::WriteMagic(os, kModelMagic);
  io::WriteU32(os, 1);  // version
  io::WriteString(os, PoolingKindName(pooling));
  io::WriteString(os, config_json);
  phonetic.Save(os);
  net.Save(os);
  std::map<std::string, TensorPtr> extras;
  extras["att.wh"] = att.wh;
  extras["att.wb"] = att.wb;
  extras["head.w"] = head_w;
  extras["head.b"] = head_b;
  WriteNamedTensors(os, extras);
  if (!os) throw DataError("failed writing model '" + path.string() + "'");
}

EndToEndModel EndToEndModel::LoadFile(const fs::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open model '" + path.string() + "'");
  io::ExpectMagic(is, kModelMagic, "model file");
  const uint32_t version = io::ReadU32(is, "model version");
  if (version != 1) {
    throw DataError("unsupported model version " + std::to_string(version));
  }
  EndToEndModel model;
  model.pooling = ParsePoolingKind(io::ReadString(is, "pooling kind"));
  model.config_json = io::ReadString(is, "training config");
  model.phonetic = PhoneticModel::Load(is);
  model.net = SpeakerNet::Load(is);
  std::map<std::string, TensorPtr> extras = ReadNamedTensors(is);
  for (const char *name : {"att.wh", "att.wb", "head.w", "head.b"}) {
    if (extras.count(name) == 0) {
      throw DataError(std::string("model file is missing tensor '") + name +
                      "'");
    }
  }
  model.att.wh = extras["att.wh"];
  model.att.wb = extras["att.wb"];
  model.head_w = extras["head.w"];
  model.head_b = extras["head.b"];
  for (const TensorPtr &t :
       {model.att.wh, model.att.wb, model.head_w, model.head_b}) {
    t->requires_grad = true;
  }
  return model;
}

EndToEndModel InitEndToEnd(PhoneticModel phonetic, SpeakerNetKind net_kind,
                           PoolingKind pooling, uint64_t seed) {
  EndToEndModel model;
  model.phonetic = std::move(phonetic);
  model.net = SpeakerNet::Init(net_kind, seed);
  model.att = InitAttention();
  model.head_w = Tensor::Param({1}, {10.0});
  model.head_b = Tensor::Param({1}, {-5.0});
  model.pooling = pooling;
  return model;
}

const PreparedUtterance &UtteranceCache::Get(const std::string &utt_id) {
  auto it = cache_.find(utt_id);
  if (it != cache_.end()) return it->second;
  const FrameSequence &raw = corpus_->Features(utt_id);
  if (raw.dim != PhoneticModel::kInputDim) {
    throw DataError("utterance '" + utt_id + "' has dimension " +
                    std::to_string(raw.dim) + ", expected " +
                    std::to_string(PhoneticModel::kInputDim));
  }
  PreparedUtterance prep;
  prep.cmn = RollingCmn(raw);
  FrameSequence gamma, bottleneck;
  phonetic_->Extract(prep.cmn, &gamma, &bottleneck);
  prep.gamma = Tensor::Of({gamma.num_frames, gamma.dim},
                          std::move(gamma.data));
  prep.bottleneck = Tensor::Of({bottleneck.num_frames, bottleneck.dim},
                               std::move(bottleneck.data));
  return cache_.emplace(utt_id, std::move(prep)).first->second;
}

TensorPtr WindowsTensor(const FrameSequence &cmn) {
  ContextWindowBatch windows = MakeContextWindows(cmn);
  return Tensor::Of({windows.num_frames, ContextWindowBatch::kChannels,
                     ContextWindowBatch::kContext, ContextWindowBatch::kFreq},
                    std::move(windows.data));
}

Supervector ExtractSupervector(const EndToEndModel &model,
                               const PreparedUtterance &prep,
                               std::vector<double> *alpha_out) {
  NoGradGuard no_grad;
  TensorPtr windows = WindowsTensor(prep.cmn);
  TensorPtr h = model.net.Forward(windows, BnMode::kInfer);
  return PoolFramesValue(model.pooling, *h, *prep.gamma, *prep.bottleneck,
                         &model.att, alpha_out);
}

EnrollmentStore EnrollCorpus(const EndToEndModel &model,
                             UtteranceCache *cache,
                             const CorpusIndex &enroll) {
  EnrollmentStore store;
  store.kind = model.pooling;
  for (const std::string &speaker : enroll.Speakers()) {
    std::vector<Supervector> vecs;
    for (const std::string &utt : enroll.Utterances(speaker)) {
      vecs.push_back(ExtractSupervector(model, cache->Get(utt)));
    }
    store.speakers.emplace(speaker, EnrollSpeaker(speaker, vecs));
  }
  E2E_INFO << "enrolled " << store.speakers.size() << " speakers ("
           << PoolingKindName(store.kind) << " pooling)";
  return store;
}

void ScoreTrials(const EndToEndModel &model, const EnrollmentStore &store,
                 UtteranceCache *cache, std::vector<Trial> *trials) {
  std::map<std::string, Supervector> test_vectors;
  for (Trial &trial : *trials) {
    auto model_it = store.speakers.find(trial.claimed_speaker);
    if (model_it == store.speakers.end()) {
      throw DataError("trial claims unenrolled speaker '" +
                      trial.claimed_speaker + "'");
    }
    auto vec_it = test_vectors.find(trial.test_utterance);
    if (vec_it == test_vectors.end()) {
      Supervector sv =
          ExtractSupervector(model, cache->Get(trial.test_utterance));
      vec_it = test_vectors.emplace(trial.test_utterance, std::move(sv)).first;
    }
    trial.score = CosineScore(vec_it->second, model_it->second);
  }
}

}  // namespace e2esv
