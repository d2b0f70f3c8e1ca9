// include/e2esv/miner.hpp

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

#ifndef E2ESV_MINER_HPP_
#define E2ESV_MINER_HPP_

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "e2esv/pooling.hpp"

namespace e2esv {

// Hard-impostor mining.  A pool holds one supervector per training speaker
// (the average over a sample of their utterances, extracted with the current
// model in inference mode); the impostor table lists, for every speaker, the
// k most cosine-similar other speakers.  The pool is refreshed after each
// training sweep, so the generation counter equals the number of completed
// sweeps.

struct SpeakerVectorPool {
  std::map<std::string, Supervector> vectors;
  int64_t generation = 0;
};

using SupervectorExtractor =
    std::function<Supervector(const std::string &utt_id)>;

// Speakers with their utterance lists, in a fixed (deterministic) order.
using SpeakerUtterances =
    std::vector<std::pair<std::string, std::vector<std::string>>>;

// Builds the generation-0 pool: per speaker, extracts n_sample utterances
// drawn without replacement (all of them if fewer) and averages.
SpeakerVectorPool InitializeSpeakerPool(const SupervectorExtractor &extract,
                                        const SpeakerUtterances &speakers,
                                        std::size_t n_sample, Rng *rng);

// Re-extracts every pool vector with the current model and bumps the
// generation counter.
void RefreshSpeakerPool(SpeakerVectorPool *pool,
                        const SupervectorExtractor &extract,
                        const SpeakerUtterances &speakers,
                        std::size_t n_sample, Rng *rng);

struct ImpostorEntry {
  std::string speaker_id;
  double similarity;
};

struct ImpostorTable {
  int k = 0;
  std::map<std::string, std::vector<ImpostorEntry>> nearest;
};

// Exhaustive scan: for each speaker the k most similar OTHER speakers,
// sorted by descending cosine similarity (ties broken by speaker id).
// k >= pool size just lists all others.
ImpostorTable BuildImpostorTable(const SpeakerVectorPool &pool, int k);

// Draws t2 impostor utterances for a target from the union of its table
// impostors' utterances: without replacement when the union is large enough,
// otherwise with replacement (reported via *with_replacement and a warning).
std::vector<std::string> SampleImpostorUtterances(
    const ImpostorTable &table, const std::string &target_speaker,
    const SpeakerUtterances &speakers, std::size_t t2, Rng *rng,
    bool *with_replacement = nullptr);

// Debug dump ("E2EV"): count u32, then per speaker a length-prefixed id and
// the vector as a tensor block.
void WritePoolDump(const std::filesystem::path &path,
                   const SpeakerVectorPool &pool);
SpeakerVectorPool ReadPoolDump(const std::filesystem::path &path,
                               PoolingKind kind);

}  // namespace e2esv

#endif  // E2ESV_MINER_HPP_
