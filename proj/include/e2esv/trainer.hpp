// include/e2esv/trainer.hpp

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

#ifndef E2ESV_TRAINER_HPP_
#define E2ESV_TRAINER_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "e2esv/miner.hpp"
#include "e2esv/pipeline.hpp"

namespace e2esv {

// End-to-end training configuration.  Each batch simulates complete
// verification trials: per target speaker, n_enroll enrollment utterances
// are averaged into a model, scored against t1 genuine and t2 impostor
// test utterances, and the binary cross-entropy of the calibrated accept
// probability is minimized.  Impostors come from the k most similar pool
// speakers (hard mining) or uniformly from the other speakers.
struct TrainConfig {
  int sweeps = 3;
  std::size_t batch_targets = 64;
  std::size_t n_enroll = 6;
  std::size_t t1 = 1;
  std::size_t t2 = 5;
  int k_impostors = 3;
  double learning_rate = 0.05;
  uint64_t seed = 1;
  PoolingKind pooling = PoolingKind::kAttention;
  SpeakerNetKind net = SpeakerNetKind::kCnn;
  bool hard_mining = true;

  std::string ToJsonString() const;
};

// The sampled trial structure of one batch; fixing it makes the step a
// deterministic function of the parameters.
struct BatchPlan {
  struct TargetPlan {
    std::string speaker;
    std::vector<std::string> enroll;     // n_enroll utterances
    std::vector<std::string> positives;  // t1, disjoint from enroll
    std::vector<std::string> negatives;  // t2 impostor utterances
  };
  std::vector<TargetPlan> targets;
  std::vector<std::string> distinct_utts;  // sorted, every utterance once
  std::size_t PositiveTrials() const;
  std::size_t NegativeTrials() const;
};

// Samples a batch plan.  table may be null (uniform impostors); every
// target speaker needs n_enroll + t1 utterances.
BatchPlan PlanBatch(const CorpusIndex &train,
                    const std::vector<std::string> &targets,
                    const ImpostorTable *table, const TrainConfig &cfg,
                    Rng *rng);

// Batch loss as a pure function of the current parameters (no graph, no
// updates); the reference for finite-difference checks.
double BatchLossValue(const EndToEndModel &model, UtteranceCache *cache,
                      const BatchPlan &plan);

// One SGD step.  Runs the forward in two phases around the supervector
// boundary so only one utterance's graph is alive at a time:
//   A: per distinct utterance, a value-only forward (batch-stats
//      normalization, running stats untouched) -> supervector leaves; the
//      scoring graph over those leaves yields the loss and the leaf
//      gradients.
//   B: per distinct utterance, the forward is replayed with gradients and
//      seeded with its leaf gradient, accumulating into the parameters.
// Afterwards: one SgdStep(lr) over store, then the batch-norm running
// statistics are updated once per distinct utterance in sorted order.
// Returns the loss; throws NumericError if it is not finite.
double TrainStep(EndToEndModel *model, UtteranceCache *cache,
                 const BatchPlan &plan, ParamStore *store, double lr);

struct TrainLossRecord {
  int sweep = 0;
  int batch = 0;
  double loss = 0.0;
  std::size_t pos_trials = 0;
  std::size_t neg_trials = 0;
};

struct TrainReport {
  std::vector<TrainLossRecord> history;
  SpeakerVectorPool final_pool;
  double initial_loss = 0.0;  // first batch
  double final_loss = 0.0;    // last batch
};

// The full loop: initialize the speaker-vector pool and impostor table with
// the untrained model, then per sweep shuffle the speakers, walk them in
// batches of batch_targets (a 1-target remainder is dropped), and refresh
// the pool and table after the sweep.
TrainReport Train(EndToEndModel *model, const CorpusIndex &train,
                  const TrainConfig &cfg);

// Loss history CSV: "sweep,batch,loss,pos_trials,neg_trials".
void WriteLossHistory(const std::filesystem::path &path,
                      const std::vector<TrainLossRecord> &history);

}  // namespace e2esv

#endif  // E2ESV_TRAINER_HPP_
