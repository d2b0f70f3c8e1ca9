// src/trainer.cc

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

#include "e2esv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"

namespace e2esv {

std::string TrainConfig::ToJsonString() const {
  nlohmann::ordered_json j;
  j["sweeps"] = sweeps;
  j["batch_targets"] = batch_targets;
  j["n_enroll"] = n_enroll;
  j["t1"] = t1;
  j["t2"] = t2;
  j["k_impostors"] = k_impostors;
  j["learning_rate"] = learning_rate;
  j["seed"] = seed;
  j["pooling"] = PoolingKindName(pooling);
  j["net"] = SpeakerNetKindName(net);
  j["hard_mining"] = hard_mining;
  return j.dump();
}

std::size_t BatchPlan::PositiveTrials() const {
  std::size_t n = 0;
  for (const TargetPlan &t : targets) n += t.positives.size();
  return n;
}

std::size_t BatchPlan::NegativeTrials() const {
  std::size_t n = 0;
  for (const TargetPlan &t : targets) n += t.negatives.size();
  return n;
}

namespace {

std::vector<std::string> PickUtts(const std::vector<std::string> &utts,
                                  const std::vector<std::size_t> &idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(utts[i]);
  return out;
}

// Uniform impostor utterances when mining is off: all other speakers'
// utterances, without replacement when possible.
std::vector<std::string> UniformImpostors(const CorpusIndex &train,
                                          const std::string &target,
                                          std::size_t t2, Rng *rng) {
  std::vector<std::string> candidates;
  for (const std::string &spk : train.Speakers()) {
    if (spk == target) continue;
    const std::vector<std::string> &utts = train.Utterances(spk);
    candidates.insert(candidates.end(), utts.begin(), utts.end());
  }
  if (candidates.empty()) {
    throw DataError("no impostor utterances exist for speaker '" + target +
                    "'");
  }
  std::vector<std::string> out;
  out.reserve(t2);
  if (candidates.size() >= t2) {
    for (std::size_t i : SampleWithoutReplacement(candidates.size(), t2, rng)) {
      out.push_back(candidates[i]);
    }
  } else {
    E2E_WARN << "only " << candidates.size() << " impostor utterances for '"
             << target << "', sampling " << t2 << " with replacement";
    for (std::size_t i = 0; i < t2; ++i) {
      out.push_back(candidates[static_cast<std::size_t>(rng->UniformInt(
          0, static_cast<int64_t>(candidates.size()) - 1))]);
    }
  }
  return out;
}

}  // namespace

BatchPlan PlanBatch(const CorpusIndex &train,
                    const std::vector<std::string> &targets,
                    const ImpostorTable *table, const TrainConfig &cfg,
                    Rng *rng) {
  BatchPlan plan;
  const SpeakerUtterances pairs = train.SpeakerUtterancePairs();
  std::set<std::string> distinct;
  for (const std::string &target : targets) {
    const std::vector<std::string> &utts = train.Utterances(target);
    if (utts.size() < cfg.n_enroll + cfg.t1) {
      throw DataError("speaker '" + target + "' has " +
                      std::to_string(utts.size()) + " utterances, needs " +
                      std::to_string(cfg.n_enroll + cfg.t1));
    }
    BatchPlan::TargetPlan tp;
    tp.speaker = target;
    // One shuffled pass gives the enrollment set and, disjoint from it, the
    // positive test utterances.
    std::vector<std::size_t> idx =
        SampleWithoutReplacement(utts.size(), cfg.n_enroll + cfg.t1, rng);
    tp.enroll = PickUtts(
        utts, {idx.begin(), idx.begin() + static_cast<long>(cfg.n_enroll)});
    tp.positives = PickUtts(
        utts, {idx.begin() + static_cast<long>(cfg.n_enroll), idx.end()});
    tp.negatives =
        table != nullptr
            ? SampleImpostorUtterances(*table, target, pairs, cfg.t2, rng)
            : UniformImpostors(train, target, cfg.t2, rng);
    for (const std::string &u : tp.enroll) distinct.insert(u);
    for (const std::string &u : tp.positives) distinct.insert(u);
    for (const std::string &u : tp.negatives) distinct.insert(u);
    plan.targets.push_back(std::move(tp));
  }
  plan.distinct_utts.assign(distinct.begin(), distinct.end());
  return plan;
}

namespace {

// Value-only supervector under batch-statistics normalization: the training
// forward, as opposed to the running-statistics inference forward.
std::vector<double> TrainModeSupervector(const EndToEndModel &model,
                                         UtteranceCache *cache,
                                         const std::string &utt,
                                         std::vector<BnBatchStats> *stats) {
  NoGradGuard no_grad;
  const PreparedUtterance &prep = cache->Get(utt);
  TensorPtr windows = WindowsTensor(prep.cmn);
  TensorPtr h = model.net.Forward(windows, BnMode::kTrainNoUpdate, stats);
  Supervector sv = PoolFramesValue(model.pooling, *h, *prep.gamma,
                                   *prep.bottleneck, &model.att);
  return std::move(sv.values);
}

double CosineValue(const std::vector<double> &a, const std::vector<double> &b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw NumericError("cosine of a zero-norm supervector");
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double BceValue(const std::vector<double> &logits,
                const std::vector<double> &labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double p = 1.0 / (1.0 + std::exp(-logits[i]));
    p = std::clamp(p, 1e-12, 1.0 - 1e-12);
    total += labels[i] > 0.5 ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(logits.size());
}

}  // namespace

double BatchLossValue(const EndToEndModel &model, UtteranceCache *cache,
                      const BatchPlan &plan) {
  std::map<std::string, std::vector<double>> sv;
  for (const std::string &utt : plan.distinct_utts) {
    sv[utt] = TrainModeSupervector(model, cache, utt, nullptr);
  }
  const double w = model.head_w->Scalar();
  const double b = model.head_b->Scalar();
  std::vector<double> logits, labels;
  for (const BatchPlan::TargetPlan &tp : plan.targets) {
    // Mean of the enrollment supervectors: sum in list order, then scale.
    std::vector<double> mean(sv.at(tp.enroll[0]).size(), 0.0);
    for (const std::string &utt : tp.enroll) {
      const std::vector<double> &v = sv.at(utt);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
    }
    const double inv = 1.0 / static_cast<double>(tp.enroll.size());
    for (double &x : mean) x *= inv;
    for (const std::string &utt : tp.positives) {
      logits.push_back(w * CosineValue(mean, sv.at(utt)) + b);
      labels.push_back(1.0);
    }
    for (const std::string &utt : tp.negatives) {
      logits.push_back(w * CosineValue(mean, sv.at(utt)) + b);
      labels.push_back(0.0);
    }
  }
  return BceValue(logits, labels);
}

double TrainStep(EndToEndModel *model, UtteranceCache *cache,
                 const BatchPlan &plan, ParamStore *store, double lr) {
  store->ZeroGrad();

  // Phase A: value-only supervectors and the per-utterance batch-norm
  // statistics (applied only after the step, in sorted utterance order).
  std::map<std::string, std::vector<BnBatchStats>> bn_stats;
  std::map<std::string, TensorPtr> leaves;
  for (const std::string &utt : plan.distinct_utts) {
    std::vector<BnBatchStats> stats;
    std::vector<double> values =
        TrainModeSupervector(*model, cache, utt, &stats);
    bn_stats.emplace(utt, std::move(stats));
    const std::size_t dim = values.size();
    leaves.emplace(utt, Tensor::Param({dim}, std::move(values)));
  }

  // Scoring graph over the supervector leaves.
  std::vector<TensorPtr> logits;
  std::vector<double> labels;
  for (const BatchPlan::TargetPlan &tp : plan.targets) {
    std::vector<TensorPtr> enroll_nodes;
    for (const std::string &utt : tp.enroll) {
      enroll_nodes.push_back(leaves.at(utt));
    }
    TensorPtr mean = AverageVectors(enroll_nodes);
    for (const std::string &utt : tp.positives) {
      logits.push_back(AffineScalar(Cosine(mean, leaves.at(utt)),
                                    model->head_w, model->head_b));
      labels.push_back(1.0);
    }
    for (const std::string &utt : tp.negatives) {
      logits.push_back(AffineScalar(Cosine(mean, leaves.at(utt)),
                                    model->head_w, model->head_b));
      labels.push_back(0.0);
    }
  }
  TensorPtr loss_node = BceWithLogitsMean(StackScalars(logits), labels);
  const double loss = loss_node->Scalar();
  if (!std::isfinite(loss)) {
    throw NumericError("batch loss is not finite (" + FormatF64(loss) +
                       "); " + std::to_string(plan.targets.size()) +
                       " targets, " + std::to_string(plan.distinct_utts.size()) +
                       " utterances");
  }
  Backward(loss_node);

  // Phase B: replay each utterance's forward with gradients, seeded by its
  // supervector leaf gradient.
  for (const std::string &utt : plan.distinct_utts) {
    const TensorPtr &leaf = leaves.at(utt);
    if (leaf->grad.empty()) continue;
    const PreparedUtterance &prep = cache->Get(utt);
    TensorPtr windows = WindowsTensor(prep.cmn);
    TensorPtr h = model->net.Forward(windows, BnMode::kTrainNoUpdate);
    PoolResult pooled = PoolFrames(model->pooling, h, *prep.gamma,
                                   *prep.bottleneck, &model->att);
    BackwardFrom(pooled.supervector, leaf->grad);
  }

  store->SgdStep(lr);
  for (const std::string &utt : plan.distinct_utts) {
    model->net.ApplyBnUpdates(bn_stats.at(utt));
  }
  return loss;
}

TrainReport Train(EndToEndModel *model, const CorpusIndex &train,
                  const TrainConfig &cfg) {
  if (cfg.sweeps <= 0) throw UsageError("sweeps must be positive");
  if (cfg.batch_targets == 0 || cfg.n_enroll == 0 || cfg.t1 == 0 ||
      cfg.t2 == 0) {
    throw UsageError("batch_targets, n_enroll, t1 and t2 must be positive");
  }
  if (cfg.learning_rate <= 0.0) {
    throw UsageError("learning rate must be positive");
  }
  if (train.Speakers().size() < 2) {
    throw DataError("training needs at least 2 speakers, got " +
                    std::to_string(train.Speakers().size()));
  }
  for (const std::string &spk : train.Speakers()) {
    if (train.Utterances(spk).size() < cfg.n_enroll + cfg.t1) {
      throw DataError("speaker '" + spk + "' has " +
                      std::to_string(train.Utterances(spk).size()) +
                      " utterances; training needs n_enroll + t1 = " +
                      std::to_string(cfg.n_enroll + cfg.t1));
    }
  }

  UtteranceCache cache(&train, &model->phonetic);
  const SupervectorExtractor extract = [model, &cache](const std::string &utt) {
    return ExtractSupervector(*model, cache.Get(utt));
  };
  const SpeakerUtterances pairs = train.SpeakerUtterancePairs();

  ParamStore store;
  model->net.RegisterParams(&store, "net.");
  if (model->pooling == PoolingKind::kAttention) {
    store.Register("att.wh", model->att.wh);
    store.Register("att.wb", model->att.wb);
  }
  store.Register("head.w", model->head_w);
  store.Register("head.b", model->head_b);

  Rng pool_rng(Rng::Derive(cfg.seed, 200));
  SpeakerVectorPool pool =
      InitializeSpeakerPool(extract, pairs, cfg.n_enroll, &pool_rng);
  ImpostorTable table;
  if (cfg.hard_mining) table = BuildImpostorTable(pool, cfg.k_impostors);

  TrainReport report;
  for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
    Rng rng(Rng::Derive(cfg.seed, 100 + static_cast<uint64_t>(sweep)));
    std::vector<std::string> order = train.Speakers();
    rng.Shuffle(&order);

    int batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_targets) {
      const std::size_t count =
          std::min(cfg.batch_targets, order.size() - start);
      if (count < 2 && order.size() > cfg.batch_targets) {
        E2E_WARN << "dropping a single-target remainder batch in sweep "
                 << sweep;
        break;
      }
      std::vector<std::string> targets(
          order.begin() + static_cast<long>(start),
          order.begin() + static_cast<long>(start + count));
      BatchPlan plan = PlanBatch(train, targets,
                                 cfg.hard_mining ? &table : nullptr, cfg,
                                 &rng);
      const double loss =
          TrainStep(model, &cache, plan, &store, cfg.learning_rate);
      report.history.push_back({sweep, batch_index, loss,
                                plan.PositiveTrials(),
                                plan.NegativeTrials()});
      E2E_INFO << "sweep " << sweep << " batch " << batch_index << ": loss "
               << loss << " (" << plan.PositiveTrials() << " pos, "
               << plan.NegativeTrials() << " neg)";
      ++batch_index;
    }

    Rng refresh_rng(
        Rng::Derive(cfg.seed, 200 + static_cast<uint64_t>(sweep) + 1));
    RefreshSpeakerPool(&pool, extract, pairs, cfg.n_enroll, &refresh_rng);
    if (cfg.hard_mining) table = BuildImpostorTable(pool, cfg.k_impostors);
  }

  if (report.history.empty()) {
    throw DataError("training produced no batches");
  }
  report.initial_loss = report.history.front().loss;
  report.final_loss = report.history.back().loss;
  report.final_pool = std::move(pool);
  return report;
}

void WriteLossHistory(const std::filesystem::path &path,
                      const std::vector<TrainLossRecord> &history) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write loss history " + path.string());
  os << "sweep,batch,loss,pos_trials,neg_trials\n";
  for (const TrainLossRecord &rec : history) {
    os << rec.sweep << ',' << rec.batch << ',' << FormatF64(rec.loss) << ','
       << rec.pos_trials << ',' << rec.neg_trials << '\n';
  }
  if (!os) throw DataError("failed writing loss history " + path.string());
}

}  // namespace e2esv
