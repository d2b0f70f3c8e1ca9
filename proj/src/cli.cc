// src/cli.cc

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

#include "e2esv/cli.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "e2esv/corpus.hpp"
#include "e2esv/kernels.hpp"
#include "e2esv/metrics.hpp"
#include "e2esv/miner.hpp"
#include "e2esv/pipeline.hpp"
#include "e2esv/trainer.hpp"

namespace e2esv {

namespace {

struct GenCorpusArgs {
  std::string spec_path;
  std::string out_dir;
  int64_t seed = -1;  // < 0: keep the spec's seed
  bool print_spec = false;
};

void RunGenCorpus(const GenCorpusArgs &args) {
  SynthSpec spec;
  if (!args.spec_path.empty()) {
    spec = SynthSpec::FromJsonFile(args.spec_path);
  }
  if (args.seed >= 0) spec.seed = static_cast<uint64_t>(args.seed);
  if (args.print_spec) std::cout << spec.ToJsonString();
  GenerateCorpus(spec, args.out_dir);
  std::cout << "corpus written to " << args.out_dir << "\n";
}

struct TrainPhoneticArgs {
  std::string train_manifest;
  std::string eval_manifest;
  std::string model_out;
  int epochs = 10;
  double lr = 0.1;
  std::size_t batch_frames = 512;
  uint64_t seed = 1;
};

// Frame accuracy of the frozen classifier over a loaded corpus split.
double PhoneFrameAccuracy(const PhoneticModel &model,
                          const CorpusIndex &corpus) {
  std::size_t correct = 0, total = 0;
  for (const std::string &utt : corpus.AllUtterances()) {
    const std::vector<int> labels = corpus.Labels(utt);
    FrameSequence gamma;
    model.Extract(RollingCmn(corpus.Features(utt)), &gamma, nullptr);
    for (std::size_t t = 0; t < gamma.num_frames; ++t) {
      const double *row = gamma.Row(t);
      std::size_t best = 0;
      for (std::size_t c = 1; c < gamma.dim; ++c) {
        if (row[c] > row[best]) best = c;
      }
      correct += (static_cast<int>(best) == labels[t]) ? 1 : 0;
      ++total;
    }
  }
  if (total == 0) throw DataError("no frames to evaluate");
  return static_cast<double>(correct) / static_cast<double>(total);
}

void RunTrainPhonetic(const TrainPhoneticArgs &args) {
  CorpusIndex train = CorpusIndex::Load({args.train_manifest});
  std::vector<FrameSequence> cmn;
  std::vector<std::vector<int>> labels;
  std::vector<std::pair<const FrameSequence *, const std::vector<int> *>>
      dataset;
  std::vector<std::string> utts = train.AllUtterances();
  cmn.reserve(utts.size());
  labels.reserve(utts.size());
  for (const std::string &utt : utts) {
    cmn.push_back(RollingCmn(train.Features(utt)));
    labels.push_back(train.Labels(utt));
  }
  for (std::size_t i = 0; i < utts.size(); ++i) {
    dataset.emplace_back(&cmn[i], &labels[i]);
  }

  PhoneticModel model = PhoneticModel::Init(args.seed);
  PhoneticTrainReport report = TrainPhonetic(
      &model, dataset, args.epochs, args.lr, args.batch_frames, args.seed);
  model.SaveFile(args.model_out);

  const CorpusIndex *acc_corpus = &train;
  CorpusIndex eval_corpus;
  if (!args.eval_manifest.empty()) {
    eval_corpus = CorpusIndex::Load({args.eval_manifest});
    acc_corpus = &eval_corpus;
  }
  const double accuracy = PhoneFrameAccuracy(model, *acc_corpus);
  std::cout << "initial_loss=" << FormatF64(report.initial_loss)
            << "\tfinal_loss=" << FormatF64(report.final_loss)
            << "\tframe_accuracy=" << FormatF64(accuracy) << "\n";
}

struct TrainE2eArgs {
  std::string train_manifest;
  std::string phonetic_path;
  std::string model_out;
  std::string loss_out;
  std::string pool_dump;
  std::string pooling = "attention";
  std::string net = "cnn";
  TrainConfig cfg;
  std::string miner = "knn";
};

void RunTrainE2e(const TrainE2eArgs &args) {
  TrainConfig cfg = args.cfg;
  cfg.pooling = ParsePoolingKind(args.pooling);
  cfg.net = ParseSpeakerNetKind(args.net);
  if (args.miner == "knn") {
    cfg.hard_mining = true;
  } else if (args.miner == "random") {
    cfg.hard_mining = false;
  } else {
    throw UsageError("unknown miner '" + args.miner + "' (knn | random)");
  }

  CorpusIndex train = CorpusIndex::Load({args.train_manifest},
                                        cfg.n_enroll + cfg.t1);
  PhoneticModel phonetic = PhoneticModel::LoadFile(args.phonetic_path);
  EndToEndModel model =
      InitEndToEnd(std::move(phonetic), cfg.net, cfg.pooling, cfg.seed);
  model.config_json = cfg.ToJsonString();

  TrainReport report = Train(&model, train, cfg);
  model.SaveFile(args.model_out);
  if (!args.loss_out.empty()) WriteLossHistory(args.loss_out, report.history);
  if (!args.pool_dump.empty()) WritePoolDump(args.pool_dump, report.final_pool);
  std::cout << "initial_loss=" << FormatF64(report.initial_loss)
            << "\tfinal_loss=" << FormatF64(report.final_loss)
            << "\tbatches=" << report.history.size()
            << "\tpool_generation=" << report.final_pool.generation << "\n";
}

struct EnrollArgs {
  std::string model_path;
  std::string manifest;
  std::string out_path;
  std::vector<std::string> speakers;  // empty: all manifest speakers
};

void RunEnroll(const EnrollArgs &args) {
  EndToEndModel model = EndToEndModel::LoadFile(args.model_path);
  CorpusIndex enroll = CorpusIndex::Load({args.manifest});
  UtteranceCache cache(&enroll, &model.phonetic);
  EnrollmentStore store = EnrollCorpus(model, &cache, enroll);
  if (!args.speakers.empty()) {
    std::map<std::string, SpeakerModel> kept;
    for (const std::string &id : args.speakers) {
      auto it = store.speakers.find(id);
      if (it == store.speakers.end()) {
        throw DataError("speaker '" + id + "' is not in the manifest");
      }
      kept.insert(*it);
    }
    store.speakers = std::move(kept);
  }
  WriteEnrollmentStore(args.out_path, store);
  std::cout << "enrolled_speakers=" << store.speakers.size() << "\n";
}

struct VerifyArgs {
  std::string model_path;
  std::string enrollments;
  std::string corpus_manifest;
  std::string utt_id;
  std::string speaker_id;
  double threshold = 0.5;
};

void RunVerify(const VerifyArgs &args) {
  EndToEndModel model = EndToEndModel::LoadFile(args.model_path);
  EnrollmentStore store = ReadEnrollmentStore(args.enrollments);
  if (store.kind != model.pooling) {
    throw DataError("enrollment store uses " + PoolingKindName(store.kind) +
                    " pooling but the model uses " +
                    PoolingKindName(model.pooling));
  }
  auto it = store.speakers.find(args.speaker_id);
  if (it == store.speakers.end()) {
    throw DataError("speaker '" + args.speaker_id + "' is not enrolled");
  }
  CorpusIndex corpus = CorpusIndex::Load({args.corpus_manifest});
  UtteranceCache cache(&corpus, &model.phonetic);
  Supervector sv = ExtractSupervector(model, cache.Get(args.utt_id));
  const double score = CosineScore(sv, it->second);
  const LogisticHead head = model.Head();
  const double prob = AcceptProbability(head, score);
  const bool accept = prob >= args.threshold;
  std::cout << "utt=" << args.utt_id << "\tspeaker=" << args.speaker_id
            << "\tscore=" << FormatF64(score)
            << "\tprobability=" << FormatF64(prob)
            << "\tdecision=" << (accept ? "ACCEPT" : "REJECT") << "\n";
}

struct EvaluateArgs {
  std::string model_path;
  std::string enrollments;
  std::string corpus_manifest;
  std::string trials_path;
  std::string out_dir;
};

void RunEvaluate(const EvaluateArgs &args) {
  EndToEndModel model = EndToEndModel::LoadFile(args.model_path);
  EnrollmentStore store = ReadEnrollmentStore(args.enrollments);
  if (store.kind != model.pooling) {
    throw DataError("enrollment store uses " + PoolingKindName(store.kind) +
                    " pooling but the model uses " +
                    PoolingKindName(model.pooling));
  }
  CorpusIndex corpus = CorpusIndex::Load({args.corpus_manifest});
  UtteranceCache cache(&corpus, &model.phonetic);
  std::vector<Trial> trials = ReadTrials(args.trials_path);
  if (trials.empty()) {
    throw DataError("no trials in '" + args.trials_path + "'");
  }
  ScoreTrials(model, store, &cache, &trials);
  std::filesystem::create_directories(args.out_dir);
  const std::filesystem::path out(args.out_dir);
  WriteScoredTrials(out / "scores.tsv", trials);
  ScoreSet scores = SplitByLabel(trials);
  EerResult eer = ComputeEer(scores);
  WriteDetCurve(out / "det.csv", ComputeDetCurve(scores));
  WriteEerReport(out / "eer.txt", eer);
  std::cout << "EER=" << FormatF64(eer.eer)
            << "\tthreshold=" << FormatF64(eer.threshold)
            << "\ttarget_trials=" << scores.target_scores.size()
            << "\timpostor_trials=" << scores.impostor_scores.size() << "\n";
}

}  // namespace

int RunCli(int argc, char **argv) {
  CLI::App app{"text-dependent speaker verification engine"};
  app.require_subcommand(1);

  int threads = 0;  // 0: library default
  app.add_option("--threads", threads,
                 "worker threads for the compute kernels (1 disables the "
                 "parallel paths)");

  GenCorpusArgs gen;
  CLI::App *gen_cmd =
      app.add_subcommand("gen-corpus", "generate a synthetic keyword corpus");
  gen_cmd->add_option("--spec", gen.spec_path,
                      "JSON corpus spec (defaults used when omitted)");
  gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "override the spec seed");
  gen_cmd->add_flag("--print-spec", gen.print_spec,
                    "print the effective spec JSON");

  TrainPhoneticArgs ph;
  CLI::App *ph_cmd =
      app.add_subcommand("train-phonetic", "train the frame phone classifier");
  ph_cmd->add_option("--corpus", ph.train_manifest, "training manifest")
      ->required();
  ph_cmd->add_option("--eval", ph.eval_manifest,
                     "manifest for the accuracy report (default: train)");
  ph_cmd->add_option("--out", ph.model_out, "output model path")->required();
  ph_cmd->add_option("--epochs", ph.epochs, "training epochs");
  ph_cmd->add_option("--lr", ph.lr, "SGD learning rate");
  ph_cmd->add_option("--batch-frames", ph.batch_frames, "frames per batch");
  ph_cmd->add_option("--seed", ph.seed, "random seed");

  TrainE2eArgs e2e;
  CLI::App *e2e_cmd =
      app.add_subcommand("train-e2e", "train the end-to-end verifier");
  e2e_cmd->add_option("--corpus", e2e.train_manifest, "training manifest")
      ->required();
  e2e_cmd->add_option("--phonetic", e2e.phonetic_path,
                      "trained phone classifier")
      ->required();
  e2e_cmd->add_option("--out", e2e.model_out, "output model path")
      ->required();
  e2e_cmd->add_option("--loss-out", e2e.loss_out, "loss history CSV");
  e2e_cmd->add_option("--pool-dump", e2e.pool_dump,
                      "write the final speaker-vector pool");
  e2e_cmd->add_option("--pooling", e2e.pooling,
                      "mean | posterior | attention");
  e2e_cmd->add_option("--speaker-net", e2e.net, "cnn | dnn");
  e2e_cmd->add_option("--sweeps", e2e.cfg.sweeps, "passes over the speakers");
  e2e_cmd->add_option("--batch-targets", e2e.cfg.batch_targets,
                      "target speakers per batch");
  e2e_cmd->add_option("--n-enroll", e2e.cfg.n_enroll,
                      "enrollment utterances per target");
  e2e_cmd->add_option("--t1", e2e.cfg.t1, "genuine test utterances per target");
  e2e_cmd->add_option("--t2", e2e.cfg.t2,
                      "impostor test utterances per target");
  e2e_cmd->add_option("--k", e2e.cfg.k_impostors,
                      "mined impostor speakers per target");
  e2e_cmd->add_option("--lr", e2e.cfg.learning_rate, "SGD learning rate");
  e2e_cmd->add_option("--seed", e2e.cfg.seed, "random seed");
  e2e_cmd->add_option("--miner", e2e.miner,
                      "knn (pool mining) | random (uniform impostors)");

  EnrollArgs enroll;
  CLI::App *enroll_cmd =
      app.add_subcommand("enroll", "build speaker models from a manifest");
  enroll_cmd->add_option("--model", enroll.model_path, "trained model")
      ->required();
  enroll_cmd->add_option("--corpus", enroll.manifest, "enrollment manifest")
      ->required();
  enroll_cmd->add_option("--speakers", enroll.speakers,
                         "speaker ids to keep (default: all)")
      ->delimiter(',');
  enroll_cmd->add_option("--out", enroll.out_path, "enrollment store path")
      ->required();

  VerifyArgs verify;
  CLI::App *verify_cmd =
      app.add_subcommand("verify", "score one utterance against one speaker");
  verify_cmd->add_option("--model", verify.model_path, "trained model")
      ->required();
  verify_cmd->add_option("--store", verify.enrollments, "enrollment store")
      ->required();
  verify_cmd->add_option("--corpus", verify.corpus_manifest,
                         "manifest holding the test utterance")
      ->required();
  verify_cmd->add_option("--utterance", verify.utt_id, "test utterance id")
      ->required();
  verify_cmd->add_option("--speaker", verify.speaker_id,
                         "claimed speaker id")
      ->required();
  verify_cmd->add_option("--threshold", verify.threshold,
                         "accept probability threshold");

  EvaluateArgs eval;
  CLI::App *eval_cmd =
      app.add_subcommand("evaluate", "score a trial list and report EER");
  eval_cmd->add_option("--model", eval.model_path, "trained model")
      ->required();
  eval_cmd->add_option("--store", eval.enrollments, "enrollment store")
      ->required();
  eval_cmd->add_option("--corpus", eval.corpus_manifest,
                       "manifest holding the test utterances")
      ->required();
  eval_cmd->add_option("--trials", eval.trials_path, "trial list TSV")
      ->required();
  eval_cmd->add_option("--out", eval.out_dir,
                       "output directory (scores.tsv, det.csv, eer.txt)")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (threads != 0) kernels::SetThreadCount(threads);
    if (gen_cmd->parsed()) RunGenCorpus(gen);
    if (ph_cmd->parsed()) RunTrainPhonetic(ph);
    if (e2e_cmd->parsed()) RunTrainE2e(e2e);
    if (enroll_cmd->parsed()) RunEnroll(enroll);
    if (verify_cmd->parsed()) RunVerify(verify);
    if (eval_cmd->parsed()) RunEvaluate(eval);
  } catch (const UsageError &e) {
    E2E_ERR << "usage error: " << e.what();
    return 1;
  } catch (const DataError &e) {
    E2E_ERR << "data error: " << e.what();
    return 2;
  } catch (const NumericError &e) {
    E2E_ERR << "numeric error: " << e.what();
    return 3;
  } catch (const std::exception &e) {
    E2E_ERR << "unexpected error: " << e.what();
    return 4;
  }
  return 0;
}

}  // namespace e2esv
