// src/corpus.cc

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

#include "e2esv/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "e2esv/common.hpp"
#include "e2esv/metrics.hpp"
#include "json.hpp"

namespace e2esv {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr std::size_t kFeatureDim = 38;
constexpr int kNumPhones = 9;   // classes 0..8 in fixed keyword order
constexpr int kGarbageClass = 9;

// Seed streams.  Every utterance owns an independent substream so corpus
// size changes upstream never shift the draws of an unrelated utterance.
constexpr uint64_t kStreamClassMeans = 100;    // +class
constexpr uint64_t kStreamProjection = 150;    // +phone class
constexpr uint64_t kStreamLatent = 200;        // +global speaker index
constexpr uint64_t kStreamUtterance = 300;     // +global speaker index, then utt

template <typename T>
void ReadKey(const nlohmann::json &j, const char *key, T *out) {
  if (j.contains(key)) *out = j.at(key).get<T>();
}

}  // namespace

SynthSpec SynthSpec::FromJsonString(const std::string &text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("corpus spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw DataError("corpus spec must be a JSON object");
  SynthSpec spec;
  static const char *known[] = {
      "seed",           "num_train_speakers",
      "utts_per_train_speaker", "num_eval_speakers",
      "enroll_utts_per_eval_speaker", "test_utts_per_eval_speaker",
      "min_frames",     "max_frames",     "latent_dim",
      "class_sep",      "speaker_spread", "noise_sigma",
      "garbage_prob",   "garbage_sigma"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char *k : known) ok = ok || it.key() == k;
    if (!ok) throw DataError("unknown corpus spec key '" + it.key() + "'");
  }
  try {
    ReadKey(j, "seed", &spec.seed);
    ReadKey(j, "num_train_speakers", &spec.num_train_speakers);
    ReadKey(j, "utts_per_train_speaker", &spec.utts_per_train_speaker);
    ReadKey(j, "num_eval_speakers", &spec.num_eval_speakers);
    ReadKey(j, "enroll_utts_per_eval_speaker",
            &spec.enroll_utts_per_eval_speaker);
    ReadKey(j, "test_utts_per_eval_speaker", &spec.test_utts_per_eval_speaker);
    ReadKey(j, "min_frames", &spec.min_frames);
    ReadKey(j, "max_frames", &spec.max_frames);
    ReadKey(j, "latent_dim", &spec.latent_dim);
    ReadKey(j, "class_sep", &spec.class_sep);
    ReadKey(j, "speaker_spread", &spec.speaker_spread);
    ReadKey(j, "noise_sigma", &spec.noise_sigma);
    ReadKey(j, "garbage_prob", &spec.garbage_prob);
    ReadKey(j, "garbage_sigma", &spec.garbage_sigma);
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("bad corpus spec value: ") + e.what());
  }
  spec.Validate();
  return spec;
}

SynthSpec SynthSpec::FromJsonFile(const fs::path &path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open corpus spec '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return FromJsonString(ss.str());
}

std::string SynthSpec::ToJsonString() const {
  ordered_json j;
  j["seed"] = seed;
  j["num_train_speakers"] = num_train_speakers;
  j["utts_per_train_speaker"] = utts_per_train_speaker;
  j["num_eval_speakers"] = num_eval_speakers;
  j["enroll_utts_per_eval_speaker"] = enroll_utts_per_eval_speaker;
  j["test_utts_per_eval_speaker"] = test_utts_per_eval_speaker;
  j["min_frames"] = min_frames;
  j["max_frames"] = max_frames;
  j["latent_dim"] = latent_dim;
  j["class_sep"] = class_sep;
  j["speaker_spread"] = speaker_spread;
  j["noise_sigma"] = noise_sigma;
  j["garbage_prob"] = garbage_prob;
  j["garbage_sigma"] = garbage_sigma;
  return j.dump(2) + "\n";
}

void SynthSpec::Validate() const {
  if (num_train_speakers == 0 || utts_per_train_speaker == 0) {
    throw UsageError("corpus spec needs at least one training speaker and "
                     "utterance");
  }
  if (num_eval_speakers < 2) {
    throw UsageError("corpus spec needs at least 2 evaluation speakers for "
                     "impostor trials");
  }
  if (enroll_utts_per_eval_speaker == 0 || test_utts_per_eval_speaker == 0) {
    throw UsageError("corpus spec needs enrollment and test utterances per "
                     "evaluation speaker");
  }
  if (min_frames < static_cast<std::size_t>(kNumPhones) ||
      max_frames < min_frames) {
    throw UsageError("corpus spec frame range is invalid: [" +
                     std::to_string(min_frames) + ", " +
                     std::to_string(max_frames) + "]");
  }
  if (latent_dim == 0) throw UsageError("latent_dim must be positive");
  if (class_sep <= 0.0 || speaker_spread < 0.0 || noise_sigma <= 0.0 ||
      garbage_sigma <= 0.0) {
    throw UsageError("corpus spec scales must be positive");
  }
  if (garbage_prob < 0.0 || garbage_prob >= 1.0) {
    throw UsageError("garbage_prob must be in [0, 1)");
  }
}

std::vector<ManifestRecord> ReadManifest(const fs::path &path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest '" + path.string() + "'");
  const fs::path base = path.parent_path();
  std::vector<ManifestRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 3 || fields.size() > 4) {
      throw DataError("manifest '" + path.string() + "' line " +
                      std::to_string(lineno) + ": expected 3 or 4 fields, got " +
                      std::to_string(fields.size()));
    }
    ManifestRecord rec;
    rec.utt_id = fields[0];
    rec.speaker_id = fields[1];
    if (rec.utt_id.empty() || rec.speaker_id.empty()) {
      throw DataError("manifest '" + path.string() + "' line " +
                      std::to_string(lineno) + ": empty id field");
    }
    rec.feature_path = base / fields[2];
    if (fields.size() == 4 && !fields[3].empty()) {
      rec.label_path = base / fields[3];
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void WriteManifest(const fs::path &path,
                   const std::vector<ManifestRecord> &records) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  os << "# utt_id\tspeaker_id\tfeatures\tlabels\n";
  for (const ManifestRecord &rec : records) {
    os << rec.utt_id << '\t' << rec.speaker_id << '\t'
       << rec.feature_path.generic_string();
    if (rec.label_path) os << '\t' << rec.label_path->generic_string();
    os << '\n';
  }
  if (!os) throw DataError("failed writing manifest '" + path.string() + "'");
}

std::vector<int> ReadLabelFile(const fs::path &path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open label file '" + path.string() + "'");
  std::vector<int> labels;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      std::size_t pos = 0;
      int v = std::stoi(line, &pos);
      if (pos != line.size()) throw std::invalid_argument(line);
      labels.push_back(v);
    } catch (const std::exception &) {
      throw DataError("label file '" + path.string() +
                      "': bad line '" + line + "'");
    }
  }
  return labels;
}

void WriteLabelFile(const fs::path &path, const std::vector<int> &labels) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  for (int v : labels) os << v << '\n';
  if (!os) throw DataError("failed writing labels '" + path.string() + "'");
}

namespace {

// Phone durations for one utterance: weights 0.5 + U(0,1) per phone,
// largest-remainder apportionment of num_frames, at least one frame each.
std::vector<std::size_t> PhoneDurations(std::size_t num_frames, Rng *rng) {
  std::vector<double> weights(kNumPhones);
  double total = 0.0;
  for (double &w : weights) {
    w = 0.5 + rng->Uniform();
    total += w;
  }
  std::vector<std::size_t> durations(kNumPhones, 1);
  std::size_t assigned = static_cast<std::size_t>(kNumPhones);
  std::vector<std::pair<double, int>> remainders(kNumPhones);
  for (int p = 0; p < kNumPhones; ++p) {
    const double exact =
        weights[p] / total * static_cast<double>(num_frames);
    const double extra = std::max(0.0, exact - 1.0);
    const std::size_t whole = static_cast<std::size_t>(extra);
    durations[p] += whole;
    assigned += whole;
    remainders[p] = {extra - static_cast<double>(whole), p};
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto &a, const auto &b) {
                     if (a.first != b.first) return a.first > b.first;
                     return a.second < b.second;
                   });
  std::size_t i = 0;
  while (assigned < num_frames) {
    ++durations[static_cast<std::size_t>(remainders[i % remainders.size()].second)];
    ++assigned;
    ++i;
  }
  while (assigned > num_frames) {
    // Trim from the longest phone; keeps every phone >= 1 frame.
    auto longest = std::max_element(durations.begin(), durations.end());
    if (*longest <= 1) break;
    --*longest;
    --assigned;
  }
  return durations;
}

struct GroundTruth {
  std::vector<std::vector<double>> class_means;  // [10][38]
  // Per phone class, [38 x latent_dim] row-major.  The speaker offset is a
  // different linear image of the latent for every phone class; a single
  // shared projection would make the offset constant over the utterance,
  // and any mean-normalization stage (rolling CMN, train-mode batch norm)
  // would erase it.  Class-dependent offsets survive exactly the way real
  // speaker timbre does: as a speaker-by-phone interaction.
  std::vector<std::vector<double>> projections;  // [9][38 x latent_dim]
};

GroundTruth MakeGroundTruth(const SynthSpec &spec) {
  GroundTruth gt;
  gt.class_means.resize(kGarbageClass + 1);
  const double mean_scale =
      spec.class_sep / std::sqrt(static_cast<double>(kFeatureDim));
  for (int c = 0; c <= kGarbageClass; ++c) {
    Rng rng(Rng::Derive(spec.seed, kStreamClassMeans + static_cast<uint64_t>(c)));
    gt.class_means[static_cast<std::size_t>(c)].resize(kFeatureDim);
    for (double &x : gt.class_means[static_cast<std::size_t>(c)]) {
      x = mean_scale * rng.Normal();
    }
  }
  const double proj_scale =
      spec.speaker_spread / std::sqrt(static_cast<double>(spec.latent_dim));
  gt.projections.resize(kNumPhones);
  for (int c = 0; c < kNumPhones; ++c) {
    Rng rng(
        Rng::Derive(spec.seed, kStreamProjection + static_cast<uint64_t>(c)));
    gt.projections[static_cast<std::size_t>(c)].resize(kFeatureDim *
                                                       spec.latent_dim);
    for (double &x : gt.projections[static_cast<std::size_t>(c)]) {
      x = proj_scale * rng.Normal();
    }
  }
  return gt;
}

// offsets[c][i]: what speaking phone c adds to feature i for this speaker.
// Garbage frames carry no speaker information on purpose.
std::vector<std::vector<double>> SpeakerOffsets(
    const GroundTruth &gt, const std::vector<double> &latent) {
  std::vector<std::vector<double>> offsets(kNumPhones);
  for (int c = 0; c < kNumPhones; ++c) {
    const std::vector<double> &proj = gt.projections[static_cast<std::size_t>(c)];
    std::vector<double> &offset = offsets[static_cast<std::size_t>(c)];
    offset.assign(kFeatureDim, 0.0);
    for (std::size_t i = 0; i < kFeatureDim; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < latent.size(); ++j) {
        acc += proj[i * latent.size() + j] * latent[j];
      }
      offset[i] = acc;
    }
  }
  return offsets;
}

// One utterance: phone segment labels, garbage overwrite, then per-frame
// features.  Each frame consumes a fixed number of draws (1 uniform for the
// garbage coin, 38 normals) so the stream stays aligned.
void SynthesizeUtterance(const SynthSpec &spec, const GroundTruth &gt,
                         const std::vector<std::vector<double>> &offsets,
                         Rng *rng, FrameSequence *feats,
                         std::vector<int> *labels) {
  const std::size_t num_frames = static_cast<std::size_t>(rng->UniformInt(
      static_cast<int64_t>(spec.min_frames),
      static_cast<int64_t>(spec.max_frames)));
  const std::vector<std::size_t> durations = PhoneDurations(num_frames, rng);
  labels->clear();
  labels->reserve(num_frames);
  for (int p = 0; p < kNumPhones; ++p) {
    labels->insert(labels->end(), durations[static_cast<std::size_t>(p)], p);
  }
  feats->num_frames = num_frames;
  feats->dim = kFeatureDim;
  feats->data.assign(num_frames * kFeatureDim, 0.0);
  for (std::size_t t = 0; t < num_frames; ++t) {
    const bool garbage = rng->Uniform() < spec.garbage_prob;
    if (garbage) (*labels)[t] = kGarbageClass;
    const int label = (*labels)[t];
    const std::vector<double> &mean =
        gt.class_means[static_cast<std::size_t>(label)];
    const double sigma = garbage ? spec.garbage_sigma : spec.noise_sigma;
    double *row = feats->Row(t);
    for (std::size_t i = 0; i < kFeatureDim; ++i) {
      row[i] = mean[i] + sigma * rng->Normal();
      if (!garbage) row[i] += offsets[static_cast<std::size_t>(label)][i];
    }
  }
}

std::string SpeakerName(bool train, std::size_t idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%03zu", train ? "tr" : "ev", idx);
  return buf;
}

}  // namespace

void GenerateCorpus(const SynthSpec &spec, const fs::path &out_dir) {
  spec.Validate();
  fs::create_directories(out_dir / "features");
  fs::create_directories(out_dir / "labels");

  const GroundTruth gt = MakeGroundTruth(spec);
  ordered_json meta;
  meta["spec"] = nlohmann::json::parse(spec.ToJsonString());
  meta["class_means"] = gt.class_means;
  meta["projections"] = gt.projections;
  ordered_json latents_json = ordered_json::object();

  std::vector<ManifestRecord> train_records, enroll_records, test_records;
  const std::size_t total_speakers =
      spec.num_train_speakers + spec.num_eval_speakers;
  for (std::size_t s = 0; s < total_speakers; ++s) {
    const bool train = s < spec.num_train_speakers;
    const std::size_t local = train ? s : s - spec.num_train_speakers;
    const std::string speaker = SpeakerName(train, local);
    Rng latent_rng(Rng::Derive(spec.seed, kStreamLatent + s));
    std::vector<double> latent(spec.latent_dim);
    for (double &x : latent) x = latent_rng.Normal();
    latents_json[speaker] = latent;
    const std::vector<std::vector<double>> offsets = SpeakerOffsets(gt, latent);

    const std::size_t num_utts =
        train ? spec.utts_per_train_speaker
              : spec.enroll_utts_per_eval_speaker +
                    spec.test_utts_per_eval_speaker;
    const uint64_t speaker_stream = Rng::Derive(spec.seed, kStreamUtterance + s);
    for (std::size_t u = 0; u < num_utts; ++u) {
      Rng rng(Rng::Derive(speaker_stream, u + 1));
      FrameSequence feats;
      std::vector<int> labels;
      SynthesizeUtterance(spec, gt, offsets, &rng, &feats, &labels);

      std::string utt_id;
      std::vector<ManifestRecord> *dest = nullptr;
      if (train) {
        utt_id = speaker + "_u" + std::to_string(u);
        dest = &train_records;
      } else if (u < spec.enroll_utts_per_eval_speaker) {
        utt_id = speaker + "_e" + std::to_string(u);
        dest = &enroll_records;
      } else {
        utt_id = speaker + "_t" +
                 std::to_string(u - spec.enroll_utts_per_eval_speaker);
        dest = &test_records;
      }
      feats.utterance_id = utt_id;
      const std::string feat_rel = "features/" + utt_id + ".e2ef";
      const std::string label_rel = "labels/" + utt_id + ".txt";
      WriteFeatureFile(out_dir / feat_rel, feats);
      WriteLabelFile(out_dir / label_rel, labels);
      dest->push_back({utt_id, speaker, feat_rel, label_rel});
    }
  }
  meta["latents"] = latents_json;

  WriteManifest(out_dir / "train.tsv", train_records);
  WriteManifest(out_dir / "enroll.tsv", enroll_records);
  WriteManifest(out_dir / "test.tsv", test_records);

  // All test utterances against all evaluation speakers.
  std::vector<Trial> trials;
  std::vector<std::string> eval_speakers;
  for (std::size_t e = 0; e < spec.num_eval_speakers; ++e) {
    eval_speakers.push_back(SpeakerName(false, e));
  }
  for (const ManifestRecord &rec : test_records) {
    for (const std::string &claim : eval_speakers) {
      Trial t;
      t.test_utterance = rec.utt_id;
      t.claimed_speaker = claim;
      t.label = (claim == rec.speaker_id) ? 1 : 0;
      trials.push_back(t);
    }
  }
  WriteTrials(out_dir / "trials.tsv", trials);

  std::ofstream meta_os(out_dir / "generator_meta.json");
  if (!meta_os) {
    throw DataError("cannot write generator metadata under '" +
                    out_dir.string() + "'");
  }
  meta_os << meta.dump(2) << '\n';

  std::ofstream spec_os(out_dir / "corpus_spec.json");
  spec_os << spec.ToJsonString();

  E2E_INFO << "generated corpus: " << train_records.size() << " train, "
           << enroll_records.size() << " enroll, " << test_records.size()
           << " test utterances, " << trials.size() << " trials";
}

CorpusIndex CorpusIndex::Load(const std::vector<fs::path> &manifests,
                              std::size_t min_utts_per_speaker) {
  CorpusIndex index;
  for (const fs::path &manifest : manifests) {
    for (ManifestRecord &rec : ReadManifest(manifest)) {
      if (index.by_utt_.count(rec.utt_id) != 0) {
        throw DataError("duplicate utterance id '" + rec.utt_id +
                        "' (second occurrence in '" + manifest.string() +
                        "')");
      }
      UttEntry entry;
      entry.speaker_id = rec.speaker_id;
      entry.features = ReadFeatureFile(rec.feature_path);
      entry.label_path = rec.label_path;
      index.by_speaker_[rec.speaker_id].push_back(rec.utt_id);
      index.by_utt_.emplace(rec.utt_id, std::move(entry));
    }
  }
  if (index.by_utt_.empty()) {
    throw DataError("no utterances found in the given manifests");
  }
  for (auto it = index.by_speaker_.begin(); it != index.by_speaker_.end();) {
    if (it->second.size() < min_utts_per_speaker) {
      E2E_WARN << "dropping speaker '" << it->first << "': only "
               << it->second.size() << " utterances (< "
               << min_utts_per_speaker << ")";
      for (const std::string &utt : it->second) index.by_utt_.erase(utt);
      it = index.by_speaker_.erase(it);
    } else {
      ++it;
    }
  }
  if (index.by_speaker_.empty()) {
    throw DataError("every speaker was dropped by the minimum utterance "
                    "filter");
  }
  for (const auto &[spk, utts] : index.by_speaker_) {
    index.speakers_.push_back(spk);
  }
  return index;
}

const std::vector<std::string> &CorpusIndex::Utterances(
    const std::string &spk) const {
  auto it = by_speaker_.find(spk);
  if (it == by_speaker_.end()) {
    throw DataError("unknown speaker '" + spk + "'");
  }
  return it->second;
}

bool CorpusIndex::HasUtterance(const std::string &utt_id) const {
  return by_utt_.count(utt_id) != 0;
}

const FrameSequence &CorpusIndex::Features(const std::string &utt_id) const {
  auto it = by_utt_.find(utt_id);
  if (it == by_utt_.end()) {
    throw DataError("unknown utterance '" + utt_id + "'");
  }
  return it->second.features;
}

const std::string &CorpusIndex::SpeakerOf(const std::string &utt_id) const {
  auto it = by_utt_.find(utt_id);
  if (it == by_utt_.end()) {
    throw DataError("unknown utterance '" + utt_id + "'");
  }
  return it->second.speaker_id;
}

bool CorpusIndex::HasLabels(const std::string &utt_id) const {
  auto it = by_utt_.find(utt_id);
  return it != by_utt_.end() && it->second.label_path.has_value();
}

std::vector<int> CorpusIndex::Labels(const std::string &utt_id) const {
  auto it = by_utt_.find(utt_id);
  if (it == by_utt_.end()) {
    throw DataError("unknown utterance '" + utt_id + "'");
  }
  if (!it->second.label_path) {
    throw DataError("utterance '" + utt_id + "' has no label file");
  }
  std::vector<int> labels = ReadLabelFile(*it->second.label_path);
  if (labels.size() != it->second.features.num_frames) {
    throw DataError("utterance '" + utt_id + "': " +
                    std::to_string(labels.size()) + " labels for " +
                    std::to_string(it->second.features.num_frames) +
                    " frames");
  }
  return labels;
}

std::vector<std::string> CorpusIndex::AllUtterances() const {
  std::vector<std::string> out;
  out.reserve(by_utt_.size());
  for (const auto &[utt, entry] : by_utt_) out.push_back(utt);
  return out;
}

std::vector<std::pair<std::string, std::vector<std::string>>>
CorpusIndex::SpeakerUtterancePairs() const {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  out.reserve(by_speaker_.size());
  for (const auto &[spk, utts] : by_speaker_) out.emplace_back(spk, utts);
  return out;
}

}  // namespace e2esv
