// include/e2esv/corpus.hpp

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

#ifndef E2ESV_CORPUS_HPP_
#define E2ESV_CORPUS_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "e2esv/features.hpp"

namespace e2esv {

// Synthetic fixed-keyword corpus.  Every utterance is the same 9-phone
// keyword: per-frame 38-dim feature vectors drawn around per-phone class
// means, shifted by a speaker offset (a per-phone-class projection of the
// speaker's latent vector, so identity lives in the speaker-by-phone
// interaction and survives mean normalization), with label-9 garbage
// frames (no speaker offset, heavier noise) interspersed.  Utterances are
// written as feature files plus per-frame phone label files; the generator
// also emits train / enroll / test manifests, a trial list over the
// evaluation split, and a metadata dump of the latent-space ground truth.
struct SynthSpec {
  uint64_t seed = 1;
  std::size_t num_train_speakers = 50;
  std::size_t utts_per_train_speaker = 15;
  std::size_t num_eval_speakers = 20;
  std::size_t enroll_utts_per_eval_speaker = 6;
  std::size_t test_utts_per_eval_speaker = 4;
  std::size_t min_frames = 65;
  std::size_t max_frames = 110;
  std::size_t latent_dim = 8;
  double class_sep = 3.0;       // scale of the phone class means
  double speaker_spread = 1.2;  // per-dim std of the speaker offset
  double noise_sigma = 0.45;    // per-dim noise on phone frames
  double garbage_prob = 0.3;    // chance a frame is garbage (label 9)
  double garbage_sigma = 2.0;   // per-dim noise on garbage frames

  static SynthSpec FromJsonFile(const std::filesystem::path &path);
  static SynthSpec FromJsonString(const std::string &text);
  std::string ToJsonString() const;
  void Validate() const;  // throws UsageError on nonsense values
};

// One manifest line: utterance id, speaker id, feature file and (optionally)
// a per-frame phone label file.  Paths in a manifest are relative to the
// manifest's own directory; records returned by ReadManifest carry resolved
// paths.
struct ManifestRecord {
  std::string utt_id;
  std::string speaker_id;
  std::filesystem::path feature_path;
  std::optional<std::filesystem::path> label_path;
};

std::vector<ManifestRecord> ReadManifest(const std::filesystem::path &path);
// Writes records as-is; callers pass paths already relative to the manifest
// directory.
void WriteManifest(const std::filesystem::path &path,
                   const std::vector<ManifestRecord> &records);

// Generates features/, labels/, the three manifests, trials.tsv and
// generator_meta.json under out_dir.  Deterministic in spec.seed.
void GenerateCorpus(const SynthSpec &spec,
                    const std::filesystem::path &out_dir);

// Per-frame phone labels, one integer per line.
std::vector<int> ReadLabelFile(const std::filesystem::path &path);
void WriteLabelFile(const std::filesystem::path &path,
                    const std::vector<int> &labels);

// A fully loaded corpus split: manifests are read, every feature file is
// loaded up front, and the speaker -> utterances map is built.  Duplicate
// utterance ids (within or across the given manifests) are an error;
// speakers with fewer than min_utts_per_speaker utterances are dropped with
// a warning.
class CorpusIndex {
 public:
  static CorpusIndex Load(const std::vector<std::filesystem::path> &manifests,
                          std::size_t min_utts_per_speaker = 0);

  // Sorted speaker ids.
  const std::vector<std::string> &Speakers() const { return speakers_; }
  // Utterance ids of one speaker, in manifest order.
  const std::vector<std::string> &Utterances(const std::string &spk) const;
  bool HasUtterance(const std::string &utt_id) const;
  const FrameSequence &Features(const std::string &utt_id) const;
  const std::string &SpeakerOf(const std::string &utt_id) const;
  bool HasLabels(const std::string &utt_id) const;
  std::vector<int> Labels(const std::string &utt_id) const;
  std::size_t NumUtterances() const { return by_utt_.size(); }
  std::vector<std::string> AllUtterances() const;  // sorted

  // (speaker, utterances) pairs in sorted speaker order, for the miner.
  std::vector<std::pair<std::string, std::vector<std::string>>>
  SpeakerUtterancePairs() const;

 private:
  struct UttEntry {
    std::string speaker_id;
    FrameSequence features;
    std::optional<std::filesystem::path> label_path;
  };
  std::map<std::string, UttEntry> by_utt_;
  std::map<std::string, std::vector<std::string>> by_speaker_;
  std::vector<std::string> speakers_;
};

}  // namespace e2esv

#endif  // E2ESV_CORPUS_HPP_
