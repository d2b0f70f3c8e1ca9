// include/e2esv/features.hpp

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

#ifndef E2ESV_FEATURES_HPP_
#define E2ESV_FEATURES_HPP_

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "e2esv/common.hpp"

namespace e2esv {

// Front end constants.  16 kHz input, 25 ms windows every 10 ms, 13 MFCCs,
// delta and delta-delta appended as [C1..C12 | dC0..dC12 | ddC0..ddC12]
// (38 dims: C0 is dropped from the statics, kept in the deltas).
struct Frontend {
  static constexpr double kSampleRate = 16000.0;
  static constexpr std::size_t kFrameLength = 400;  // 25 ms
  static constexpr std::size_t kFrameShift = 160;   // 10 ms
  static constexpr std::size_t kFftSize = 512;
  static constexpr std::size_t kNumMelBins = 13;
  static constexpr std::size_t kNumCeps = 13;
  static constexpr double kPreemphasis = 0.97;
  static constexpr double kLogFloor = 1e-10;
  static constexpr std::size_t kFeatureDim = 38;
  static constexpr std::size_t kCmnWindow = 41;  // centered, truncated
};

// Row-major [num_frames x dim] feature matrix with a 10 ms frame period.
struct FrameSequence {
  std::string utterance_id;
  std::size_t num_frames = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  double &At(std::size_t t, std::size_t i) { return data[t * dim + i]; }
  double At(std::size_t t, std::size_t i) const { return data[t * dim + i]; }
  const double *Row(std::size_t t) const { return data.data() + t * dim; }
  double *Row(std::size_t t) { return data.data() + t * dim; }
};

// Context windows feeding the speaker net: for each frame t, rows are frames
// t-25 .. t+5 (edge-replicated), split into 3 channels of 12 coefficients
// (statics, deltas, delta-deltas; the delta C0 columns are dropped).  Layout
// is [num_frames x 3 x 31 x 12] row-major.
struct ContextWindowBatch {
  static constexpr std::size_t kChannels = 3;
  static constexpr std::size_t kContext = 31;  // 25 past + self + 5 future
  static constexpr std::size_t kPast = 25;     // row index of the center frame
  static constexpr std::size_t kFreq = 12;
  static constexpr std::size_t kWindowSize = kChannels * kContext * kFreq;

  std::size_t num_frames = 0;
  std::vector<double> data;

  const double *Window(std::size_t t) const {
    return data.data() + t * kWindowSize;
  }
};

// 13 static MFCCs per frame.  Throws DataError for a sample rate other than
// 16 kHz or for signals shorter than one frame.
FrameSequence ComputeMfcc(const std::vector<double> &waveform,
                          double sample_rate);
// [T x 13] statics -> [T x 38] with deltas (edge-replicated differences).
FrameSequence AppendDeltas(const FrameSequence &statics);
// Rolling cepstral mean subtraction over a 41-frame centered window,
// truncated at the utterance edges.
FrameSequence RollingCmn(const FrameSequence &feats);
ContextWindowBatch MakeContextWindows(const FrameSequence &feats38);

namespace frontend_detail {
// Single delta pass: d[t] = (1*(c[t+1]-c[t-1]) + 2*(c[t+2]-c[t-2])) / 10
// with clamped (replicated) edge indices.
FrameSequence Deltas(const FrameSequence &feats);
// [kNumMelBins x (kFftSize/2+1)] triangular filter weights on HTK mel scale.
std::vector<double> MelFilterbank();
// Power spectrum of one pre-windowed frame (kFrameLength samples in,
// kFftSize/2+1 bins out).
std::vector<double> PowerSpectrum(const double *frame);
// Orthonormal DCT-II matrix [kNumCeps x kNumMelBins].
std::vector<double> DctMatrix();
double MelScale(double hz);
}  // namespace frontend_detail

// --- audio ----------------------------------------------------------------
// Mono 16-bit PCM WAV.  Returns samples scaled to [-1, 1); sets *sample_rate.
std::vector<double> ReadWavPcm16Mono(const std::filesystem::path &path,
                                     double *sample_rate);
void WriteWavPcm16Mono(const std::filesystem::path &path,
                       const std::vector<double> &samples, double sample_rate);

// --- feature files --------------------------------------------------------
// Binary feature matrix: magic "E2EF", version u32, utterance id
// (length-prefixed), rows u32, cols u32, row-major f64 payload.
void WriteFeatureFile(const std::filesystem::path &path,
                      const FrameSequence &feats);
FrameSequence ReadFeatureFile(const std::filesystem::path &path);

}  // namespace e2esv

#endif  // E2ESV_FEATURES_HPP_
