// src/features.cc

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

#include "e2esv/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "e2esv/tensor.hpp"

namespace e2esv {

namespace frontend_detail {

double MelScale(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

namespace {
constexpr double kPi = 3.14159265358979323846;

// Iterative radix-2 FFT over kFftSize points.  Twiddles and the bit-reversal
// permutation are built once.
struct Fft {
  std::size_t n;
  std::vector<std::size_t> rev;
  std::vector<double> cs, sn;

  explicit Fft(std::size_t size) : n(size), rev(size), cs(size / 2), sn(size / 2) {
    std::size_t log2n = 0;
    while ((std::size_t(1) << log2n) < n) ++log2n;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < log2n; ++b)
        if (i & (std::size_t(1) << b)) r |= std::size_t(1) << (log2n - 1 - b);
      rev[i] = r;
    }
    for (std::size_t i = 0; i < n / 2; ++i) {
      cs[i] = std::cos(-2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
      sn[i] = std::sin(-2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
    }
  }

  void Forward(double *re, double *im) const {
    for (std::size_t i = 0; i < n; ++i) {
      if (rev[i] > i) {
        std::swap(re[i], re[rev[i]]);
        std::swap(im[i], im[rev[i]]);
      }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t stride = n / len;
      for (std::size_t start = 0; start < n; start += len) {
        for (std::size_t k = 0; k < len / 2; ++k) {
          const double wr = cs[k * stride], wi = sn[k * stride];
          const std::size_t a = start + k, b = start + k + len / 2;
          const double tr = re[b] * wr - im[b] * wi;
          const double ti = re[b] * wi + im[b] * wr;
          re[b] = re[a] - tr;
          im[b] = im[a] - ti;
          re[a] += tr;
          im[a] += ti;
        }
      }
    }
  }
};

const Fft &SharedFft() {
  static const Fft fft(Frontend::kFftSize);
  return fft;
}

std::vector<double> HammingWindow() {
  std::vector<double> w(Frontend::kFrameLength);
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                  static_cast<double>(w.size() - 1));
  return w;
}
}  // namespace

std::vector<double> PowerSpectrum(const double *frame) {
  const std::size_t nfft = Frontend::kFftSize;
  std::vector<double> re(nfft, 0.0), im(nfft, 0.0);
  std::copy(frame, frame + Frontend::kFrameLength, re.begin());
  SharedFft().Forward(re.data(), im.data());
  std::vector<double> power(nfft / 2 + 1);
  for (std::size_t b = 0; b <= nfft / 2; ++b)
    power[b] = re[b] * re[b] + im[b] * im[b];
  return power;
}

std::vector<double> MelFilterbank() {
  const std::size_t bins = Frontend::kFftSize / 2 + 1;
  const std::size_t nfilt = Frontend::kNumMelBins;
  const double nyquist = Frontend::kSampleRate / 2.0;
  const double mel_hi = MelScale(nyquist);
  // nfilt triangles need nfilt + 2 equally spaced mel points from 0 Hz to
  // the Nyquist frequency.
  std::vector<double> hz(nfilt + 2);
  for (std::size_t i = 0; i < hz.size(); ++i) {
    const double mel = mel_hi * static_cast<double>(i) /
                       static_cast<double>(nfilt + 1);
    hz[i] = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
  }
  std::vector<double> weights(nfilt * bins, 0.0);
  for (std::size_t j = 0; j < nfilt; ++j) {
    const double lo = hz[j], c = hz[j + 1], hi = hz[j + 2];
    for (std::size_t b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * Frontend::kSampleRate /
                       static_cast<double>(Frontend::kFftSize);
      double w = 0.0;
      if (f > lo && f < hi)
        w = f <= c ? (f - lo) / (c - lo) : (hi - f) / (hi - c);
      weights[j * bins + b] = w;
    }
  }
  return weights;
}

std::vector<double> DctMatrix() {
  const std::size_t k = Frontend::kNumCeps, m = Frontend::kNumMelBins;
  std::vector<double> d(k * m);
  for (std::size_t r = 0; r < k; ++r) {
    const double s = r == 0 ? std::sqrt(1.0 / static_cast<double>(m))
                            : std::sqrt(2.0 / static_cast<double>(m));
    for (std::size_t c = 0; c < m; ++c)
      d[r * m + c] = s * std::cos(kPi * static_cast<double>(r) *
                                  (2.0 * static_cast<double>(c) + 1.0) /
                                  (2.0 * static_cast<double>(m)));
  }
  return d;
}

FrameSequence Deltas(const FrameSequence &feats) {
  FrameSequence out = feats;
  const long t_max = static_cast<long>(feats.num_frames) - 1;
  auto clamp = [t_max](long t) {
    return static_cast<std::size_t>(std::max(0L, std::min(t_max, t)));
  };
  for (std::size_t t = 0; t < feats.num_frames; ++t) {
    const long lt = static_cast<long>(t);
    const double *p1 = feats.Row(clamp(lt + 1)), *m1 = feats.Row(clamp(lt - 1));
    const double *p2 = feats.Row(clamp(lt + 2)), *m2 = feats.Row(clamp(lt - 2));
    double *dst = out.Row(t);
    for (std::size_t i = 0; i < feats.dim; ++i)
      dst[i] = (1.0 * (p1[i] - m1[i]) + 2.0 * (p2[i] - m2[i])) / 10.0;
  }
  return out;
}

}  // namespace frontend_detail

FrameSequence ComputeMfcc(const std::vector<double> &waveform,
                          double sample_rate) {
  if (sample_rate != Frontend::kSampleRate)
    throw DataError("unsupported sample rate " + std::to_string(sample_rate) +
                    " (needs 16000)");
  if (waveform.size() < Frontend::kFrameLength)
    throw DataError("utterance too short: " + std::to_string(waveform.size()) +
                    " samples (one frame needs " +
                    std::to_string(Frontend::kFrameLength) + ")");

  // Whole-signal pre-emphasis.
  std::vector<double> pre(waveform.size());
  pre[0] = waveform[0] * (1.0 - Frontend::kPreemphasis);
  for (std::size_t i = 1; i < waveform.size(); ++i)
    pre[i] = waveform[i] - Frontend::kPreemphasis * waveform[i - 1];

  static const std::vector<double> hamming = frontend_detail::HammingWindow();
  static const std::vector<double> melbank = frontend_detail::MelFilterbank();
  static const std::vector<double> dct = frontend_detail::DctMatrix();
  const std::size_t bins = Frontend::kFftSize / 2 + 1;

  const std::size_t t_total =
      1 + (waveform.size() - Frontend::kFrameLength) / Frontend::kFrameShift;
  FrameSequence out;
  out.num_frames = t_total;
  out.dim = Frontend::kNumCeps;
  out.data.resize(t_total * out.dim);

  std::vector<double> frame(Frontend::kFrameLength);
  std::vector<double> logmel(Frontend::kNumMelBins);
  for (std::size_t t = 0; t < t_total; ++t) {
    const double *src = pre.data() + t * Frontend::kFrameShift;
    for (std::size_t i = 0; i < frame.size(); ++i)
      frame[i] = src[i] * hamming[i];
    const std::vector<double> power =
        frontend_detail::PowerSpectrum(frame.data());
    for (std::size_t j = 0; j < Frontend::kNumMelBins; ++j) {
      double e = 0.0;
      const double *w = melbank.data() + j * bins;
      for (std::size_t b = 0; b < bins; ++b) e += w[b] * power[b];
      logmel[j] = std::log(std::max(e, Frontend::kLogFloor));
    }
    double *dst = out.Row(t);
    for (std::size_t r = 0; r < Frontend::kNumCeps; ++r) {
      double c = 0.0;
      const double *drow = dct.data() + r * Frontend::kNumMelBins;
      for (std::size_t j = 0; j < Frontend::kNumMelBins; ++j)
        c += drow[j] * logmel[j];
      dst[r] = c;
    }
  }
  return out;
}

FrameSequence AppendDeltas(const FrameSequence &statics) {
  if (statics.dim != Frontend::kNumCeps)
    throw DataError("delta input has dim " + std::to_string(statics.dim) +
                    " (needs " + std::to_string(Frontend::kNumCeps) + ")");
  const FrameSequence d = frontend_detail::Deltas(statics);
  const FrameSequence dd = frontend_detail::Deltas(d);
  FrameSequence out;
  out.utterance_id = statics.utterance_id;
  out.num_frames = statics.num_frames;
  out.dim = Frontend::kFeatureDim;
  out.data.resize(out.num_frames * out.dim);
  for (std::size_t t = 0; t < out.num_frames; ++t) {
    double *dst = out.Row(t);
    // [C1..C12 | dC0..dC12 | ddC0..ddC12]
    for (std::size_t i = 1; i < 13; ++i) dst[i - 1] = statics.At(t, i);
    for (std::size_t i = 0; i < 13; ++i) dst[12 + i] = d.At(t, i);
    for (std::size_t i = 0; i < 13; ++i) dst[25 + i] = dd.At(t, i);
  }
  return out;
}

FrameSequence RollingCmn(const FrameSequence &feats) {
  if (feats.num_frames == 0) throw DataError("cmn over an empty sequence");
  FrameSequence out = feats;
  const long t_total = static_cast<long>(feats.num_frames);
  const long half = (static_cast<long>(Frontend::kCmnWindow) - 1) / 2;
  std::vector<double> mean(feats.dim);
  for (long t = 0; t < t_total; ++t) {
    const long lo = std::max(0L, t - half);
    const long hi = std::min(t_total - 1, t + half);  // inclusive
    std::fill(mean.begin(), mean.end(), 0.0);
    for (long u = lo; u <= hi; ++u) {
      const double *row = feats.Row(static_cast<std::size_t>(u));
      for (std::size_t i = 0; i < feats.dim; ++i) mean[i] += row[i];
    }
    const double inv = 1.0 / static_cast<double>(hi - lo + 1);
    double *dst = out.Row(static_cast<std::size_t>(t));
    for (std::size_t i = 0; i < feats.dim; ++i)
      dst[i] = feats.At(static_cast<std::size_t>(t), i) - mean[i] * inv;
  }
  return out;
}

ContextWindowBatch MakeContextWindows(const FrameSequence &feats38) {
  if (feats38.dim != Frontend::kFeatureDim)
    throw DataError("context windows need " +
                    std::to_string(Frontend::kFeatureDim) + "-dim rows, got " +
                    std::to_string(feats38.dim));
  if (feats38.num_frames == 0)
    throw DataError("context windows over an empty sequence");
  ContextWindowBatch out;
  out.num_frames = feats38.num_frames;
  out.data.resize(out.num_frames * ContextWindowBatch::kWindowSize);
  const long t_max = static_cast<long>(feats38.num_frames) - 1;
  // Channel column offsets into a 38-dim row; dC0 (12) and ddC0 (25) are
  // dropped so every channel carries C1..C12.
  constexpr std::size_t chan_off[3] = {0, 13, 26};
  for (std::size_t t = 0; t < out.num_frames; ++t) {
    double *win = out.data.data() + t * ContextWindowBatch::kWindowSize;
    for (std::size_t r = 0; r < ContextWindowBatch::kContext; ++r) {
      const long src = static_cast<long>(t) + static_cast<long>(r) -
                       static_cast<long>(ContextWindowBatch::kPast);
      const std::size_t u =
          static_cast<std::size_t>(std::max(0L, std::min(t_max, src)));
      const double *row = feats38.Row(u);
      for (std::size_t c = 0; c < ContextWindowBatch::kChannels; ++c)
        for (std::size_t j = 0; j < ContextWindowBatch::kFreq; ++j)
          win[(c * ContextWindowBatch::kContext + r) *
                  ContextWindowBatch::kFreq +
              j] = row[chan_off[c] + j];
    }
  }
  return out;
}

// --- audio ----------------------------------------------------------------

namespace {
uint32_t ReadLe32(std::istream &is, const char *what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char *>(b), 4);
  if (!is) throw DataError(std::string("truncated wav while reading ") + what);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}
uint16_t ReadLe16(std::istream &is, const char *what) {
  unsigned char b[2];
  is.read(reinterpret_cast<char *>(b), 2);
  if (!is) throw DataError(std::string("truncated wav while reading ") + what);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}
void WriteLe32(std::ostream &os, uint32_t v) {
  char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
               static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  os.write(b, 4);
}
void WriteLe16(std::ostream &os, uint16_t v) {
  char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
  os.write(b, 2);
}
}  // namespace

std::vector<double> ReadWavPcm16Mono(const std::filesystem::path &path,
                                     double *sample_rate) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open wav file " + path.string());
  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0)
    throw DataError("not a RIFF file: " + path.string());
  ReadLe32(is, "riff size");
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "WAVE", 4) != 0)
    throw DataError("not a WAVE file: " + path.string());

  uint16_t channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<double> samples;
  while (is.read(tag, 4)) {
    const uint32_t chunk = ReadLe32(is, "chunk size");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      const uint16_t format = ReadLe16(is, "format tag");
      channels = ReadLe16(is, "channels");
      rate = ReadLe32(is, "sample rate");
      ReadLe32(is, "byte rate");
      ReadLe16(is, "block align");
      bits = ReadLe16(is, "bits per sample");
      if (chunk > 16) is.seekg(chunk - 16, std::ios::cur);
      if (format != 1)
        throw DataError("wav is not integer PCM: " + path.string());
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError("wav data before fmt: " + path.string());
      if (channels != 1)
        throw DataError("wav must be mono, has " + std::to_string(channels) +
                        " channels: " + path.string());
      if (bits != 16)
        throw DataError("wav must be 16-bit PCM, has " + std::to_string(bits) +
                        " bits: " + path.string());
      const std::size_t count = chunk / 2;
      samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const uint16_t raw = ReadLe16(is, "sample");
        samples[i] = static_cast<double>(static_cast<int16_t>(raw)) / 32768.0;
      }
      if (chunk % 2) is.seekg(1, std::ios::cur);
    } else {
      is.seekg(chunk + (chunk % 2), std::ios::cur);  // chunks are word-aligned
    }
  }
  if (!have_fmt) throw DataError("wav has no fmt chunk: " + path.string());
  *sample_rate = static_cast<double>(rate);
  return samples;
}

void WriteWavPcm16Mono(const std::filesystem::path &path,
                       const std::vector<double> &samples,
                       double sample_rate) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write wav file " + path.string());
  const uint32_t rate = static_cast<uint32_t>(sample_rate);
  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  WriteLe32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  WriteLe32(os, 16);
  WriteLe16(os, 1);  // PCM
  WriteLe16(os, 1);  // mono
  WriteLe32(os, rate);
  WriteLe32(os, rate * 2);
  WriteLe16(os, 2);
  WriteLe16(os, 16);
  os.write("data", 4);
  WriteLe32(os, data_bytes);
  for (double s : samples) {
    // Same 1/32768 step as the reader, so a round trip only loses the
    // rounding to the nearest step.
    long v = std::lrint(std::max(-1.0, std::min(1.0, s)) * 32768.0);
    v = std::max(-32768L, std::min(32767L, v));
    WriteLe16(os, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  if (!os) throw DataError("failed writing wav file " + path.string());
}

// --- feature files --------------------------------------------------------

namespace {
constexpr uint32_t kFeatureFormatVersion = 1;
}

void WriteFeatureFile(const std::filesystem::path &path,
                      const FrameSequence &feats) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write feature file " + path.string());
  io::WriteMagic(os, "E2EF");
  io::WriteU32(os, kFeatureFormatVersion);
  io::WriteString(os, feats.utterance_id);
  io::WriteU32(os, static_cast<uint32_t>(feats.num_frames));
  io::WriteU32(os, static_cast<uint32_t>(feats.dim));
  io::WriteF64Array(os, feats.data.data(), feats.data.size());
  if (!os) throw DataError("failed writing feature file " + path.string());
}

FrameSequence ReadFeatureFile(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open feature file " + path.string());
  io::ExpectMagic(is, "E2EF", ("feature file " + path.string()).c_str());
  const uint32_t version = io::ReadU32(is, "feature version");
  if (version != kFeatureFormatVersion)
    throw DataError("unsupported feature format version " +
                    std::to_string(version) + " in " + path.string());
  FrameSequence out;
  out.utterance_id = io::ReadString(is, "utterance id");
  out.num_frames = io::ReadU32(is, "frame count");
  out.dim = io::ReadU32(is, "feature dim");
  if (out.num_frames > (1u << 24) || out.dim > (1u << 16))
    throw DataError("implausible feature matrix in " + path.string());
  out.data.resize(out.num_frames * out.dim);
  io::ReadF64Array(is, out.data.data(), out.data.size(),
                   ("payload of " + path.string()).c_str());
  return out;
}

}  // namespace e2esv
