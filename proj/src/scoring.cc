// src/scoring.cc

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

#include "e2esv/scoring.hpp"

#include <cmath>
#include <fstream>

#include "e2esv/tensor.hpp"

namespace e2esv {

SpeakerModel EnrollSpeaker(const std::string &speaker_id,
                           const std::vector<Supervector> &utterances) {
  if (utterances.empty())
    throw DataError("enrollment for '" + speaker_id +
                    "' has no supervectors");
  const PoolingKind kind = utterances[0].kind;
  const std::size_t dim = utterances[0].values.size();
  for (const Supervector &sv : utterances)
    if (sv.kind != kind || sv.values.size() != dim)
      throw DataError("enrollment for '" + speaker_id +
                      "' mixes supervector kinds or dimensions");
  SpeakerModel model;
  model.speaker_id = speaker_id;
  model.enrollment_count = utterances.size();
  model.mean.kind = kind;
  model.mean.values.assign(dim, 0.0);
  for (const Supervector &sv : utterances)
    for (std::size_t i = 0; i < dim; ++i) model.mean.values[i] += sv.values[i];
  const double inv = 1.0 / static_cast<double>(utterances.size());
  double norm2 = 0.0;
  for (double &v : model.mean.values) {
    v *= inv;
    norm2 += v * v;
  }
  if (norm2 == 0.0)
    throw DataError("enrollment for '" + speaker_id +
                    "' averages to a zero supervector");
  return model;
}

double CosineScore(const Supervector &test, const SpeakerModel &model) {
  if (test.kind != model.mean.kind ||
      test.values.size() != model.mean.values.size())
    throw DataError("supervector kind/dimension mismatch scoring against '" +
                    model.speaker_id + "'");
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (std::size_t i = 0; i < test.values.size(); ++i) {
    dot += test.values[i] * model.mean.values[i];
    na2 += test.values[i] * test.values[i];
    nb2 += model.mean.values[i] * model.mean.values[i];
  }
  if (na2 == 0.0 || nb2 == 0.0)
    throw NumericError("cosine of a degenerate (zero norm) supervector");
  const double raw = dot / (std::sqrt(na2) * std::sqrt(nb2));
  return std::min(1.0, std::max(-1.0, raw));
}

double AcceptProbability(const LogisticHead &head, double score) {
  const double z = head.w * score + head.b;
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                  : std::exp(z) / (1.0 + std::exp(z));
}

bool Accept(const LogisticHead &head, double score, double threshold) {
  return AcceptProbability(head, score) >= threshold;
}

namespace {
uint32_t PoolingKindTag(PoolingKind kind) {
  switch (kind) {
    case PoolingKind::kMean: return 0;
    case PoolingKind::kPosterior: return 1;
    case PoolingKind::kAttention: return 2;
  }
  return 0;
}

PoolingKind PoolingKindFromTag(uint32_t tag, const char *what) {
  switch (tag) {
    case 0: return PoolingKind::kMean;
    case 1: return PoolingKind::kPosterior;
    case 2: return PoolingKind::kAttention;
  }
  throw DataError(std::string("bad pooling kind tag in ") + what);
}
}  // namespace

void WriteEnrollmentStore(const std::filesystem::path &path,
                          const EnrollmentStore &store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write enrollment store " + path.string());
  io::WriteMagic(os, "E2ES");
  io::WriteU32(os, 1);  // version
  io::WriteU32(os, PoolingKindTag(store.kind));
  io::WriteU32(os, static_cast<uint32_t>(store.speakers.size()));
  for (const auto &kv : store.speakers) {
    const SpeakerModel &m = kv.second;
    io::WriteString(os, m.speaker_id);
    io::WriteU32(os, static_cast<uint32_t>(m.enrollment_count));
    io::WriteU32(os, static_cast<uint32_t>(m.mean.values.size()));
    io::WriteF64Array(os, m.mean.values.data(), m.mean.values.size());
  }
  if (!os) throw DataError("failed writing enrollment store " + path.string());
}

EnrollmentStore ReadEnrollmentStore(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open enrollment store " + path.string());
  io::ExpectMagic(is, "E2ES", "enrollment store");
  const uint32_t version = io::ReadU32(is, "enrollment store version");
  if (version != 1)
    throw DataError("unsupported enrollment store version " +
                    std::to_string(version));
  EnrollmentStore store;
  store.kind =
      PoolingKindFromTag(io::ReadU32(is, "pooling kind"), "enrollment store");
  const uint32_t count = io::ReadU32(is, "speaker count");
  if (count > (1u << 20))
    throw DataError("implausible speaker count in " + path.string());
  const std::size_t expect_dim = SupervectorDim(store.kind);
  for (uint32_t i = 0; i < count; ++i) {
    SpeakerModel m;
    m.speaker_id = io::ReadString(is, "speaker id");
    m.enrollment_count = io::ReadU32(is, "enrollment count");
    const uint32_t dim = io::ReadU32(is, "supervector dim");
    if (dim != expect_dim)
      throw DataError("enrollment store speaker '" + m.speaker_id +
                      "' has dim " + std::to_string(dim) + ", expected " +
                      std::to_string(expect_dim));
    m.mean.kind = store.kind;
    m.mean.values.resize(dim);
    io::ReadF64Array(is, m.mean.values.data(), dim, "supervector");
    if (store.speakers.count(m.speaker_id))
      throw DataError("duplicate speaker '" + m.speaker_id +
                      "' in enrollment store");
    store.speakers[m.speaker_id] = std::move(m);
  }
  return store;
}

}  // namespace e2esv
