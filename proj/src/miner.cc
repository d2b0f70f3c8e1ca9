// src/miner.cc

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

#include "e2esv/miner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "e2esv/common.hpp"
#include "e2esv/tensor.hpp"

namespace e2esv {

namespace {

Supervector AverageSupervectors(const std::string &speaker_id,
                                const std::vector<Supervector> &vecs) {
  if (vecs.empty()) {
    throw DataError("no utterances to build a pool vector for speaker '" +
                    speaker_id + "'");
  }
  Supervector out;
  out.kind = vecs[0].kind;
  out.values.assign(vecs[0].values.size(), 0.0);
  for (const Supervector &v : vecs) {
    if (v.kind != out.kind || v.values.size() != out.values.size()) {
      throw DataError("inconsistent supervectors for speaker '" + speaker_id +
                      "'");
    }
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      out.values[i] += v.values[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(vecs.size());
  for (double &x : out.values) x *= inv;
  return out;
}

std::map<std::string, Supervector> ExtractPoolVectors(
    const SupervectorExtractor &extract, const SpeakerUtterances &speakers,
    std::size_t n_sample, Rng *rng) {
  if (n_sample == 0) throw UsageError("pool sample size must be positive");
  std::map<std::string, Supervector> out;
  for (const auto &[speaker_id, utts] : speakers) {
    if (out.count(speaker_id) != 0) {
      throw DataError("duplicate speaker '" + speaker_id +
                      "' in pool speaker list");
    }
    std::vector<Supervector> vecs;
    for (std::size_t i : SampleWithoutReplacement(utts.size(), n_sample, rng)) {
      vecs.push_back(extract(utts[i]));
    }
    out.emplace(speaker_id, AverageSupervectors(speaker_id, vecs));
  }
  return out;
}

double PoolCosine(const std::string &a_id, const Supervector &a,
                  const std::string &b_id, const Supervector &b) {
  if (a.values.size() != b.values.size()) {
    throw DataError("pool vectors for '" + a_id + "' and '" + b_id +
                    "' have different dimensions");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw NumericError("zero-norm pool vector for speaker '" +
                       (na == 0.0 ? a_id : b_id) + "'");
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace

SpeakerVectorPool InitializeSpeakerPool(const SupervectorExtractor &extract,
                                        const SpeakerUtterances &speakers,
                                        std::size_t n_sample, Rng *rng) {
  SpeakerVectorPool pool;
  pool.vectors = ExtractPoolVectors(extract, speakers, n_sample, rng);
  pool.generation = 0;
  E2E_INFO << "speaker pool initialized: " << pool.vectors.size()
           << " speakers, generation 0";
  return pool;
}

void RefreshSpeakerPool(SpeakerVectorPool *pool,
                        const SupervectorExtractor &extract,
                        const SpeakerUtterances &speakers,
                        std::size_t n_sample, Rng *rng) {
  pool->vectors = ExtractPoolVectors(extract, speakers, n_sample, rng);
  ++pool->generation;
  E2E_INFO << "speaker pool refreshed: generation " << pool->generation;
}

ImpostorTable BuildImpostorTable(const SpeakerVectorPool &pool, int k) {
  if (k <= 0) throw UsageError("impostor count k must be positive");
  if (pool.vectors.size() < 2) {
    throw DataError("impostor table needs at least 2 pool speakers, got " +
                    std::to_string(pool.vectors.size()));
  }
  ImpostorTable table;
  table.k = k;
  for (const auto &[query_id, query_vec] : pool.vectors) {
    std::vector<ImpostorEntry> entries;
    entries.reserve(pool.vectors.size() - 1);
    for (const auto &[other_id, other_vec] : pool.vectors) {
      if (other_id == query_id) continue;
      entries.push_back(
          {other_id, PoolCosine(query_id, query_vec, other_id, other_vec)});
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const ImpostorEntry &a, const ImpostorEntry &b) {
                       if (a.similarity != b.similarity)
                         return a.similarity > b.similarity;
                       return a.speaker_id < b.speaker_id;
                     });
    if (entries.size() > static_cast<std::size_t>(k)) {
      entries.resize(static_cast<std::size_t>(k));
    }
    table.nearest.emplace(query_id, std::move(entries));
  }
  return table;
}

std::vector<std::string> SampleImpostorUtterances(
    const ImpostorTable &table, const std::string &target_speaker,
    const SpeakerUtterances &speakers, std::size_t t2, Rng *rng,
    bool *with_replacement) {
  auto it = table.nearest.find(target_speaker);
  if (it == table.nearest.end()) {
    throw DataError("speaker '" + target_speaker +
                    "' has no impostor table entry");
  }
  // Union of the impostors' utterances, in table order then list order.
  std::vector<std::string> candidates;
  for (const ImpostorEntry &entry : it->second) {
    auto sp = std::find_if(speakers.begin(), speakers.end(),
                           [&](const auto &p) {
                             return p.first == entry.speaker_id;
                           });
    if (sp == speakers.end()) {
      throw DataError("impostor speaker '" + entry.speaker_id +
                      "' missing from the utterance lists");
    }
    candidates.insert(candidates.end(), sp->second.begin(), sp->second.end());
  }
  if (candidates.empty()) {
    throw DataError("no impostor utterances available for speaker '" +
                    target_speaker + "'");
  }
  std::vector<std::string> out;
  out.reserve(t2);
  if (candidates.size() >= t2) {
    if (with_replacement != nullptr) *with_replacement = false;
    for (std::size_t i : SampleWithoutReplacement(candidates.size(), t2, rng)) {
      out.push_back(candidates[i]);
    }
  } else {
    if (with_replacement != nullptr) *with_replacement = true;
    E2E_WARN << "only " << candidates.size() << " impostor utterances for '"
             << target_speaker << "', sampling " << t2
             << " with replacement";
    for (std::size_t i = 0; i < t2; ++i) {
      std::size_t j = static_cast<std::size_t>(rng->UniformInt(
          0, static_cast<int64_t>(candidates.size()) - 1));
      out.push_back(candidates[j]);
    }
  }
  return out;
}

static const char kPoolMagic[4] = {'E', '2', 'E', 'V'};

void WritePoolDump(const std::filesystem::path &path,
                   const SpeakerVectorPool &pool) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  io::WriteMagic(os, kPoolMagic);
  io::WriteU32(os, 1);  // version
  io::WriteU64(os, static_cast<uint64_t>(pool.generation));
  io::WriteU32(os, static_cast<uint32_t>(pool.vectors.size()));
  for (const auto &[speaker_id, vec] : pool.vectors) {
    io::WriteString(os, speaker_id);
    io::WriteU32(os, static_cast<uint32_t>(vec.values.size()));
    io::WriteF64Array(os, vec.values.data(), vec.values.size());
  }
  if (!os) throw DataError("failed writing pool dump '" + path.string() + "'");
}

SpeakerVectorPool ReadPoolDump(const std::filesystem::path &path,
                               PoolingKind kind) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open pool dump '" + path.string() + "'");
  io::ExpectMagic(is, kPoolMagic, "pool dump");
  const uint32_t version = io::ReadU32(is, "pool dump version");
  if (version != 1) {
    throw DataError("unsupported pool dump version " +
                    std::to_string(version));
  }
  SpeakerVectorPool pool;
  pool.generation = static_cast<int64_t>(io::ReadU64(is, "pool generation"));
  const uint32_t count = io::ReadU32(is, "pool speaker count");
  for (uint32_t i = 0; i < count; ++i) {
    Supervector vec;
    vec.kind = kind;
    std::string speaker_id = io::ReadString(is, "pool speaker id");
    const uint32_t dim = io::ReadU32(is, "pool vector dimension");
    vec.values.resize(dim);
    io::ReadF64Array(is, vec.values.data(), dim, "pool vector");
    pool.vectors.emplace(std::move(speaker_id), std::move(vec));
  }
  return pool;
}

}  // namespace e2esv
