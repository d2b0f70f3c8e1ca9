// tests/test_miner.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "e2esv/common.hpp"
#include "e2esv/miner.hpp"

using namespace e2esv;

namespace {

Supervector MakeSv(std::vector<double> v) {
  Supervector sv;
  sv.kind = PoolingKind::kPosterior;
  sv.values = std::move(v);
  return sv;
}

Supervector RandomSv(std::size_t dim, Rng *rng) {
  std::vector<double> v(dim);
  for (double &x : v) x = rng->Normal();
  return MakeSv(std::move(v));
}

double NaiveCosine(const std::vector<double> &a, const std::vector<double> &b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// Exhaustive reference: every other speaker, sorted by descending
// similarity with ties broken by ascending id, truncated to k.
std::map<std::string, std::vector<ImpostorEntry>> NaiveTable(
    const SpeakerVectorPool &pool, int k) {
  std::map<std::string, std::vector<ImpostorEntry>> out;
  for (const auto &[id, vec] : pool.vectors) {
    std::vector<ImpostorEntry> entries;
    for (const auto &[oid, ovec] : pool.vectors) {
      if (oid == id) continue;
      entries.push_back({oid, NaiveCosine(vec.values, ovec.values)});
    }
    std::sort(entries.begin(), entries.end(),
              [](const ImpostorEntry &a, const ImpostorEntry &b) {
                if (a.similarity != b.similarity)
                  return a.similarity > b.similarity;
                return a.speaker_id < b.speaker_id;
              });
    if (entries.size() > static_cast<std::size_t>(k))
      entries.resize(static_cast<std::size_t>(k));
    out[id] = std::move(entries);
  }
  return out;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("e2esv_miner_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("impostor table equals the exhaustive scan") {
  Rng rng(71);
  for (int c = 0; c < 100; ++c) {
    const std::size_t n = static_cast<std::size_t>(rng.UniformInt(2, 20));
    const int k = static_cast<int>(rng.UniformInt(1, 25));
    SpeakerVectorPool pool;
    for (std::size_t i = 0; i < n; ++i)
      pool.vectors["spk" + std::to_string(100 + i)] = RandomSv(16, &rng);

    ImpostorTable table = BuildImpostorTable(pool, k);
    CHECK(table.k == k);
    auto want = NaiveTable(pool, k);
    REQUIRE(table.nearest.size() == want.size());
    for (const auto &[id, entries] : want) {
      REQUIRE(table.nearest.count(id) == 1);
      const auto &got = table.nearest.at(id);
      REQUIRE(got.size() == entries.size());
      for (std::size_t i = 0; i < entries.size(); ++i) {
        CHECK(got[i].speaker_id == entries[i].speaker_id);
        CHECK(got[i].similarity == entries[i].similarity);  // bitwise
      }
    }
  }
}

TEST_CASE("equal similarities are ordered by speaker id") {
  SpeakerVectorPool pool;
  // b, c, d share a vector, so they tie when queried from a.
  pool.vectors["a"] = MakeSv({1.0, 0.0});
  pool.vectors["d"] = MakeSv({1.0, 1.0});
  pool.vectors["c"] = MakeSv({1.0, 1.0});
  pool.vectors["b"] = MakeSv({1.0, 1.0});
  ImpostorTable table = BuildImpostorTable(pool, 3);
  const auto &got = table.nearest.at("a");
  REQUIRE(got.size() == 3);
  CHECK(got[0].speaker_id == "b");
  CHECK(got[1].speaker_id == "c");
  CHECK(got[2].speaker_id == "d");
  CHECK(got[0].similarity == got[2].similarity);
}

TEST_CASE("impostor table rejects degenerate input") {
  Rng rng(72);
  SpeakerVectorPool pool;
  pool.vectors["a"] = RandomSv(4, &rng);
  CHECK_THROWS_AS((void)BuildImpostorTable(pool, 3), DataError);
  pool.vectors["b"] = RandomSv(4, &rng);
  CHECK_THROWS_AS((void)BuildImpostorTable(pool, 0), UsageError);
  CHECK_THROWS_AS((void)BuildImpostorTable(pool, -2), UsageError);

  // k >= pool size - 1 lists every other speaker.
  pool.vectors["c"] = RandomSv(4, &rng);
  ImpostorTable all = BuildImpostorTable(pool, 99);
  for (const auto &[id, entries] : all.nearest) CHECK(entries.size() == 2);

  SpeakerVectorPool zero;
  zero.vectors["a"] = MakeSv({0.0, 0.0});
  zero.vectors["b"] = MakeSv({1.0, 0.0});
  CHECK_THROWS_AS((void)BuildImpostorTable(zero, 1), NumericError);
}

TEST_CASE("pool initialization samples per speaker and averages") {
  // The extractor hands back one-hot-ish vectors keyed by utterance, and a
  // log records exactly which utterances were pulled.
  std::map<std::string, int> utt_index;
  SpeakerUtterances speakers;
  for (int s = 0; s < 5; ++s) {
    std::vector<std::string> utts;
    for (int u = 0; u < 6; ++u) {
      std::string id = "s" + std::to_string(s) + "_u" + std::to_string(u);
      utt_index[id] = s * 6 + u;
      utts.push_back(id);
    }
    speakers.push_back({"s" + std::to_string(s), utts});
  }
  std::vector<std::vector<std::string>> calls;
  auto extract = [&](const std::string &utt_id) {
    if (calls.empty() || utt_id.substr(0, 2) != calls.back()[0].substr(0, 2))
      calls.push_back({});
    calls.back().push_back(utt_id);
    std::vector<double> v(31, 0.0);
    v[static_cast<std::size_t>(utt_index.at(utt_id))] = 1.0;
    v[30] = 0.5;
    return MakeSv(std::move(v));
  };

  Rng rng(73);
  SpeakerVectorPool pool = InitializeSpeakerPool(extract, speakers, 3, &rng);
  CHECK(pool.generation == 0);
  REQUIRE(pool.vectors.size() == 5);
  REQUIRE(calls.size() == 5);
  for (std::size_t s = 0; s < 5; ++s) {
    // Exactly 3 distinct utterances of this speaker were extracted...
    REQUIRE(calls[s].size() == 3);
    std::set<std::string> distinct(calls[s].begin(), calls[s].end());
    CHECK(distinct.size() == 3);
    // ...and the pool vector is their average.
    const auto &vec = pool.vectors.at("s" + std::to_string(s)).values;
    REQUIRE(vec.size() == 31);
    for (const std::string &u : calls[s])
      CHECK(vec[static_cast<std::size_t>(utt_index.at(u))] ==
            doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(vec[30] == doctest::Approx(0.5).epsilon(1e-15));
  }

  // Sampling more than a speaker has uses every utterance once.
  calls.clear();
  Rng rng2(74);
  SpeakerVectorPool full = InitializeSpeakerPool(extract, speakers, 10, &rng2);
  for (std::size_t s = 0; s < 5; ++s) {
    REQUIRE(calls[s].size() == 6);
    std::set<std::string> distinct(calls[s].begin(), calls[s].end());
    CHECK(distinct.size() == 6);
  }
  (void)full;

  // Same seed, same sample; the initialization is deterministic.
  calls.clear();
  Rng rng3(73);
  SpeakerVectorPool again = InitializeSpeakerPool(extract, speakers, 3, &rng3);
  for (const auto &[id, vec] : pool.vectors)
    CHECK(again.vectors.at(id).values == vec.values);

  Rng rng4(75);
  CHECK_THROWS_AS(
      (void)InitializeSpeakerPool(extract, speakers, 0, &rng4), UsageError);
  SpeakerUtterances empty_utts = {{"s9", {}}};
  CHECK_THROWS_AS(
      (void)InitializeSpeakerPool(extract, empty_utts, 3, &rng4), DataError);
}

TEST_CASE("refresh re-extracts and bumps the generation") {
  SpeakerUtterances speakers = {{"a", {"a0", "a1"}}, {"b", {"b0", "b1"}}};
  double phase = 1.0;
  auto extract = [&phase](const std::string &utt_id) {
    std::vector<double> v(4, phase);
    v[0] += (utt_id[0] == 'a') ? 1.0 : 2.0;
    return MakeSv(std::move(v));
  };
  Rng rng(76);
  SpeakerVectorPool pool = InitializeSpeakerPool(extract, speakers, 2, &rng);
  CHECK(pool.generation == 0);
  CHECK(pool.vectors.at("a").values[1] == 1.0);

  phase = 2.0;
  RefreshSpeakerPool(&pool, extract, speakers, 2, &rng);
  CHECK(pool.generation == 1);
  CHECK(pool.vectors.at("a").values[1] == 2.0);
  CHECK(pool.vectors.at("b").values[0] == 4.0);

  RefreshSpeakerPool(&pool, extract, speakers, 2, &rng);
  CHECK(pool.generation == 2);
}

TEST_CASE("impostor utterance sampling draws from the union") {
  ImpostorTable table;
  table.k = 2;
  table.nearest["a"] = {{"b", 0.9}, {"c", 0.8}};
  SpeakerUtterances speakers = {
      {"a", {"a0", "a1"}}, {"b", {"b0", "b1"}}, {"c", {"c0"}}};
  const std::set<std::string> union_utts = {"b0", "b1", "c0"};

  Rng rng(77);
  bool with_replacement = true;
  std::vector<std::string> got =
      SampleImpostorUtterances(table, "a", speakers, 3, &rng,
                               &with_replacement);
  CHECK_FALSE(with_replacement);
  CHECK(std::set<std::string>(got.begin(), got.end()) == union_utts);

  got = SampleImpostorUtterances(table, "a", speakers, 2, &rng,
                                 &with_replacement);
  CHECK_FALSE(with_replacement);
  CHECK(got.size() == 2);
  CHECK(got[0] != got[1]);
  for (const std::string &u : got) CHECK(union_utts.count(u) == 1);

  got = SampleImpostorUtterances(table, "a", speakers, 8, &rng,
                                 &with_replacement);
  CHECK(with_replacement);
  CHECK(got.size() == 8);
  for (const std::string &u : got) CHECK(union_utts.count(u) == 1);

  // Deterministic in the rng state.
  Rng r1(42), r2(42);
  CHECK(SampleImpostorUtterances(table, "a", speakers, 3, &r1) ==
        SampleImpostorUtterances(table, "a", speakers, 3, &r2));

  CHECK_THROWS_AS(
      (void)SampleImpostorUtterances(table, "zz", speakers, 2, &rng),
      DataError);
  SpeakerUtterances missing = {{"a", {"a0"}}, {"b", {"b0"}}};
  CHECK_THROWS_AS(
      (void)SampleImpostorUtterances(table, "a", missing, 2, &rng), DataError);
}

TEST_CASE("pool dump roundtrips bit-exactly") {
  Rng rng(78);
  TempDir tmp;
  SpeakerVectorPool pool;
  pool.generation = 5;
  for (int i = 0; i < 6; ++i)
    pool.vectors["spk" + std::to_string(i)] = RandomSv(640, &rng);

  const auto path = tmp.path / "pool.e2ev";
  WritePoolDump(path, pool);
  SpeakerVectorPool back = ReadPoolDump(path, PoolingKind::kPosterior);
  CHECK(back.generation == 5);
  REQUIRE(back.vectors.size() == pool.vectors.size());
  for (const auto &[id, vec] : pool.vectors) {
    REQUIRE(back.vectors.count(id) == 1);
    CHECK(back.vectors.at(id).kind == PoolingKind::kPosterior);
    CHECK(back.vectors.at(id).values == vec.values);
  }
  CHECK_THROWS_AS((void)ReadPoolDump(tmp.path / "nope.e2ev",
                                     PoolingKind::kPosterior),
                  DataError);
}
