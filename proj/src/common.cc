// src/common.cc

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

#include "e2esv/common.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <iostream>

namespace e2esv {

static LogLevel ParseLogLevel() {
  const char *env = std::getenv("E2E_LOG_LEVEL");
  if (env == nullptr) return LogLevel::kWarn;
  if (std::strcmp(env, "error") == 0) return LogLevel::kError;
  if (std::strcmp(env, "warn") == 0) return LogLevel::kWarn;
  if (std::strcmp(env, "info") == 0) return LogLevel::kInfo;
  if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
  return LogLevel::kWarn;
}

LogLevel CurrentLogLevel() {
  static const LogLevel level = ParseLogLevel();
  return level;
}

namespace internal {

static const char *LevelTag(LogLevel level) {
  switch (level) {
    case LogLevel::kError: return "ERROR";
    case LogLevel::kWarn: return "WARN";
    case LogLevel::kInfo: return "INFO";
    case LogLevel::kDebug: return "DEBUG";
  }
  return "?";
}

LogMessage::LogMessage(LogLevel level, const char *file, int line)
    : level_(level) {
  const char *base = std::strrchr(file, '/');
  stream_ << "E2E " << LevelTag(level) << " (" << (base ? base + 1 : file)
          << ":" << line << ") ";
}

LogMessage::~LogMessage() {
  stream_ << "\n";
  std::cerr << stream_.str();
  if (level_ == LogLevel::kError) std::cerr.flush();
}

}  // namespace internal

double Rng::Normal() {
  // Box-Muller.  u1 is nudged away from zero so the log is finite.
  double u1 = Uniform();
  double u2 = Uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

int64_t Rng::UniformInt(int64_t lo, int64_t hi) {
  if (hi < lo) throw NumericError("UniformInt: empty range");
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<int64_t>(gen_());  // full 64-bit range
  uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return lo + static_cast<int64_t>(x % span);
}

// splitmix64 finalizer; also used to expand user seeds before feeding the
// mt19937_64 engine so that small consecutive seeds give unrelated states.
uint64_t Rng::Mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t Rng::Derive(uint64_t seed, uint64_t stream) {
  return Mix(Mix(seed) ^ Mix(stream * 0x2545f4914f6cdd1dULL + 1));
}

std::vector<std::size_t> SampleWithoutReplacement(std::size_t pool,
                                                  std::size_t n, Rng *rng) {
  std::vector<std::size_t> idx(pool);
  for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
  if (n >= pool) return idx;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng->UniformInt(
                            0, static_cast<int64_t>(pool - i) - 1));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

}  // namespace e2esv
