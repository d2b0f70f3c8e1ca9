// include/e2esv/common.hpp

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

#ifndef E2ESV_COMMON_HPP_
#define E2ESV_COMMON_HPP_

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace e2esv {

// Error taxonomy; the CLI maps each class to a distinct exit code.
// UsageError -> 1, DataError -> 2, NumericError -> 3.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string &msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string &msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string &msg) : std::runtime_error(msg) {}
};

// Shape mismatches are a data problem (malformed model/feature files mostly
// surface this way), so they share the DataError exit code.
struct ShapeError : DataError {
  explicit ShapeError(const std::string &msg) : DataError(msg) {}
};

enum class LogLevel : int { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Reads E2E_LOG_LEVEL from the environment once (error|warn|info|debug,
// default warn).
LogLevel CurrentLogLevel();

namespace internal {
class LogMessage {
 public:
  LogMessage(LogLevel level, const char *file, int line);
  ~LogMessage();
  std::ostream &Stream() { return stream_; }

 private:
  LogLevel level_;
  std::ostringstream stream_;
};
// Swallows a statement's stream expression when the level is filtered out.
struct LogVoidify {
  void operator&(std::ostream &) {}
};
}  // namespace internal

#define E2ESV_LOG(level)                                              \
  (::e2esv::CurrentLogLevel() < (level))                              \
      ? (void)0                                                       \
      : ::e2esv::internal::LogVoidify() &                             \
            ::e2esv::internal::LogMessage((level), __FILE__, __LINE__) \
                .Stream()

#define E2E_ERR E2ESV_LOG(::e2esv::LogLevel::kError)
#define E2E_WARN E2ESV_LOG(::e2esv::LogLevel::kWarn)
#define E2E_INFO E2ESV_LOG(::e2esv::LogLevel::kInfo)
#define E2E_DEBUG E2ESV_LOG(::e2esv::LogLevel::kDebug)

// Deterministic random source.  All randomness in the engine flows through
// this class so that a run is reproducible from a single u64 seed.  Substream
// seeds are derived with splitmix64 so that independent components (corpus
// speakers, sweep shuffles, pool refreshes, ...) never share a stream by
// accident.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(Mix(seed)) {}

  // Uniform double in [0, 1) with 53 random bits.
  double Uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform double in [lo, hi).
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Standard normal via Box-Muller.  Always consumes exactly two uniforms and
  // never caches the second deviate, so the draw count per call is fixed.
  double Normal();

  // Uniform integer in [lo, hi] inclusive, by rejection (unbiased).
  int64_t UniformInt(int64_t lo, int64_t hi);

  uint64_t Raw() { return gen_(); }

  // Fisher-Yates shuffle using this stream.
  template <typename T>
  void Shuffle(std::vector<T> *v) {
    if (v->empty()) return;
    for (size_t i = v->size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(UniformInt(0, static_cast<int64_t>(i)));
      std::swap((*v)[i], (*v)[j]);
    }
  }

  // Derives a child seed for an independent substream.
  static uint64_t Derive(uint64_t seed, uint64_t stream);

 private:
  static uint64_t Mix(uint64_t x);
  std::mt19937_64 gen_;
};

// n distinct indices drawn from [0, pool) by a partial Fisher-Yates pass;
// n >= pool returns 0..pool-1 in order.
std::vector<std::size_t> SampleWithoutReplacement(std::size_t pool,
                                                  std::size_t n, Rng *rng);

}  // namespace e2esv

#endif  // E2ESV_COMMON_HPP_
