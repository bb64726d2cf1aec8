#pragma once

// Counter-style random stream derivation. Every (master seed, path index,
// purpose) triple maps to its own engine, so ensembles do not depend on the
// order in which paths are generated or on how many workers generate them.

#include <cstdint>
#include <random>

namespace fexp {

/// Separates independent uses of randomness on the same path.
enum class StreamPurpose : std::uint32_t {
  kBrownian = 0,
  kNoise = 1,
  kJumpTimes = 2,
  kMarks = 3,
  kBridge = 4,
  kPermutation = 5,
  kInner = 6,
};

class RandomStream {
 public:
  RandomStream(std::uint64_t master_seed, std::uint64_t index, std::uint32_t purpose);

  double normal() { return normal_(engine_); }
  /// Uniform on [0, 1).
  double uniform() { return uniform_(engine_); }
  double exponential(double rate);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

struct RngContract {
  std::uint64_t master_seed = 0;

  RandomStream stream(std::uint64_t path_index,
                      StreamPurpose purpose = StreamPurpose::kBrownian) const {
    return RandomStream(master_seed, path_index, static_cast<std::uint32_t>(purpose));
  }

  /// A contract whose streams are independent of this one's (used to give
  /// nested Monte Carlo its own seed space).
  RngContract derive(std::uint64_t salt) const;
};

/// SplitMix64 finalizer; used to fold real-valued keys into stream indices.
std::uint64_t mix64(std::uint64_t x);

}  // namespace fexp
