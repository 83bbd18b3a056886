#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace zood {

// Philox4x64-10 counter-based generator (Salmon et al. 2011).
// Key = (seed, stream). The counter is bumped before each block, so the
// output stream matches numpy.random.Philox(key=[seed, stream]).
class Philox4x64 {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint64_t, 4>;
  using Key = std::array<std::uint64_t, 2>;

  explicit Philox4x64(std::uint64_t seed = 0, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  // One Philox4x64-10 bijection of the counter under the key.
  static Block encrypt(Block counter, Key key);

 private:
  Key key_;
  Block counter_{};
  Block buffer_{};
  int index_ = 4;
};

// Purpose tags for deriving independent substreams from one user seed.
enum class StreamTag : std::uint64_t {
  Regression = 1,
  Coefficients = 2,
  InvariantRows = 3,
  Mixing = 4,
  SpuriousNoise = 5,
  LabelNoise = 6,
  ZooFeatures = 7,
  Batches = 8,
};

// Stream id from a purpose tag and a sub-index (domain, model, target column).
std::uint64_t stream_id(StreamTag tag, std::uint64_t index = 0);

// Gaussian draws from a Philox stream (Boost's ziggurat, portable across platforms).
class NormalSource {
 public:
  NormalSource(std::uint64_t seed, std::uint64_t stream);
  double operator()();
  double uniform(double lo, double hi);
  Philox4x64& engine() { return engine_; }

 private:
  Philox4x64 engine_;
};

}  // namespace zood
