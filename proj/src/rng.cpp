#include "zood/rng.hpp"

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

namespace zood {
namespace {

constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& lo, std::uint64_t& hi) {
  const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  lo = static_cast<std::uint64_t>(p);
  hi = static_cast<std::uint64_t>(p >> 64);
}

}  // namespace

Philox4x64::Philox4x64(std::uint64_t seed, std::uint64_t stream) : key_{seed, stream} {}

Philox4x64::Block Philox4x64::encrypt(Block ctr, Key key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint64_t lo0, hi0, lo1, hi1;
    mulhilo(kMul0, ctr[0], lo0, hi0);
    mulhilo(kMul1, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

Philox4x64::result_type Philox4x64::operator()() {
  if (index_ == 4) {
    for (auto& word : counter_) {
      if (++word != 0) break;
    }
    buffer_ = encrypt(counter_, key_);
    index_ = 0;
  }
  return buffer_[index_++];
}

std::uint64_t stream_id(StreamTag tag, std::uint64_t index) {
  return (static_cast<std::uint64_t>(tag) << 56) ^ index;
}

NormalSource::NormalSource(std::uint64_t seed, std::uint64_t stream) : engine_(seed, stream) {}

double NormalSource::operator()() {
  boost::random::normal_distribution<double> normal;
  return normal(engine_);
}

double NormalSource::uniform(double lo, double hi) {
  boost::random::uniform_real_distribution<double> dist(lo, hi);
  return dist(engine_);
}

}  // namespace zood
