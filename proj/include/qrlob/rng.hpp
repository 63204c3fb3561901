#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace qrlob {

// Philox 4x32-10 counter-based generator. A (seed, stream) pair selects an
// independent sequence, so ensemble workers keyed by path index reproduce the
// same draws no matter how work is scheduled.
class Rng {
 public:
  Rng() : Rng(0, 0) {}

  Rng(uint64_t seed, uint64_t stream)
      : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
        ctr_{0, 0, static_cast<uint32_t>(stream), static_cast<uint32_t>(stream >> 32)} {}

  uint32_t next_u32() {
    if (have_ == 0) refill();
    return block_[--have_];
  }

  uint64_t next_u64() {
    const uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform in [0, 1) with 53 random bits; never returns 1.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  bool bernoulli(double p) { return uniform() < p; }

  // Integer in [0, n), n >= 1.
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  static constexpr uint32_t kMul0 = 0xD2511F53u;
  static constexpr uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr uint32_t kWeyl1 = 0xBB67AE85u;

  static uint32_t mulhi(uint32_t a, uint32_t b) {
    return static_cast<uint32_t>((static_cast<uint64_t>(a) * b) >> 32);
  }

  void refill() {
    std::array<uint32_t, 4> x = ctr_;
    uint32_t k0 = key_[0];
    uint32_t k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
      const uint32_t lo0 = x[0] * kMul0;
      const uint32_t hi0 = mulhi(x[0], kMul0);
      const uint32_t lo1 = x[2] * kMul1;
      const uint32_t hi1 = mulhi(x[2], kMul1);
      x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    block_ = x;
    have_ = 4;
    if (++ctr_[0] == 0) ++ctr_[1];
  }

  std::array<uint32_t, 2> key_;
  std::array<uint32_t, 4> ctr_;
  std::array<uint32_t, 4> block_{};
  int have_ = 0;
};

}  // namespace qrlob
