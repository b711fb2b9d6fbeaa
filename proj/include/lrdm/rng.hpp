// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace lrdm {

// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
// easy as 1, 2, 3"). Exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

// Counter-based generator. The 64-bit seed is the Philox key; the 128-bit
// counter is (block index lo, block index hi, stream lo, stream hi). Every
// draw is therefore a pure function of (seed, stream, position), which keeps
// sequences identical across runs and platforms.
//
// Draw algorithms:
//   next_u32      consecutive words of consecutive blocks
//   next_u64      (hi << 32) | lo from two next_u32 draws
//   uniform       (next_u64 >> 11) * 2^-53, in [0, 1)
//   uniform_int   rejection sampling on next_u64 (no modulo bias)
//   gaussian      Box-Muller on two uniforms, both outputs used in order
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  // Independent child stream derived from this generator's seed/stream and a
  // label. Does not advance this generator.
  Rng split(std::string_view label) const noexcept;
  Rng split(std::uint64_t index) const noexcept;

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;
  double uniform() noexcept;
  std::uint64_t uniform_int(std::uint64_t n) noexcept;  // in [0, n), n >= 1
  double gaussian() noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// 64-bit FNV-1a of a label, used to name sub-streams.
std::uint64_t label_hash(std::string_view label) noexcept;

}  // namespace lrdm
