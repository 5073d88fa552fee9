#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Every draw is
// a pure function of (key, counter), so streams can be split per replication
// and per record without shared state.

#include <array>
#include <cmath>
#include <cstdint>

namespace tndve {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

inline PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

/// Maps a 32-bit word to (0,1), never returning 0 or 1.
inline double to_unit(std::uint32_t x) noexcept { return (static_cast<double>(x) + 0.5) * 0x1p-32; }

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Stream key for one (master seed, scenario, grid index, replication) cell.
inline PhiloxKey stream_key(std::uint64_t seed, std::uint64_t scenario, std::uint64_t grid_index,
                            std::uint64_t replication) noexcept {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ scenario);
  h = splitmix64(h ^ (grid_index << 32 | (replication & 0xFFFFFFFFull)));
  h = splitmix64(h ^ (replication >> 32));
  return {static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
}

/// Eight uniforms per record: blocks 0 and 1 of the record's counter.
struct RecordUniforms {
  std::array<double, 8> u;
};

inline RecordUniforms record_uniforms(PhiloxKey key, std::uint64_t record) noexcept {
  RecordUniforms out{};
  const auto lo = static_cast<std::uint32_t>(record);
  const auto hi = static_cast<std::uint32_t>(record >> 32);
  for (std::uint32_t block = 0; block < 2; ++block) {
    const PhiloxCounter r = philox4x32_10({lo, hi, block, 0u}, key);
    for (int j = 0; j < 4; ++j) out.u[block * 4 + j] = to_unit(r[j]);
  }
  return out;
}

/// First block only (four uniforms), for early rejection.
inline std::array<double, 4> record_block(PhiloxKey key, std::uint64_t record, std::uint32_t block) noexcept {
  const PhiloxCounter r = philox4x32_10(
      {static_cast<std::uint32_t>(record), static_cast<std::uint32_t>(record >> 32), block, 0u}, key);
  return {to_unit(r[0]), to_unit(r[1]), to_unit(r[2]), to_unit(r[3])};
}

}  // namespace tndve
