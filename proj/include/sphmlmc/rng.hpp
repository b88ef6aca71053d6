#pragma once

// Counter-based random streams.
//
// Every Gaussian pair is a pure function of (master seed, stream id, slot), so
// samples can be generated in any order, on any thread, and extended to higher
// degree without disturbing what was drawn before.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace sphmlmc {

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) noexcept {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// Disjoint families of streams. The domain occupies its own counter field, so
/// streams of different domains can never coincide.
enum class StreamDomain : std::uint8_t {
  adhoc = 0,
  study = 1,
  reference = 2,
  diagnostics = 3,
};

/// Identifies one independent random field realization.
///
/// Fields: domain, realization (24 bits: independent repetition of a whole
/// estimator), level (8 bits), sample (32 bits). The slot within the stream is
/// the harmonic index (l, m), each 16 bits.
struct StreamId {
  StreamDomain domain = StreamDomain::adhoc;
  std::uint32_t realization = 0;
  std::uint32_t level = 0;
  std::uint32_t sample = 0;

  friend bool operator==(const StreamId&, const StreamId&) = default;
};

class RandomStream {
 public:
  RandomStream() = default;
  RandomStream(std::uint64_t master_seed, StreamId id) : seed_(master_seed), id_(id) {
    if (id.realization >= (1u << 24)) throw std::out_of_range("RandomStream: realization index exceeds 24 bits");
    if (id.level >= (1u << 8)) throw std::out_of_range("RandomStream: level index exceeds 8 bits");
  }

  std::uint64_t master_seed() const noexcept { return seed_; }
  const StreamId& id() const noexcept { return id_; }

  RandomStream with_level(std::uint32_t level) const { return {seed_, {id_.domain, id_.realization, level, id_.sample}}; }
  RandomStream with_sample(std::uint32_t sample) const { return {seed_, {id_.domain, id_.realization, id_.level, sample}}; }

  /// Raw 128 random bits at slot (l, m).
  Philox4x32::Counter bits(int l, int m) const {
    if (l < 0 || m < 0 || l > 0xFFFF || m > 0xFFFF) throw std::out_of_range("RandomStream: slot out of range");
    const Philox4x32::Counter ctr = {
        (static_cast<std::uint32_t>(l) << 16) | static_cast<std::uint32_t>(m),
        id_.sample,
        (id_.level << 24) | id_.realization,
        static_cast<std::uint32_t>(id_.domain),
    };
    const Philox4x32::Key key = {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
    return Philox4x32::generate(ctr, key);
  }

  /// Two independent uniforms in (0, 1) at slot (l, m).
  std::pair<double, double> uniforms(int l, int m) const {
    const auto r = bits(l, m);
    const std::uint64_t u0 = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
    const std::uint64_t u1 = (static_cast<std::uint64_t>(r[2]) << 32) | r[3];
    constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
    return {(static_cast<double>(u0 >> 11) + 0.5) * scale, (static_cast<double>(u1 >> 11) + 0.5) * scale};
  }

  /// Two independent standard normals at slot (l, m) (Box-Muller).
  std::pair<double, double> gaussians(int l, int m) const {
    const auto [u0, u1] = uniforms(l, m);
    const double r = std::sqrt(-2.0 * std::log(u0));
    const double t = 2.0 * std::numbers::pi * u1;
    return {r * std::cos(t), r * std::sin(t)};
  }

 private:
  std::uint64_t seed_ = 0;
  StreamId id_{};
};

}  // namespace sphmlmc
