#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

namespace weakid {

/// Counter-based random stream (Philox4x32-10).
///
/// The key is the 64-bit seed, the upper half of the 128-bit counter is the
/// stream id and the lower half is the block index. Identical (seed, stream)
/// pairs replay identical sequences on every platform; distinct stream ids
/// address disjoint counter ranges. The object is a small value and can be
/// copied or moved between threads freely.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64();

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform();

  /// Standard normal draw (Box-Muller; pairs are cached).
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  std::size_t buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Raw Philox4x32-10 block function, exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// n draws of (u, v) bivariate normal with correlation rho and scales sigma_u, sigma_v.
/// Throws DomainError unless |rho| < 1 and both scales are positive.
std::vector<std::pair<double, double>> draw_bivariate_normal(RngStream& stream, double rho,
                                                             double sigma_u, double sigma_v,
                                                             std::size_t n);

}  // namespace weakid
