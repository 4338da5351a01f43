#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace latent_audit {

/// Deterministic random stream keyed by (master seed, label).
///
/// The engine is std::mt19937_64; uniform and normal draws are computed here
/// rather than through <random> distributions, whose outputs differ between
/// standard library implementations. Two streams with the same key produce the
/// same sequence regardless of thread scheduling because each parallel task is
/// expected to derive its own stream.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::string label);

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  const std::string& label() const noexcept { return label_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  /// Stream for a nested label, e.g. child("3") of "bootstrap" is "bootstrap/3".
  RngStream child(std::string_view suffix) const;

 private:
  std::uint64_t master_seed_;
  std::string label_;
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

RngStream derive_stream(std::uint64_t master_seed, std::string_view label);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace latent_audit
