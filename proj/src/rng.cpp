#include "latent_audit/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "latent_audit/error.hpp"

namespace latent_audit {

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::seed_seq::result_type low32(std::uint64_t v) {
  return static_cast<std::seed_seq::result_type>(v & 0xffffffffULL);
}

std::mt19937_64 make_engine(std::uint64_t master_seed, std::string_view label) {
  const std::uint64_t a = splitmix64(master_seed);
  const std::uint64_t b = splitmix64(fnv1a64(label) ^ a);
  const std::uint64_t c = splitmix64(b + 0x632be59bd9b4e019ULL);
  std::seed_seq seq{low32(a), low32(a >> 32), low32(b), low32(b >> 32),
                    low32(c), low32(c >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::string label)
    : master_seed_(master_seed),
      label_(std::move(label)),
      engine_(make_engine(master_seed_, label_)) {
  if (label_.empty()) throw Error(ErrorCode::Validation, "rng stream label must be non-empty");
}

double RngStream::uniform() {
  // 53 random mantissa bits, shifted by half an ulp so 0 is never produced.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::Validation, "uniform_index on empty range");
  // Rejection keeps the draw unbiased for any n.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % n;
}

RngStream RngStream::child(std::string_view suffix) const {
  std::string nested = label_;
  nested += '/';
  nested += suffix;
  return RngStream(master_seed_, std::move(nested));
}

RngStream derive_stream(std::uint64_t master_seed, std::string_view label) {
  return RngStream(master_seed, std::string(label));
}

}  // namespace latent_audit
