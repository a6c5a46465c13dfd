#include "invbench/rng.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "invbench/errors.hpp"

namespace invbench {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed) : master_seed_(master_seed) { rekey(); }

RngStream::RngStream(std::uint64_t master_seed, std::vector<std::uint64_t> path)
    : master_seed_(master_seed), path_(std::move(path)) {
  rekey();
}

void RngStream::rekey() {
  std::uint64_t key = mix64(master_seed_ ^ 0x6A09E667F3BCC909ULL);
  for (std::uint64_t label : path_) {
    // Chained so that the label order matters.
    key = mix64(key + kGolden * (mix64(label + 0x3C6EF372FE94F82BULL) | 1ULL));
  }
  key_ = key;
  tweak_ = mix64(key ^ 0xA54FF53A5F1D36F1ULL);
}

RngStream RngStream::split(std::uint64_t label) const {
  auto child_path = path_;
  child_path.push_back(label);
  return RngStream(master_seed_, std::move(child_path));
}

RngStream::result_type RngStream::operator()() {
  const std::uint64_t c = counter_++;
  return mix64(mix64(key_ + c * kGolden) ^ tweak_);
}

double RngStream::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::normal() {
  if (spare_normal_) {
    const double z = *spare_normal_;
    spare_normal_.reset();
    return z;
  }
  // 1 - u lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw ConfigError("RngStream::below: n must be positive");
  // Rejection sampling on the top of the range to avoid modulo bias.
  const std::uint64_t limit = max() - (max() % n + 1) % n;
  std::uint64_t r;
  do {
    r = (*this)();
  } while (r > limit);
  return r % n;
}

std::vector<std::size_t> random_permutation(RngStream& stream, std::size_t n) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(stream.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

std::size_t sample_categorical(RngStream& stream, std::span<const double> probs) {
  if (probs.empty()) throw ConfigError("sample_categorical: empty probability vector");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw ConfigError(fmt::format("sample_categorical: negative probability {}", p));
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError(fmt::format("sample_categorical: probabilities sum to {}, expected 1", total));
  }
  const double u = stream.uniform();
  double cumulative = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    cumulative += probs[k];
    if (u < cumulative) return k;
  }
  // Rounding can leave u just above the final cumulative sum.
  for (std::size_t k = probs.size(); k > 0; --k) {
    if (probs[k - 1] > 0.0) return k - 1;
  }
  return probs.size() - 1;
}

}  // namespace invbench
