#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace invbench {

/// Counter-based, splittable random stream.
///
/// A stream is identified by a master seed and a path of integer labels.
/// Its draws are a pure function of that identity and the number of draws
/// taken so far, so any child stream can be re-derived independently of
/// the order in which work is scheduled. Splitting never mutates the parent.
///
/// A single stream is not thread-safe; split one child per worker instead.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t master_seed);

  /// Child stream whose path is this path extended by `label`.
  [[nodiscard]] RngStream split(std::uint64_t label) const;

  std::uint64_t master_seed() const { return master_seed_; }
  const std::vector<std::uint64_t>& path() const { return path_; }
  std::uint64_t draws() const { return counter_; }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal (Box-Muller; the second variate is cached).
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  RngStream(std::uint64_t master_seed, std::vector<std::uint64_t> path);
  void rekey();

  std::uint64_t master_seed_;
  std::vector<std::uint64_t> path_;
  std::uint64_t key_ = 0;
  std::uint64_t tweak_ = 0;
  std::uint64_t counter_ = 0;
  std::optional<double> spare_normal_;
};

inline RngStream split_stream(const RngStream& parent, std::uint64_t label) {
  return parent.split(label);
}

/// Fisher-Yates permutation of {0, ..., n-1}.
std::vector<std::size_t> random_permutation(RngStream& stream, std::size_t n);

/// Index k drawn with probability probs[k]. Throws ConfigError when the
/// probabilities are negative or do not sum to one within 1e-9.
std::size_t sample_categorical(RngStream& stream, std::span<const double> probs);

}  // namespace invbench
