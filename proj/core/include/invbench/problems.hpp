#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "invbench/linalg.hpp"
#include "invbench/rng.hpp"

namespace invbench {

enum class ProblemKind { example1, example2, example3 };
enum class Task { regression, classification };

std::string_view to_string(Task task);

struct ProblemSpec {
  ProblemKind kind = ProblemKind::example1;
  bool scrambled = false;
  int d_inv = 5;
  int d_spu = 5;
  int n_env = 3;
  int n_per_env = 10000;

  int dim() const { return d_inv + d_spu; }
  Task task() const {
    return kind == ProblemKind::example1 ? Task::regression : Task::classification;
  }
  /// Lower-case identifier, e.g. "example2s".
  std::string id() const;
  /// Table label, e.g. "Example2s".
  std::string label() const;

  /// Throws ConfigError on inconsistent sizes.
  void validate() const;

  /// Parses "example1" .. "example3s" (case-insensitive) into a spec with
  /// default dimensions.
  static ProblemSpec parse(std::string_view id);
};

/// The six problems in canonical order.
std::vector<ProblemSpec> all_problems();

/// Position of the problem in canonical order; used as a stream label so
/// each problem draws from its own child of the master seed.
std::uint64_t problem_label(const ProblemSpec& spec);

// Fixed structural constants of the cows-versus-camels problem.
inline constexpr double kAnimalScale = 1e-2;
inline constexpr double kBackgroundScale = 1.0;
inline constexpr double kExample2NoiseVar = 0.1;
inline constexpr double kExample3NoiseVar = 0.1;
inline constexpr double kExample3Margin = 0.1;

struct Example1Env {
  double sigma2 = 0.0;
};
struct Example2Env {
  double p = 0.0;  ///< background/animal agreement
  double s = 0.0;  ///< cow prior
};
struct Example3Env {
  Vec mu_spu;
};
using EnvParams = std::variant<Example1Env, Example2Env, Example3Env>;

/// Frozen random parameters of one sampled structural equation model.
struct ProblemInstance {
  ProblemSpec spec;
  std::vector<EnvParams> envs;
  Mat w_yx;   ///< d_inv x d_inv (example1)
  Mat w_xy;   ///< d_spu x d_inv (example1)
  Vec mu_cow;    ///< example2; camel mean is -mu_cow
  Vec mu_grass;  ///< example2; sand mean is -mu_grass
  Vec gamma;     ///< example3
  std::optional<Mat> scramble;
};

struct Split {
  Mat x;  ///< n x d, one example per row
  Vec y;
  Task task = Task::regression;
  int env_index = 0;

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }
};

struct EnvironmentData {
  Split train;
  Split valid;
  Split test;
};

ProblemInstance instantiate_problem(const ProblemSpec& spec, RngStream stream);

/// One environment's sample in latent (unscrambled) coordinates, columns
/// ordered (x_inv, x_spu).
Split sample_latent_split(const ProblemInstance& instance, int env_index, int n, RngStream stream);

/// Permutes the rows of the spurious block (columns d_inv..d) with a single
/// uniform permutation; invariant columns and labels are untouched.
Split shuffle_spurious(const Split& split, int d_inv, RngStream stream);

/// Replaces every row x by S^T x.
Split apply_scramble(const Split& split, const Mat& s);

/// Train, validation and test splits for every environment. Test splits are
/// always spurious-shuffled; with `oracle` the train and validation splits
/// are shuffled as well. Shuffling happens in latent coordinates, before
/// scrambling. Latent samples depend only on `stream`, so oracle and
/// non-oracle builds from the same stream share data and test splits.
std::vector<EnvironmentData> build_environments(const ProblemInstance& instance, bool oracle,
                                                RngStream stream);

/// CSV with header x0..x{d-1},y.
void write_split_csv(const std::filesystem::path& path, const Split& split);

}  // namespace invbench
