#include "invbench/problems.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "invbench/errors.hpp"

namespace invbench {
namespace {

// Default environment constants for E0, E1, E2.
constexpr std::array<double, 3> kExample1Sigma2 = {0.1, 1.5, 2.0};
constexpr std::array<double, 3> kExample2P = {0.95, 0.97, 0.99};
constexpr std::array<double, 3> kExample2S = {0.3, 0.5, 0.7};

// Child labels of the instance stream.
enum InstanceLabel : std::uint64_t { kWyx = 0, kWxy = 1, kScramble = 2, kEnvBase = 16 };

// Child labels of one environment's stream in build_environments.
enum EnvLabel : std::uint64_t {
  kTrain = 0,
  kValid = 1,
  kTest = 2,
  kTestShuffle = 3,
  kOracleTrainShuffle = 4,
  kOracleValidShuffle = 5,
};

Mat standard_normal_matrix(RngStream& stream, Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = stream.normal();
  }
  return m;
}

Split sample_example1(const ProblemInstance& inst, const Example1Env& env, int n, RngStream& rng) {
  const auto& spec = inst.spec;
  const int d_inv = spec.d_inv;
  const int d_spu = spec.d_spu;
  const double sd = std::sqrt(env.sigma2);
  const double y_scale = 2.0 / spec.dim();

  Split out;
  out.task = Task::regression;
  out.x.resize(n, spec.dim());
  out.y.resize(n);
  Vec x_inv(d_inv);
  Vec y_latent(d_inv);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d_inv; ++k) x_inv[k] = sd * rng.normal();
    y_latent.noalias() = inst.w_yx * x_inv;
    for (int k = 0; k < d_inv; ++k) y_latent[k] += sd * rng.normal();
    out.x.row(i).head(d_inv) = x_inv.transpose();
    if (d_spu > 0) {
      Vec x_spu = inst.w_xy * y_latent;
      for (int k = 0; k < d_spu; ++k) x_spu[k] += rng.normal();
      out.x.row(i).tail(d_spu) = x_spu.transpose();
    }
    out.y[i] = y_scale * y_latent.sum();
  }
  return out;
}

Split sample_example2(const ProblemInstance& inst, const Example2Env& env, int n, RngStream& rng) {
  const auto& spec = inst.spec;
  const int d_inv = spec.d_inv;
  const int d_spu = spec.d_spu;
  const double sd = std::sqrt(kExample2NoiseVar);
  const std::array<double, 4> probs = {env.p * env.s, (1.0 - env.p) * env.s,
                                       env.p * (1.0 - env.s), (1.0 - env.p) * (1.0 - env.s)};

  Split out;
  out.task = Task::classification;
  out.x.resize(n, spec.dim());
  out.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const std::size_t j = sample_categorical(rng, probs);
    const double animal = (j == 0 || j == 1) ? 1.0 : -1.0;      // cow : camel
    const double background = (j == 0 || j == 3) ? 1.0 : -1.0;  // grass : sand
    double inv_sum = 0.0;
    for (int k = 0; k < d_inv; ++k) {
      const double v = (sd * rng.normal() + animal * inst.mu_cow[k]) * kAnimalScale;
      out.x(i, k) = v;
      inv_sum += v;
    }
    for (int k = 0; k < d_spu; ++k) {
      out.x(i, d_inv + k) = (sd * rng.normal() + background * inst.mu_grass[k]) * kBackgroundScale;
    }
    out.y[i] = inv_sum > 0.0 ? 1.0 : 0.0;
  }
  return out;
}

Split sample_example3(const ProblemInstance& inst, const Example3Env& env, int n, RngStream& rng) {
  const auto& spec = inst.spec;
  const int d_inv = spec.d_inv;
  const int d_spu = spec.d_spu;
  const double sd = std::sqrt(kExample3NoiseVar);

  Split out;
  out.task = Task::classification;
  out.x.resize(n, spec.dim());
  out.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const bool label = rng.bernoulli(0.5);
    const double sign = label ? -1.0 : 1.0;
    for (int k = 0; k < d_inv; ++k) out.x(i, k) = sign * inst.gamma[k] + sd * rng.normal();
    for (int k = 0; k < d_spu; ++k) out.x(i, d_inv + k) = sign * env.mu_spu[k] + sd * rng.normal();
    out.y[i] = label ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace

std::string_view to_string(Task task) {
  return task == Task::regression ? "regression" : "classification";
}

std::string ProblemSpec::id() const {
  const char digit = kind == ProblemKind::example1 ? '1' : kind == ProblemKind::example2 ? '2' : '3';
  std::string out = "example";
  out += digit;
  if (scrambled) out += 's';
  return out;
}

std::string ProblemSpec::label() const {
  std::string out = id();
  out[0] = 'E';
  return out;
}

void ProblemSpec::validate() const {
  if (d_inv < 1) throw ConfigError(fmt::format("d_inv must be >= 1, got {}", d_inv));
  if (d_spu < 0) throw ConfigError(fmt::format("d_spu must be >= 0, got {}", d_spu));
  if (n_env < 2) throw ConfigError(fmt::format("n_env must be >= 2, got {}", n_env));
  if (n_per_env < 1) throw ConfigError(fmt::format("n_per_env must be >= 1, got {}", n_per_env));
}

ProblemSpec ProblemSpec::parse(std::string_view id) {
  std::string lower(id);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const auto& spec : all_problems()) {
    if (spec.id() == lower) return spec;
  }
  throw ConfigError(fmt::format("unknown problem '{}'", id));
}

std::vector<ProblemSpec> all_problems() {
  std::vector<ProblemSpec> out;
  for (auto kind : {ProblemKind::example1, ProblemKind::example2, ProblemKind::example3}) {
    for (bool scrambled : {false, true}) {
      ProblemSpec spec;
      spec.kind = kind;
      spec.scrambled = scrambled;
      out.push_back(spec);
    }
  }
  return out;
}

std::uint64_t problem_label(const ProblemSpec& spec) {
  return 2 * static_cast<std::uint64_t>(spec.kind) + (spec.scrambled ? 1 : 0);
}

ProblemInstance instantiate_problem(const ProblemSpec& spec, RngStream stream) {
  spec.validate();
  ProblemInstance inst;
  inst.spec = spec;
  const int d_inv = spec.d_inv;
  const int d_spu = spec.d_spu;

  switch (spec.kind) {
    case ProblemKind::example1: {
      auto wyx_rng = stream.split(kWyx);
      auto wxy_rng = stream.split(kWxy);
      inst.w_yx = standard_normal_matrix(wyx_rng, d_inv, d_inv);
      inst.w_xy = standard_normal_matrix(wxy_rng, d_spu, d_inv);
      for (int e = 0; e < spec.n_env; ++e) {
        Example1Env env;
        if (e < 3) {
          env.sigma2 = kExample1Sigma2[e];
        } else {
          auto env_rng = stream.split(kEnvBase + e);
          env.sigma2 = env_rng.uniform(1e-2, 10.0);
        }
        inst.envs.emplace_back(env);
      }
      break;
    }
    case ProblemKind::example2: {
      inst.mu_cow = Vec::Ones(d_inv);
      inst.mu_grass = Vec::Ones(d_spu);
      for (int e = 0; e < spec.n_env; ++e) {
        Example2Env env;
        if (e < 3) {
          env.p = kExample2P[e];
          env.s = kExample2S[e];
        } else {
          auto env_rng = stream.split(kEnvBase + e);
          env.p = env_rng.uniform(0.9, 1.0);
          env.s = env_rng.uniform(0.3, 0.7);
        }
        inst.envs.emplace_back(env);
      }
      break;
    }
    case ProblemKind::example3: {
      inst.gamma = Vec::Constant(d_inv, kExample3Margin);
      for (int e = 0; e < spec.n_env; ++e) {
        auto env_rng = stream.split(kEnvBase + e);
        inst.envs.emplace_back(Example3Env{sample_gaussian_vector(env_rng, d_spu, Vec::Zero(d_spu), 1.0)});
      }
      break;
    }
  }

  if (spec.scrambled) {
    auto rot_rng = stream.split(kScramble);
    inst.scramble = sample_rotation(rot_rng, spec.dim());
  }
  return inst;
}

Split sample_latent_split(const ProblemInstance& instance, int env_index, int n, RngStream stream) {
  if (env_index < 0 || env_index >= static_cast<int>(instance.envs.size())) {
    throw ConfigError(fmt::format("env_index {} out of range [0, {})", env_index, instance.envs.size()));
  }
  if (n < 1) throw ConfigError("sample_latent_split: n must be >= 1");
  const auto& params = instance.envs[static_cast<std::size_t>(env_index)];
  Split out = std::visit(
      [&](const auto& env) -> Split {
        using T = std::decay_t<decltype(env)>;
        if constexpr (std::is_same_v<T, Example1Env>) {
          return sample_example1(instance, env, n, stream);
        } else if constexpr (std::is_same_v<T, Example2Env>) {
          return sample_example2(instance, env, n, stream);
        } else {
          return sample_example3(instance, env, n, stream);
        }
      },
      params);
  out.env_index = env_index;
  return out;
}

Split shuffle_spurious(const Split& split, int d_inv, RngStream stream) {
  Split out = split;
  const Eigen::Index n = split.size();
  const Eigen::Index d_spu = split.dim() - d_inv;
  if (d_spu <= 0 || n <= 1) return out;
  const auto perm = random_permutation(stream, static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    out.x.row(i).tail(d_spu) = split.x.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)])).tail(d_spu);
  }
  return out;
}

Split apply_scramble(const Split& split, const Mat& s) {
  if (s.rows() != split.dim() || s.cols() != split.dim()) {
    throw ConfigError(fmt::format("apply_scramble: rotation is {}x{}, data has {} columns", s.rows(),
                                  s.cols(), split.dim()));
  }
  Split out = split;
  // Row form of x -> S^T x.
  out.x.noalias() = split.x * s;
  return out;
}

std::vector<EnvironmentData> build_environments(const ProblemInstance& instance, bool oracle,
                                                RngStream stream) {
  const auto& spec = instance.spec;
  std::vector<EnvironmentData> out;
  out.reserve(static_cast<std::size_t>(spec.n_env));
  for (int e = 0; e < spec.n_env; ++e) {
    const auto env_rng = stream.split(static_cast<std::uint64_t>(e));
    EnvironmentData data{
        sample_latent_split(instance, e, spec.n_per_env, env_rng.split(kTrain)),
        sample_latent_split(instance, e, spec.n_per_env, env_rng.split(kValid)),
        sample_latent_split(instance, e, spec.n_per_env, env_rng.split(kTest)),
    };
    data.test = shuffle_spurious(data.test, spec.d_inv, env_rng.split(kTestShuffle));
    if (oracle) {
      data.train = shuffle_spurious(data.train, spec.d_inv, env_rng.split(kOracleTrainShuffle));
      data.valid = shuffle_spurious(data.valid, spec.d_inv, env_rng.split(kOracleValidShuffle));
    }
    if (instance.scramble) {
      data.train = apply_scramble(data.train, *instance.scramble);
      data.valid = apply_scramble(data.valid, *instance.scramble);
      data.test = apply_scramble(data.test, *instance.scramble);
    }
    out.push_back(std::move(data));
  }
  return out;
}

void write_split_csv(const std::filesystem::path& path, const Split& split) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
  for (Eigen::Index k = 0; k < split.dim(); ++k) os << 'x' << k << ',';
  os << "y\n";
  for (Eigen::Index i = 0; i < split.size(); ++i) {
    for (Eigen::Index k = 0; k < split.dim(); ++k) os << fmt::format("{:.17g},", split.x(i, k));
    os << fmt::format("{:.17g}\n", split.y[i]);
  }
}

}  // namespace invbench
