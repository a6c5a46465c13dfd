#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "invbench/errors.hpp"
#include "invbench/problems.hpp"
#include "stats.hpp"

using namespace invbench;
using invbench::test::correlation;

namespace {

ProblemSpec spec_of(const char* id, int n = 2000) {
  auto spec = ProblemSpec::parse(id);
  spec.n_per_env = n;
  return spec;
}

std::vector<double> column(const Split& s, Eigen::Index k) {
  return {s.x.col(k).data(), s.x.col(k).data() + s.size()};
}

std::vector<double> labels(const Split& s) { return {s.y.data(), s.y.data() + s.size()}; }

}  // namespace

TEST_CASE("problem ids, labels and canonical order") {
  const auto all = all_problems();
  REQUIRE(all.size() == 6);
  const char* ids[] = {"example1", "example1s", "example2", "example2s", "example3", "example3s"};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(all[i].id() == ids[i]);
    CHECK(problem_label(all[i]) == i);
  }
  CHECK(ProblemSpec::parse("Example2S").label() == "Example2s");
  CHECK(ProblemSpec::parse("example1").task() == Task::regression);
  CHECK(ProblemSpec::parse("example3s").task() == Task::classification);
  CHECK_THROWS_AS(ProblemSpec::parse("example4"), ConfigError);
}

TEST_CASE("spec defaults and validation") {
  const ProblemSpec spec;
  CHECK(spec.d_inv == 5);
  CHECK(spec.d_spu == 5);
  CHECK(spec.n_env == 3);
  CHECK(spec.n_per_env == 10000);
  CHECK(spec.dim() == 10);
  ProblemSpec bad = spec;
  bad.n_env = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(instantiate_problem(bad, RngStream(0)), ConfigError);
  bad = spec;
  bad.d_inv = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("example1 environment constants") {
  const auto inst = instantiate_problem(spec_of("example1"), RngStream(1));
  REQUIRE(inst.envs.size() == 3);
  const double expected[] = {0.1, 1.5, 2.0};
  for (std::size_t e = 0; e < 3; ++e) CHECK(std::get<Example1Env>(inst.envs[e]).sigma2 == expected[e]);
  CHECK(inst.w_yx.rows() == 5);
  CHECK(inst.w_yx.cols() == 5);
  CHECK(inst.w_xy.rows() == 5);
  CHECK(inst.w_xy.cols() == 5);
  CHECK_FALSE(inst.scramble.has_value());
}

TEST_CASE("extra environments draw from the stated ranges") {
  auto spec1 = spec_of("example1");
  spec1.n_env = 10;
  const auto inst1 = instantiate_problem(spec1, RngStream(2));
  for (std::size_t e = 3; e < 10; ++e) {
    const double s2 = std::get<Example1Env>(inst1.envs[e]).sigma2;
    CHECK(s2 >= 0.01);
    CHECK(s2 <= 10.0);
  }
  auto spec2 = spec_of("example2");
  spec2.n_env = 10;
  const auto inst2 = instantiate_problem(spec2, RngStream(2));
  const double p0[] = {0.95, 0.97, 0.99};
  const double s0[] = {0.3, 0.5, 0.7};
  for (std::size_t e = 0; e < 10; ++e) {
    const auto env = std::get<Example2Env>(inst2.envs[e]);
    if (e < 3) {
      CHECK(env.p == p0[e]);
      CHECK(env.s == s0[e]);
    } else {
      CHECK((env.p >= 0.9 && env.p <= 1.0));
      CHECK((env.s >= 0.3 && env.s <= 0.7));
    }
  }
}

TEST_CASE("example2 and example3 fixed vectors") {
  const auto inst2 = instantiate_problem(spec_of("example2"), RngStream(3));
  CHECK(inst2.mu_cow == Vec::Ones(5));
  CHECK(inst2.mu_grass == Vec::Ones(5));
  const auto inst3 = instantiate_problem(spec_of("example3"), RngStream(3));
  CHECK(inst3.gamma == Vec::Constant(5, 0.1));
  for (const auto& env : inst3.envs) CHECK(std::get<Example3Env>(env).mu_spu.size() == 5);
}

TEST_CASE("scrambled instances carry an orthogonal matrix") {
  const auto inst = instantiate_problem(spec_of("example2s"), RngStream(4));
  REQUIRE(inst.scramble.has_value());
  CHECK(inst.scramble->rows() == 10);
  CHECK(orthogonality_error(*inst.scramble) <= 1e-10);
}

TEST_CASE("instantiation is deterministic") {
  const auto a = instantiate_problem(spec_of("example1s"), RngStream(5));
  const auto b = instantiate_problem(spec_of("example1s"), RngStream(5));
  CHECK(a.w_yx == b.w_yx);
  CHECK(a.w_xy == b.w_xy);
  CHECK(*a.scramble == *b.scramble);
}

TEST_CASE("sample_latent_split rejects bad arguments") {
  const auto inst = instantiate_problem(spec_of("example1"), RngStream(6));
  CHECK_THROWS_AS(sample_latent_split(inst, 3, 10, RngStream(0)), ConfigError);
  CHECK_THROWS_AS(sample_latent_split(inst, 0, 0, RngStream(0)), ConfigError);
}

TEST_CASE("example1 E0 invariant variance") {
  const auto inst = instantiate_problem(spec_of("example1"), RngStream(7));
  const Split s = sample_latent_split(inst, 0, 10000, RngStream(70));
  CHECK(s.task == Task::regression);
  for (int k = 0; k < 5; ++k) {
    const double var = test::variance(column(s, k));
    CHECK(var >= 0.09);
    CHECK(var <= 0.11);
  }
}

TEST_CASE("example1 least squares on x_inv recovers the invariant coefficients") {
  const auto inst = instantiate_problem(spec_of("example1"), RngStream(8));
  const Split s = sample_latent_split(inst, 1, 100000, RngStream(80));
  Mat design(s.size(), 6);
  design.leftCols(5) = s.x.leftCols(5);
  design.col(5).setOnes();
  const Vec coef = design.colPivHouseholderQr().solve(s.y);
  const Vec expected = (2.0 / 10.0) * inst.w_yx.transpose() * Vec::Ones(5);
  CHECK((coef.head(5) - expected).lpNorm<Eigen::Infinity>() <= 0.05);
}

TEST_CASE("example2 label and background frequencies") {
  const auto inst = instantiate_problem(spec_of("example2"), RngStream(9));
  const Split s = sample_latent_split(inst, 0, 10000, RngStream(90));
  double joint = 0.0, positive = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const bool grass = s.x.row(i).tail(5).sum() > 0.0;
    positive += s.y[i];
    joint += (grass && s.y[i] == 1.0) ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(s.size());
  CHECK(std::abs(joint / n - 0.95 * 0.3) <= 0.02);
  // Label flips away from the animal identity are rare, so the label rate tracks the cow prior.
  CHECK(std::abs(positive / n - 0.3) <= 0.02);
}

TEST_CASE("example2 animal signal is small next to the background") {
  const auto inst = instantiate_problem(spec_of("example2"), RngStream(10));
  const Split s = sample_latent_split(inst, 0, 5000, RngStream(100));
  const double inv_scale = s.x.leftCols(5).cwiseAbs().mean();
  const double spu_scale = s.x.rightCols(5).cwiseAbs().mean();
  CHECK(inv_scale < 0.05);
  CHECK(spu_scale > 0.5);
}

TEST_CASE("example3 labels are balanced") {
  const auto inst = instantiate_problem(spec_of("example3"), RngStream(11));
  const Split s = sample_latent_split(inst, 2, 10000, RngStream(110));
  const double rate = s.y.mean();
  CHECK(rate >= 0.48);
  CHECK(rate <= 0.52);
}

TEST_CASE("example3 invariant classifier errs while the spurious one does not") {
  const auto inst = instantiate_problem(spec_of("example3"), RngStream(12));
  for (int e = 0; e < 3; ++e) {
    const Split s = sample_latent_split(inst, e, 100000, RngStream(120).split(static_cast<std::uint64_t>(e)));
    const Vec& mu = std::get<Example3Env>(inst.envs[static_cast<std::size_t>(e)]).mu_spu;
    double inv_err = 0.0, spu_err = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double inv_pred = -s.x.row(i).head(5).sum() > 0.0 ? 1.0 : 0.0;
      const double spu_pred = -s.x.row(i).tail(5).dot(mu) > 0.0 ? 1.0 : 0.0;
      inv_err += inv_pred != s.y[i] ? 1.0 : 0.0;
      spu_err += spu_pred != s.y[i] ? 1.0 : 0.0;
    }
    inv_err /= static_cast<double>(s.size());
    spu_err /= static_cast<double>(s.size());
    CHECK(inv_err > 0.1);
    if (mu.norm() > 1.0) CHECK(spu_err < 0.01);
  }
}

TEST_CASE("shuffle_spurious: single row and multiset") {
  const auto inst = instantiate_problem(spec_of("example2"), RngStream(13));
  const Split one = sample_latent_split(inst, 0, 1, RngStream(130));
  const Split same = shuffle_spurious(one, 5, RngStream(131));
  CHECK(same.x == one.x);
  CHECK(same.y == one.y);

  const Split s = sample_latent_split(inst, 0, 500, RngStream(132));
  const Split t = shuffle_spurious(s, 5, RngStream(133));
  CHECK(t.x.leftCols(5) == s.x.leftCols(5));
  CHECK(t.y == s.y);
  auto rows = [](const Split& x) {
    std::vector<std::vector<double>> out;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const Vec r = x.x.row(i).tail(5).transpose();
      out.emplace_back(r.data(), r.data() + r.size());
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  CHECK(rows(s) == rows(t));
  CHECK(t.x.rightCols(5) != s.x.rightCols(5));
}

TEST_CASE("shuffling destroys the label correlation of spurious columns") {
  const auto inst = instantiate_problem(spec_of("example1"), RngStream(14));
  const Split s = sample_latent_split(inst, 0, 10000, RngStream(140));
  const Split t = shuffle_spurious(s, 5, RngStream(141));
  double strongest_before = 0.0;
  for (int k = 5; k < 10; ++k) {
    strongest_before = std::max(strongest_before, std::abs(correlation(labels(s), column(s, k))));
    CHECK(std::abs(correlation(labels(t), column(t, k))) <= 0.05);
    CHECK(test::variance(column(t, k)) == doctest::Approx(test::variance(column(s, k))));
  }
  CHECK(strongest_before > 0.2);
}

TEST_CASE("apply_scramble: identity, isometry, inverse, mismatch") {
  const auto inst = instantiate_problem(spec_of("example3"), RngStream(15));
  const Split s = sample_latent_split(inst, 0, 200, RngStream(150));
  CHECK(apply_scramble(s, Mat::Identity(10, 10)).x == s.x);
  RngStream r(151);
  const Mat rot = sample_rotation(r, 10);
  const Split t = apply_scramble(s, rot);
  CHECK(t.y == s.y);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    CHECK(std::abs(t.x.row(i).norm() - s.x.row(i).norm()) <= 1e-10 * s.x.row(i).norm());
  }
  const Split back = apply_scramble(t, rot.transpose());
  CHECK((back.x - s.x).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK_THROWS_AS(apply_scramble(s, Mat::Identity(9, 9)), ConfigError);
}

TEST_CASE("build_environments: shapes, shuffled test, shared latent data") {
  const auto spec = spec_of("example1", 3000);
  const auto inst = instantiate_problem(spec, RngStream(16));
  const RngStream stream(160);
  const auto plain = build_environments(inst, false, stream);
  const auto oracle = build_environments(inst, true, stream);
  REQUIRE(plain.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    for (const Split* s : {&plain[e].train, &plain[e].valid, &plain[e].test}) {
      CHECK(s->size() == 3000);
      CHECK(s->dim() == 10);
      CHECK(s->env_index == static_cast<int>(e));
      CHECK(s->task == Task::regression);
    }
    CHECK(plain[e].test.x == oracle[e].test.x);
    CHECK(plain[e].train.x.leftCols(5) == oracle[e].train.x.leftCols(5));
    CHECK(plain[e].train.y == oracle[e].train.y);
    CHECK(plain[e].train.x != plain[e].valid.x);
  }
  // E0 has the weakest invariant noise, so its spurious columns carry the clearest signal.
  double plain_train = 0.0, oracle_train = 0.0, plain_test = 0.0;
  for (int k = 5; k < 10; ++k) {
    plain_train = std::max(plain_train, std::abs(correlation(labels(plain[0].train), column(plain[0].train, k))));
    oracle_train = std::max(oracle_train, std::abs(correlation(labels(oracle[0].train), column(oracle[0].train, k))));
    plain_test = std::max(plain_test, std::abs(correlation(labels(plain[0].test), column(plain[0].test, k))));
  }
  CHECK(plain_train > 0.2);
  CHECK(oracle_train < 0.06);
  CHECK(plain_test < 0.06);
}

TEST_CASE("build_environments is reproducible") {
  const auto inst = instantiate_problem(spec_of("example2s", 300), RngStream(17));
  const auto a = build_environments(inst, false, RngStream(170));
  const auto b = build_environments(inst, false, RngStream(170));
  for (std::size_t e = 0; e < a.size(); ++e) {
    CHECK(a[e].train.x == b[e].train.x);
    CHECK(a[e].test.x == b[e].test.x);
    CHECK(a[e].valid.y == b[e].valid.y);
  }
}

TEST_CASE("scrambled environments rotate the latent ones after shuffling") {
  auto plain_spec = spec_of("example3", 400);
  auto scr_spec = spec_of("example3s", 400);
  const auto scr = instantiate_problem(scr_spec, RngStream(18));
  ProblemInstance latent = scr;
  latent.spec = plain_spec;
  latent.scramble.reset();
  const auto a = build_environments(latent, false, RngStream(180));
  const auto b = build_environments(scr, false, RngStream(180));
  for (std::size_t e = 0; e < a.size(); ++e) {
    CHECK((a[e].test.x * *scr.scramble - b[e].test.x).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((a[e].train.x * *scr.scramble - b[e].train.x).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("write_split_csv header and row count") {
  const auto inst = instantiate_problem(spec_of("example3", 5), RngStream(19));
  const Split s = sample_latent_split(inst, 0, 5, RngStream(190));
  const auto path = std::filesystem::temp_directory_path() / "invbench_split_test.csv";
  write_split_csv(path, s);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  CHECK(line == "x0,x1,x2,x3,x4,x5,x6,x7,x8,x9,y");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 5);
  std::filesystem::remove(path);
}
