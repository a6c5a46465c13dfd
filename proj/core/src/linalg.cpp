#include "invbench/linalg.hpp"

#include <cmath>

#include <fmt/format.h>

#include "invbench/errors.hpp"

namespace invbench {

Vec sample_gaussian_vector(RngStream& stream, Eigen::Index dim, const Vec& mean, double var) {
  if (mean.size() != dim) {
    throw ConfigError(fmt::format("sample_gaussian_vector: mean has dim {}, expected {}", mean.size(), dim));
  }
  if (!(var >= 0.0)) throw ConfigError("sample_gaussian_vector: variance must be non-negative");
  const double sd = std::sqrt(var);
  Vec out(dim);
  for (Eigen::Index k = 0; k < dim; ++k) out[k] = mean[k] + sd * stream.normal();
  return out;
}

Mat sample_rotation(RngStream& stream, Eigen::Index d) {
  if (d < 1) throw ConfigError("sample_rotation: d must be >= 1");
  Mat g(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = stream.normal();
  }
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  const Mat& r = qr.matrixQR();
  // Fixing sign(diag(R)) > 0 makes the factorization unique and Q Haar-uniform.
  for (Eigen::Index j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

double orthogonality_error(const Mat& s) {
  const Mat gram = s.transpose() * s;
  return (gram - Mat::Identity(s.cols(), s.cols())).cwiseAbs().maxCoeff();
}

bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace invbench
