#pragma once

#include <Eigen/Dense>

#include "invbench/rng.hpp"

namespace invbench {

// Dense 64-bit storage. Matrices are column-major; data matrices hold one
// example per row.
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// mean + sqrt(var) * z, z standard normal per coordinate.
Vec sample_gaussian_vector(RngStream& stream, Eigen::Index dim, const Vec& mean, double var);

/// Haar-distributed orthogonal d x d matrix (determinant may be -1).
Mat sample_rotation(RngStream& stream, Eigen::Index d);

/// max |(S^T S - I)_ij|
double orthogonality_error(const Mat& s);

bool all_finite(const Vec& v);

}  // namespace invbench
