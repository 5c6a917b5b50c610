#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "horolab/types.hpp"

namespace horolab {

// Spectral (operator 2-) norm.
inline double operator_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

// Matrix exponential, scaling-and-squaring with Pade approximants.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& m) {
  return m.exp();
}

inline Eigen::MatrixXd logm(const Eigen::MatrixXd& m) {
  return m.log();
}

// Gram-Schmidt against given inner product matrix G; columns of `vecs` are
// orthonormalized in order, near-dependent columns are dropped.
inline Eigen::MatrixXd gram_schmidt(const Eigen::MatrixXd& G,
                                    const Eigen::MatrixXd& vecs,
                                    double drop_tol = 1e-10) {
  const int d = static_cast<int>(vecs.rows());
  Eigen::MatrixXd out(d, vecs.cols());
  int kept = 0;
  for (int c = 0; c < vecs.cols(); ++c) {
    Eigen::VectorXd v = vecs.col(c);
    for (int k = 0; k < kept; ++k)
      v -= out.col(k) * (out.col(k).transpose() * G * v)(0);
    double nn = v.transpose() * G * v;
    if (nn < drop_tol) continue;
    out.col(kept++) = v / std::sqrt(nn);
  }
  return out.leftCols(kept);
}

}  // namespace horolab
