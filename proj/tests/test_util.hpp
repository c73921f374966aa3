#pragma once

#include <random>

#include "pdqn/network.hpp"

namespace testutil {

inline pdqn::Matrix kron_identity(const pdqn::Matrix& A, int p) {
  pdqn::Matrix out = pdqn::Matrix::Zero(A.rows() * p, A.cols() * p);
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) out.block(i * p, j * p, p, p) = A(i, j) * pdqn::Matrix::Identity(p, p);
  return out;
}

inline pdqn::Matrix dense_laplacian(const pdqn::WeightMatrix& W, int p) {
  return kron_identity(pdqn::Matrix::Identity(W.size(), W.size()) - W.dense(), p);
}

inline pdqn::Vector random_vector(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> g;
  pdqn::Vector v(dim);
  for (int k = 0; k < dim; ++k) v(k) = g(rng);
  return v;
}

inline pdqn::StackedVector random_stacked(std::mt19937_64& rng, int n, int p) {
  return pdqn::StackedVector(n, p, random_vector(rng, n * p));
}

/// Symmetric positive definite with spectrum drawn from [lo, hi].
inline pdqn::Matrix random_spd(std::mt19937_64& rng, int dim, double lo, double hi) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(lo, hi);
  pdqn::Matrix Q = pdqn::Matrix::NullaryExpr(dim, dim, [&]() { return g(rng); });
  Eigen::HouseholderQR<pdqn::Matrix> qr(Q);
  pdqn::Matrix O = qr.householderQ();
  pdqn::Vector ev(dim);
  for (int k = 0; k < dim; ++k) ev(k) = u(rng);
  pdqn::Matrix S = O * ev.asDiagonal() * O.transpose();
  return 0.5 * (S + S.transpose());
}

}  // namespace testutil
