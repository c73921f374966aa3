#include "pdqn/quasi_newton.hpp"

#include <cmath>
#include <stdexcept>

namespace pdqn {

namespace {

bool finite(const Matrix& m) { return m.allFinite(); }

double relative_residual(const Vector& got, const Vector& want) {
  double scale = want.norm();
  double err = (got - want).norm();
  return scale > 0.0 ? err / scale : err;
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

CurvatureUpdate bfgs_update_primal(const Matrix& B, const Vector& u, const Vector& r, double skip_tol) {
  if (!finite(B) || !u.allFinite() || !r.allFinite())
    throw std::invalid_argument("primal BFGS update received non-finite input");
  if (u.size() != B.rows() || r.size() != B.rows()) throw std::invalid_argument("primal BFGS dimension mismatch");
  CurvatureUpdate out{B, false, 0.0};
  const double ur = u.dot(r);
  if (!(ur > skip_tol * u.norm() * r.norm())) return out;
  const Vector Bu = B * u;
  const double uBu = u.dot(Bu);
  if (!(uBu > 0.0)) return out;
  out.matrix = symmetrized(B + r * r.transpose() / ur - Bu * Bu.transpose() / uBu);
  out.accepted = true;
  out.secant_residual = relative_residual(out.matrix * u, r);
  return out;
}

Matrix neumann_block(const Matrix& B_i, double alpha, double self_weight) {
  Matrix d = B_i;
  d.diagonal().array() += 2.0 * alpha * (1.0 - self_weight);
  return d;
}

StackedVector neumann_descent(const StackedVector& g, std::span<const Matrix> B, const WeightMatrix& W,
                              double alpha, int K) {
  const Topology& t = W.topology();
  const int n = t.size();
  if (K < 0) throw std::invalid_argument("series depth K must be nonnegative");
  if (g.blocks() != n || static_cast<int>(B.size()) != n) throw std::invalid_argument("neumann_descent dimension mismatch");
  std::vector<Eigen::LLT<Matrix>> factors;
  factors.reserve(static_cast<std::size_t>(n));
  StackedVector d(n, g.block_dim());
  for (int i = 0; i < n; ++i) {
    factors.emplace_back(neumann_block(B[static_cast<std::size_t>(i)], alpha, W.self_weight(i)));
    if (factors.back().info() != Eigen::Success) throw std::invalid_argument("splitting block D_i is not positive definite");
    d.block(i) = -factors.back().solve(Vector(g.block(i)));
  }
  for (int k = 0; k < K; ++k) {
    StackedVector next(n, g.block_dim());
    for (int i = 0; i < n; ++i) {
      auto nb = t.neighborhood(i);
      auto wi = W.row(i);
      Vector mixed = Vector::Zero(g.block_dim());
      for (std::size_t s = 0; s < nb.size(); ++s)
        if (nb[s] != i) mixed += wi[s] * d.block(nb[s]);
      Vector coupling = neumann_coupling(alpha, W.self_weight(i), d.block(i), mixed);
      next.block(i) = factors[static_cast<std::size_t>(i)].solve(Vector(coupling - g.block(i)));
    }
    d = std::move(next);
  }
  return d;
}

Matrix assemble_truncated_primal_inverse(std::span<const Matrix> B, const WeightMatrix& W, double alpha, int K) {
  const int n = W.size();
  if (static_cast<int>(B.size()) != n || n == 0) throw std::invalid_argument("curvature block count mismatch");
  const int p = static_cast<int>(B.front().rows());
  const Eigen::Index np = static_cast<Eigen::Index>(n) * p;
  Matrix d_inv = Matrix::Zero(np, np);
  Matrix m = Matrix::Zero(np, np);
  for (int i = 0; i < n; ++i) {
    d_inv.block(i * p, i * p, p, p) = neumann_block(B[static_cast<std::size_t>(i)], alpha, W.self_weight(i)).inverse();
    for (int j = 0; j < n; ++j) {
      double coef = i == j ? alpha * (1.0 - W.self_weight(i)) : alpha * W(i, j);
      if (coef != 0.0) m.block(i * p, j * p, p, p).diagonal().setConstant(coef);
    }
  }
  const Matrix step = d_inv * m;
  Matrix term = d_inv;
  Matrix sum = d_inv;
  for (int k = 1; k <= K; ++k) {
    term = step * term;
    sum += term;
  }
  return symmetrized(sum);
}

EigenInterval primal_inverse_bounds(double psi, double Psi, double delta, double Delta, double alpha, int K) {
  const double spread = 2.0 * alpha * (1.0 - delta);
  const double rho = spread / (spread + psi);
  EigenInterval out;
  out.lower = 1.0 / (spread + Psi);
  out.upper = (1.0 - std::pow(rho, K + 1)) / ((1.0 - rho) * (2.0 * alpha * (1.0 - Delta) + psi));
  return out;
}

EigenInterval dual_inverse_bounds(double Gamma, double gamma, int n) { return {Gamma, Gamma + n / gamma}; }

Matrix clip_eigenvalues(const Matrix& S, double lo, double hi) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(S));
  Vector ev = es.eigenvalues().cwiseMax(lo).cwiseMin(hi);
  return symmetrized(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

Vector neighborhood_normalization(std::span<const int> neighborhood_sizes, int p) {
  Vector u(static_cast<Eigen::Index>(neighborhood_sizes.size()) * p);
  for (std::size_t k = 0; k < neighborhood_sizes.size(); ++k)
    u.segment(static_cast<Eigen::Index>(k) * p, p).setConstant(1.0 / neighborhood_sizes[k]);
  return u;
}

VariationPair dual_variations(const Vector& y_new, const Vector& y_old, const Vector& h_new, const Vector& h_old,
                              double gamma, const Vector& upsilon) {
  const auto len = upsilon.size();
  if (y_new.size() != len || y_old.size() != len || h_new.size() != len || h_old.size() != len)
    throw std::invalid_argument("dual variations need vectors of neighborhood dimension");
  VariationPair pair;
  pair.variable = upsilon.cwiseProduct(y_new - y_old);
  pair.gradient = (h_new - h_old) - gamma * pair.variable;
  return pair;
}

CurvatureUpdate bfgs_update_dual(const Matrix& C, const VariationPair& pair, double gamma, double skip_tol) {
  const Vector& v = pair.variable;
  const Vector& s = pair.gradient;
  if (!finite(C) || !v.allFinite() || !s.allFinite()) throw std::invalid_argument("dual BFGS update received non-finite input");
  if (v.size() != C.rows() || s.size() != C.rows()) throw std::invalid_argument("dual BFGS dimension mismatch");
  CurvatureUpdate out{C, false, 0.0};
  const double vs = v.dot(s);
  if (!(vs > skip_tol * v.norm() * s.norm())) return out;
  const Vector Cv = C * v;
  const double vCv = v.dot(Cv);
  if (!(vCv > 0.0)) return out;
  Matrix next = C + s * s.transpose() / vs - Cv * Cv.transpose() / vCv;
  next.diagonal().array() += gamma;
  out.matrix = symmetrized(next);
  out.accepted = true;
  out.secant_residual = relative_residual(out.matrix * v, s + gamma * v);
  return out;
}

Vector dual_neighborhood_direction(const Matrix& C, const Vector& h_nbhd, double Gamma, const Vector& upsilon) {
  Eigen::LLT<Matrix> llt(C);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("dual curvature block is not positive definite");
  return llt.solve(h_nbhd) + Gamma * upsilon.cwiseProduct(h_nbhd);
}

Vector gather_neighborhood(const StackedVector& x, const Topology& topology, int i) {
  auto nb = topology.neighborhood(i);
  const int p = x.block_dim();
  Vector out(static_cast<Eigen::Index>(nb.size()) * p);
  for (std::size_t k = 0; k < nb.size(); ++k) out.segment(static_cast<Eigen::Index>(k) * p, p) = x.block(nb[k]);
  return out;
}

namespace {

Vector sizes_normalization(const Topology& t, int i, int p) {
  std::vector<int> sizes;
  for (int j : t.neighborhood(i)) sizes.push_back(t.neighborhood_size(j));
  return neighborhood_normalization(sizes, p);
}

}  // namespace

Matrix assemble_global_dual_inverse(std::span<const Matrix> C, double Gamma, const Topology& topology, int p) {
  const int n = topology.size();
  if (static_cast<int>(C.size()) != n) throw std::invalid_argument("dual curvature block count mismatch");
  const Eigen::Index np = static_cast<Eigen::Index>(n) * p;
  Matrix h_inv = Gamma * Matrix::Identity(np, np);
  for (int i = 0; i < n; ++i) {
    Matrix c_inv = C[static_cast<std::size_t>(i)].inverse();
    auto nb = topology.neighborhood(i);
    for (std::size_t a = 0; a < nb.size(); ++a)
      for (std::size_t b = 0; b < nb.size(); ++b)
        h_inv.block(nb[a] * p, nb[b] * p, p, p) +=
            c_inv.block(static_cast<Eigen::Index>(a) * p, static_cast<Eigen::Index>(b) * p, p, p);
  }
  return symmetrized(h_inv);
}

StackedVector dual_direction(std::span<const Matrix> C, const StackedVector& h, double Gamma,
                             const Topology& topology) {
  const int n = topology.size();
  const int p = h.block_dim();
  StackedVector e(n, p);
  for (int i = 0; i < n; ++i) {
    Vector local = dual_neighborhood_direction(C[static_cast<std::size_t>(i)], gather_neighborhood(h, topology, i),
                                               Gamma, sizes_normalization(topology, i, p));
    auto nb = topology.neighborhood(i);
    for (std::size_t k = 0; k < nb.size(); ++k) e.block(nb[k]) += local.segment(static_cast<Eigen::Index>(k) * p, p);
  }
  return e;
}

}  // namespace pdqn
