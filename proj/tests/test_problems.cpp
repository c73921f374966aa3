#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "pdqn/problems.hpp"
#include "test_util.hpp"

using namespace pdqn;

namespace {

Vector fd_gradient(const Problem& pr, int i, const Vector& x, double h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vector a = x, b = x;
    a(k) += h;
    b(k) -= h;
    g(k) = (local_value(pr, i, a) - local_value(pr, i, b)) / (2 * h);
  }
  return g;
}

Matrix fd_hessian(const Problem& pr, int i, const Vector& x, double h = 1e-6) {
  Matrix H(x.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vector a = x, b = x;
    a(k) += h;
    b(k) -= h;
    H.col(k) = (local_gradient(pr, i, a) - local_gradient(pr, i, b)) / (2 * h);
  }
  return H;
}

}  // namespace

TEST(Quadratic, DiagonalStructure) {
  Problem pr = generate_quadratic(20, 5, 2, 7);
  const std::set<double> big{1.0, 10.0, 100.0}, small{1.0, 0.1, 0.01};
  for (const Vector& a : pr.quadratic().diagonals) {
    ASSERT_EQ(a.size(), 5);
    for (int k = 0; k < 3; ++k) EXPECT_TRUE(big.count(a(k))) << a(k);
    for (int k = 3; k < 5; ++k) EXPECT_TRUE(small.count(a(k))) << a(k);
  }
  for (const Vector& b : pr.quadratic().offsets) {
    EXPECT_GE(b.minCoeff(), 0.0);
    EXPECT_LE(b.maxCoeff(), 1.0);
  }
}

TEST(Quadratic, EtaZeroIsIdentityCurvature) {
  Problem pr = generate_quadratic(4, 3, 0, 1);
  for (const Vector& a : pr.quadratic().diagonals) EXPECT_EQ(a, Vector::Ones(3));
  ConvexityBounds cb = convexity_bounds(pr);
  EXPECT_DOUBLE_EQ(cb.mu, 1.0);
  EXPECT_DOUBLE_EQ(cb.L, 1.0);
}

TEST(Quadratic, DeterministicPerSeed) {
  EXPECT_EQ(problem_digest(generate_quadratic(20, 5, 1, 3)), problem_digest(generate_quadratic(20, 5, 1, 3)));
  EXPECT_NE(problem_digest(generate_quadratic(20, 5, 1, 3)), problem_digest(generate_quadratic(20, 5, 1, 4)));
}

TEST(Quadratic, GradientAndHessianMatchFiniteDifferences) {
  Problem pr = generate_quadratic(5, 4, 1, 2);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) {
    Vector x = testutil::random_vector(rng, 4);
    EXPECT_LT((local_gradient(pr, i, x) - fd_gradient(pr, i, x)).norm(), 1e-7);
    EXPECT_LT((local_hessian(pr, i, x) - fd_hessian(pr, i, x)).norm(), 1e-7);
  }
}

TEST(Quadratic, ClosedFormSolution) {
  Problem pr = generate_quadratic(20, 5, 1, 1);
  ReferenceSolution ref = centralized_solution(pr);
  EXPECT_EQ(ref.method, ReferenceSolution::Method::closed_form);
  EXPECT_LT(aggregate_gradient(pr, ref.x_star).norm(), 1e-12);
  // coordinate-wise oracle: x*_k = -sum b_ik / sum a_ik
  const auto& q = pr.quadratic();
  for (int k = 0; k < 5; ++k) {
    double a = 0, b = 0;
    for (int i = 0; i < 20; ++i) {
      a += q.diagonals[static_cast<std::size_t>(i)](k);
      b += q.offsets[static_cast<std::size_t>(i)](k);
    }
    EXPECT_NEAR(ref.x_star(k), -b / a, 1e-14);
  }
}

TEST(Quadratic, LocalArgminIsStationary) {
  Problem pr = generate_quadratic(3, 4, 1, 9);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 3; ++i) {
    Vector y = testutil::random_vector(rng, 4);
    Vector x = local_argmin_L0(pr, i, y);
    EXPECT_LT((local_gradient(pr, i, x) + y).norm(), 1e-13);
  }
}

TEST(Logistic, BalancedLabelsAndShapes) {
  Problem pr = generate_logistic(4, 3, 10, 3.0, 1.0, 1.0, 1e-4, 5);
  for (int i = 0; i < 4; ++i) {
    const auto& l = pr.logistic();
    EXPECT_EQ(l.features[static_cast<std::size_t>(i)].rows(), 10);
    EXPECT_EQ(l.features[static_cast<std::size_t>(i)].cols(), 3);
    EXPECT_DOUBLE_EQ(l.labels[static_cast<std::size_t>(i)].sum(), 0.0);
  }
  EXPECT_THROW(local_argmin_L0(pr, 0, Vector::Zero(3)), std::exception);
}

TEST(Logistic, GradientAndHessianMatchFiniteDifferences) {
  Problem pr = generate_logistic(3, 4, 20, 3.0, 1.0, 1.0, 1e-2, 3);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 3; ++i) {
    Vector x = 0.3 * testutil::random_vector(rng, 4);
    EXPECT_LT((local_gradient(pr, i, x) - fd_gradient(pr, i, x)).norm(), 1e-5);
    EXPECT_LT((local_hessian(pr, i, x) - fd_hessian(pr, i, x)).norm(), 1e-5);
  }
}

TEST(Logistic, NewtonOracleCertificate) {
  Problem pr = generate_logistic(20, 4, 100, 3.0, 1.0, 1.0, 1e-4, 1);
  ReferenceSolution ref = centralized_solution(pr);
  EXPECT_EQ(ref.method, ReferenceSolution::Method::newton_oracle);
  EXPECT_LE(ref.residual_norm, 1e-12 * std::max(1.0, ref.x_star.norm()));
  ConvexityBounds cb = convexity_bounds(pr);
  EXPECT_GT(cb.mu, 0.0);
  EXPECT_GT(cb.L, cb.mu);
}

TEST(Logistic, ValueAtOriginIsLogTwoPerSample) {
  Problem pr = generate_logistic(2, 3, 8, 3.0, 1.0, 1.0, 1e-4, 2);
  EXPECT_NEAR(local_value(pr, 0, Vector::Zero(3)), 8 * std::log(2.0), 1e-12);
}

TEST(ProblemJson, RoundTripKeepsDigest) {
  for (const Problem& pr : {generate_quadratic(6, 3, 1, 2), generate_logistic(4, 2, 6, 3.0, 1.0, 1.0, 1e-4, 2)}) {
    Problem back = problem_from_json(problem_to_json(pr));
    EXPECT_EQ(problem_digest(back), problem_digest(pr));
  }
}
