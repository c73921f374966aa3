#include <gtest/gtest.h>

#include <random>

#include "pdqn/network.hpp"
#include "test_util.hpp"

using namespace pdqn;

TEST(Topology, RegularCycleNeighborhoods) {
  Topology t = build_d_regular_cycle(20, 4);
  ASSERT_EQ(t.size(), 20);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(t.degree(i), 4);
    for (int s : {1, 2}) {
      EXPECT_TRUE(t.adjacent(i, (i + s) % 20));
      EXPECT_TRUE(t.adjacent(i, (i + 20 - s) % 20));
    }
    EXPECT_FALSE(t.adjacent(i, (i + 3) % 20));
  }
  EXPECT_TRUE(t.connected());
  EXPECT_EQ(t.edges().size(), 40u);
}

TEST(Topology, NeighborhoodIsSortedAndSelfInclusive) {
  Topology t = build_d_regular_cycle(6, 2);
  auto nb = t.neighborhood(0);
  ASSERT_EQ(nb.size(), 3u);
  EXPECT_EQ(nb[0], 0);
  EXPECT_EQ(nb[1], 1);
  EXPECT_EQ(nb[2], 5);
  EXPECT_EQ(t.local_index(0, 5), 2);
  EXPECT_EQ(t.local_index(0, 3), -1);
}

TEST(Topology, RejectsBadInput) {
  EXPECT_THROW(build_d_regular_cycle(5, 3), std::invalid_argument);
  EXPECT_THROW(build_d_regular_cycle(4, 4), std::invalid_argument);
  EXPECT_THROW(Topology::from_edges(3, {{0, 0}}), std::invalid_argument);
  EXPECT_THROW(Topology::from_edges(3, {{0, 3}}), std::invalid_argument);
}

TEST(Topology, DisconnectedGraphDetected) {
  Topology t = Topology::from_edges(4, {{0, 1}, {2, 3}});
  EXPECT_FALSE(t.connected());
  EXPECT_THROW(validate_weight_matrix(metropolis_weights(t)), std::invalid_argument);
}

TEST(Metropolis, HandValuesOnRing) {
  // every degree is 2: off-diagonal 1/3, diagonal 1/3
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(5, 2));
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(W(i, i), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(W(i, (i + 1) % 5), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(W(i, (i + 2) % 5), 0.0);
  }
}

TEST(Metropolis, HandValuesOnPath) {
  // path 0-1-2: degrees 1, 2, 1
  WeightMatrix W = metropolis_weights(Topology::from_edges(3, {{0, 1}, {1, 2}}));
  EXPECT_NEAR(W(0, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(W(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(W(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(W(0, 2), 0.0);
  WeightDiagnostics d = validate_weight_matrix(W);
  EXPECT_NEAR(d.delta, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(d.Delta, 2.0 / 3.0, 1e-15);
}

TEST(Metropolis, CycleDiagnostics) {
  WeightDiagnostics d = validate_weight_matrix(metropolis_weights(build_d_regular_cycle(20, 4)));
  EXPECT_NEAR(d.delta, 0.2, 1e-15);
  EXPECT_NEAR(d.Delta, 0.2, 1e-15);
  EXPECT_LT(d.second_eigenvalue_modulus, 1.0);
}

TEST(WeightValidation, AsymmetricRejected) {
  nlohmann::json j = {{"n", 3},
                      {"edges", {{0, 1}, {1, 2}}},
                      {"weights", {{0, 1, 0.5}, {1, 0, 0.25}, {1, 2, 0.25}}},
                      {"symmetric", false}};
  WeightMatrix W = weights_from_json(j);
  EXPECT_THROW(validate_weight_matrix(W), std::invalid_argument);
}

TEST(WeightValidation, WeightOffGraphRejected) {
  Topology t = build_d_regular_cycle(5, 2);
  Matrix M = metropolis_weights(t).dense();
  M(0, 2) = M(2, 0) = 0.1;
  M(0, 0) -= 0.1;
  M(2, 2) -= 0.1;
  EXPECT_THROW(validate_weight_matrix(WeightMatrix(t, M)), std::invalid_argument);
}

TEST(WeightValidation, RowSumRejected) {
  Topology t = build_d_regular_cycle(5, 2);
  Matrix M = metropolis_weights(t).dense();
  M(0, 0) += 0.01;
  EXPECT_THROW(validate_weight_matrix(WeightMatrix(t, M)), std::invalid_argument);
}

TEST(WeightJson, RoundTrip) {
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(8, 4));
  WeightMatrix back = weights_from_json(weights_to_json(W));
  EXPECT_EQ((back.dense() - W.dense()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(back.topology().edges(), W.topology().edges());
}

TEST(WeightJson, DefaultsToMetropolis) {
  nlohmann::json j = {{"n", 4}, {"edges", {{0, 1}, {1, 2}, {2, 3}, {3, 0}}}};
  WeightMatrix W = weights_from_json(j);
  EXPECT_NEAR(W(0, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NO_THROW(validate_weight_matrix(W));
}

TEST(Laplacian, MatchesDenseKronecker) {
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(6, 2));
  const int n = 6, p = 3;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  StackedVector x(n, p);
  for (int k = 0; k < n * p; ++k) x.flat()(k) = g(rng);
  Matrix L = testutil::dense_laplacian(W, p);
  EXPECT_LT((apply_laplacian(W, x).flat() - L * x.flat()).norm(), 1e-12 * x.flat().norm());
}

TEST(Laplacian, ConsensusVectorsInKernel) {
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(10, 4));
  StackedVector x(10, 2);
  for (int i = 0; i < 10; ++i) x.block(i) << 1.5, -2.0;
  EXPECT_LT(apply_laplacian(W, x).flat().norm(), 1e-14);
}

TEST(Laplacian, SmallestNonzeroEigenvalueOfRing) {
  // ring of 5 with weights 1/3: eigenvalues of I - W are (2/3)(1 - cos(2 pi k / 5))
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(5, 2));
  EXPECT_NEAR(smallest_nonzero_laplacian_eigenvalue(W), (2.0 / 3.0) * (1.0 - std::cos(2.0 * M_PI / 5.0)), 1e-12);
}
