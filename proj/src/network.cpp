#include "pdqn/network.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pdqn {

namespace {

constexpr double kWeightTol = 1e-12;

std::string pair_str(int i, int j) {
  std::ostringstream os;
  os << "(" << i << ", " << j << ")";
  return os.str();
}

}  // namespace

Topology Topology::from_edges(int n, std::vector<std::pair<int, int>> edges) {
  if (n < 1) throw std::invalid_argument("topology needs at least one node");
  std::set<std::pair<int, int>> unique;
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw std::invalid_argument("edge " + pair_str(a, b) + " references a node outside [0, n)");
    if (a == b) throw std::invalid_argument("self loop on node " + std::to_string(a) + " is not an edge");
    unique.emplace(std::min(a, b), std::max(a, b));
  }
  Topology t;
  t.n_ = n;
  t.edges_.assign(unique.begin(), unique.end());
  t.neighborhoods_.assign(static_cast<std::size_t>(n), {});
  for (int i = 0; i < n; ++i) t.neighborhoods_[static_cast<std::size_t>(i)].push_back(i);
  for (auto [a, b] : t.edges_) {
    t.neighborhoods_[static_cast<std::size_t>(a)].push_back(b);
    t.neighborhoods_[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& nb : t.neighborhoods_) std::sort(nb.begin(), nb.end());
  return t;
}

int Topology::local_index(int i, int j) const {
  const auto& nb = neighborhoods_[static_cast<std::size_t>(i)];
  auto it = std::lower_bound(nb.begin(), nb.end(), j);
  if (it == nb.end() || *it != j) return -1;
  return static_cast<int>(it - nb.begin());
}

bool Topology::connected() const {
  if (n_ == 0) return false;
  std::vector<bool> seen(static_cast<std::size_t>(n_), false);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = true;
  int count = 1;
  while (!frontier.empty()) {
    int i = frontier.front();
    frontier.pop();
    for (int j : neighborhood(i)) {
      if (!seen[static_cast<std::size_t>(j)]) {
        seen[static_cast<std::size_t>(j)] = true;
        ++count;
        frontier.push(j);
      }
    }
  }
  return count == n_;
}

Topology build_d_regular_cycle(int n, int d) {
  if (d % 2 != 0)
    throw std::invalid_argument("d-regular cycle requires an even degree d, got " + std::to_string(d));
  if (d < 2) throw std::invalid_argument("d-regular cycle requires d >= 2");
  if (d >= n)
    throw std::invalid_argument("d-regular cycle requires d <= n - 1 (d = " + std::to_string(d) +
                                ", n = " + std::to_string(n) + ")");
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int k = 1; k <= d / 2; ++k) edges.emplace_back(i, (i + k) % n);
  return Topology::from_edges(n, std::move(edges));
}

WeightMatrix::WeightMatrix(Topology topology, Matrix weights)
    : topology_(std::move(topology)), w_(std::move(weights)) {
  const int n = topology_.size();
  if (w_.rows() != n || w_.cols() != n)
    throw std::invalid_argument("weight matrix dimensions do not match the topology");
  rows_.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j : topology_.neighborhood(i)) rows_[static_cast<std::size_t>(i)].push_back(w_(i, j));
}

WeightMatrix metropolis_weights(const Topology& t) {
  if (!t.connected()) throw std::invalid_argument("Metropolis weights require a connected graph");
  const int n = t.size();
  Matrix w = Matrix::Zero(n, n);
  for (auto [a, b] : t.edges()) {
    double v = 1.0 / (1.0 + std::max(t.degree(a), t.degree(b)));
    w(a, b) = v;
    w(b, a) = v;
  }
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j : t.neighborhood(i))
      if (j != i) off += w(i, j);
    w(i, i) = 1.0 - off;
  }
  return WeightMatrix(t, std::move(w));
}

WeightDiagnostics validate_weight_matrix(const WeightMatrix& wm) {
  const Matrix& w = wm.dense();
  const Topology& t = wm.topology();
  const int n = t.size();
  if (w.rows() != n || w.cols() != n) throw std::invalid_argument("weight matrix dimensions do not match topology");

  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::abs(w(i, j) - w(j, i)) > kWeightTol)
        throw std::invalid_argument("weight matrix is not symmetric at " + pair_str(i, j));

  for (int i = 0; i < n; ++i) {
    double s = w.row(i).sum();
    if (std::abs(s - 1.0) > kWeightTol)
      throw std::invalid_argument("row " + std::to_string(i) + " of the weight matrix sums to " +
                                  std::to_string(s) + ", not 1");
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (w + w.transpose()), Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();  // ascending
  WeightDiagnostics diag;
  if (n > 1) {
    if (ev(n - 2) > 1.0 - kWeightTol)
      throw std::invalid_argument("null{I - W} is larger than span{1}: eigenvalue 1 of W is repeated");
    diag.second_eigenvalue_modulus = std::max(std::abs(ev(n - 2)), std::abs(ev(0)));
    if (diag.second_eigenvalue_modulus >= 1.0 - kWeightTol)
      throw std::invalid_argument("second largest eigenvalue modulus of W is not below 1");
  }

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      bool edge = t.adjacent(i, j);
      if (edge && !(w(i, j) > 0.0))
        throw std::invalid_argument("edge " + pair_str(i, j) + " has non-positive weight");
      if (!edge && std::abs(w(i, j)) > kWeightTol)
        throw std::invalid_argument("non-edge " + pair_str(i, j) + " has nonzero weight");
    }
  }

  diag.delta = w.diagonal().minCoeff();
  diag.Delta = w.diagonal().maxCoeff();
  if (!(diag.delta > 0.0)) throw std::invalid_argument("diagonal weights must be positive (delta <= 0)");
  if (!(diag.Delta < 1.0)) throw std::invalid_argument("diagonal weights must be below one (Delta >= 1)");
  return diag;
}

StackedVector::StackedVector(int n, int p, Vector data) : n_(n), p_(p), data_(std::move(data)) {
  if (data_.size() != static_cast<Eigen::Index>(n) * p)
    throw std::invalid_argument("stacked vector data does not have n * p entries");
}

StackedVector apply_weights(const WeightMatrix& w, const StackedVector& x) {
  const Topology& t = w.topology();
  if (x.blocks() != t.size()) throw std::invalid_argument("stacked vector block count does not match topology");
  StackedVector out(x.blocks(), x.block_dim());
  for (int i = 0; i < t.size(); ++i) {
    auto nb = t.neighborhood(i);
    auto wi = w.row(i);
    for (std::size_t k = 0; k < nb.size(); ++k) out.block(i) += wi[k] * x.block(nb[k]);
  }
  return out;
}

StackedVector apply_laplacian(const WeightMatrix& w, const StackedVector& x) {
  StackedVector zx = apply_weights(w, x);
  zx.flat() = x.flat() - zx.flat();
  return zx;
}

double smallest_nonzero_laplacian_eigenvalue(const WeightMatrix& w) {
  const int n = w.size();
  if (n < 2) throw std::invalid_argument("a single node has no nonzero Laplacian eigenvalue");
  Matrix lap = Matrix::Identity(n, n) - w.dense();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (lap + lap.transpose()), Eigen::EigenvaluesOnly);
  // The consensus direction gives the single zero eigenvalue of a valid W.
  return es.eigenvalues()(1);
}

nlohmann::json topology_to_json(const Topology& t) {
  nlohmann::json j;
  j["n"] = t.size();
  j["edges"] = nlohmann::json::array();
  for (auto [a, b] : t.edges()) j["edges"].push_back({a, b});
  return j;
}

Topology topology_from_json(const nlohmann::json& j) {
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  return Topology::from_edges(j.at("n").get<int>(), std::move(edges));
}

nlohmann::json weights_to_json(const WeightMatrix& w) {
  nlohmann::json j = topology_to_json(w.topology());
  j["symmetric"] = false;
  j["weights"] = nlohmann::json::array();
  const Matrix& d = w.dense();
  for (int i = 0; i < d.rows(); ++i)
    for (int k = 0; k < d.cols(); ++k)
      if (d(i, k) != 0.0) j["weights"].push_back({i, k, d(i, k)});
  return j;
}

WeightMatrix weights_from_json(const nlohmann::json& j) {
  Topology t = topology_from_json(j);
  if (!j.contains("weights")) return metropolis_weights(t);
  const int n = t.size();
  const bool symmetric = j.value("symmetric", true);
  Matrix w = Matrix::Zero(n, n);
  std::vector<bool> has_diag(static_cast<std::size_t>(n), false);
  for (const auto& e : j.at("weights")) {
    int a = e.at(0).get<int>();
    int b = e.at(1).get<int>();
    double v = e.at(2).get<double>();
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw std::invalid_argument("weight entry " + pair_str(a, b) + " outside [0, n)");
    w(a, b) = v;
    if (symmetric) w(b, a) = v;
    if (a == b) has_diag[static_cast<std::size_t>(a)] = true;
  }
  for (int i = 0; i < n; ++i) {
    if (has_diag[static_cast<std::size_t>(i)]) continue;
    w(i, i) = 0.0;
    w(i, i) = 1.0 - w.row(i).sum();
  }
  return WeightMatrix(std::move(t), std::move(w));
}

}  // namespace pdqn
