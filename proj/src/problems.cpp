#include "pdqn/problems.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace pdqn {

namespace {

// 1 / (1 + exp(-t)) without evaluating exp of a large positive argument.
double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(t)).
double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

void check_node(const Problem& problem, int i, const Vector& x) {
  if (i < 0 || i >= problem.nodes()) throw std::out_of_range("node index out of range");
  if (x.size() != problem.dim()) throw std::invalid_argument("local variable has wrong dimension");
}

}  // namespace

Problem::Problem(QuadraticProblem q) {
  if (q.diagonals.empty() || q.diagonals.size() != q.offsets.size())
    throw std::invalid_argument("quadratic problem needs matching, nonempty diagonal and offset lists");
  dim_ = static_cast<int>(q.diagonals.front().size());
  for (std::size_t i = 0; i < q.diagonals.size(); ++i) {
    if (q.diagonals[i].size() != dim_ || q.offsets[i].size() != dim_)
      throw std::invalid_argument("quadratic node " + std::to_string(i) + " has inconsistent dimension");
    if (!(q.diagonals[i].minCoeff() > 0.0))
      throw std::invalid_argument("quadratic node " + std::to_string(i) + " has a non-positive diagonal entry");
  }
  nodes_ = static_cast<int>(q.diagonals.size());
  data_ = std::move(q);
}

Problem::Problem(LogisticProblem l) {
  if (l.features.empty() || l.features.size() != l.labels.size())
    throw std::invalid_argument("logistic problem needs matching, nonempty feature and label lists");
  if (!(l.reg_weight > 0.0)) throw std::invalid_argument("logistic regularizer weight must be positive");
  dim_ = static_cast<int>(l.features.front().cols());
  for (std::size_t i = 0; i < l.features.size(); ++i) {
    if (l.features[i].cols() != dim_ || l.features[i].rows() != l.labels[i].size())
      throw std::invalid_argument("logistic node " + std::to_string(i) + " has inconsistent shapes");
    for (Eigen::Index k = 0; k < l.labels[i].size(); ++k)
      if (l.labels[i](k) != 1.0 && l.labels[i](k) != -1.0)
        throw std::invalid_argument("logistic labels must be -1 or +1");
  }
  nodes_ = static_cast<int>(l.features.size());
  data_ = std::move(l);
}

Problem generate_quadratic(int n, int p, int eta, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("quadratic generator needs n >= 1");
  if (p < 2) throw std::invalid_argument("quadratic generator needs p >= 2");
  if (eta < 0) throw std::invalid_argument("condition exponent eta must be nonnegative");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> exponent(0, eta);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int large = (p + 1) / 2;
  QuadraticProblem q;
  for (int i = 0; i < n; ++i) {
    Vector a(p);
    Vector b(p);
    for (int k = 0; k < p; ++k) {
      int e = exponent(rng);
      a(k) = std::pow(10.0, k < large ? e : -e);
    }
    for (int k = 0; k < p; ++k) b(k) = unit(rng);
    q.diagonals.push_back(std::move(a));
    q.offsets.push_back(std::move(b));
  }
  return Problem(std::move(q));
}

Problem generate_logistic(int n, int p, int q, double mean, double std_pos, double std_neg, double reg_weight,
                          std::uint64_t seed) {
  if (n < 1 || p < 1) throw std::invalid_argument("logistic generator needs n >= 1 and p >= 1");
  if (q < 1) throw std::invalid_argument("logistic generator needs q >= 1 samples per node");
  if (!(reg_weight > 0.0)) throw std::invalid_argument("logistic regularizer weight must be positive");
  if (!(std_pos > 0.0) || !(std_neg > 0.0)) throw std::invalid_argument("class standard deviations must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> pos(mean, std_pos);
  std::normal_distribution<double> neg(-mean, std_neg);
  LogisticProblem l;
  l.reg_weight = reg_weight;
  for (int i = 0; i < n; ++i) {
    Matrix u(q, p);
    Vector v(q);
    for (int s = 0; s < q; ++s) {
      const bool positive = s % 2 == 0;
      v(s) = positive ? 1.0 : -1.0;
      for (int k = 0; k < p; ++k) u(s, k) = positive ? pos(rng) : neg(rng);
    }
    l.features.push_back(std::move(u));
    l.labels.push_back(std::move(v));
  }
  return Problem(std::move(l));
}

double local_value(const Problem& problem, int i, const Vector& x) {
  check_node(problem, i, x);
  const auto idx = static_cast<std::size_t>(i);
  if (problem.is_quadratic()) {
    const auto& q = problem.quadratic();
    return 0.5 * x.dot(q.diagonals[idx].cwiseProduct(x)) + q.offsets[idx].dot(x);
  }
  const auto& l = problem.logistic();
  Vector margins = l.labels[idx].cwiseProduct(l.features[idx] * x);
  double value = 0.5 * l.reg_weight / problem.nodes() * x.squaredNorm();
  for (Eigen::Index s = 0; s < margins.size(); ++s) value += softplus(-margins(s));
  return value;
}

Vector local_gradient(const Problem& problem, int i, const Vector& x) {
  check_node(problem, i, x);
  const auto idx = static_cast<std::size_t>(i);
  if (problem.is_quadratic()) {
    const auto& q = problem.quadratic();
    return q.diagonals[idx].cwiseProduct(x) + q.offsets[idx];
  }
  const auto& l = problem.logistic();
  const Matrix& u = l.features[idx];
  const Vector& v = l.labels[idx];
  Vector margins = v.cwiseProduct(u * x);
  Vector coeff(margins.size());
  for (Eigen::Index s = 0; s < margins.size(); ++s) coeff(s) = -v(s) * sigmoid(-margins(s));
  return l.reg_weight / problem.nodes() * x + u.transpose() * coeff;
}

Matrix local_hessian(const Problem& problem, int i, const Vector& x) {
  check_node(problem, i, x);
  const auto idx = static_cast<std::size_t>(i);
  if (problem.is_quadratic()) return problem.quadratic().diagonals[idx].asDiagonal();
  const auto& l = problem.logistic();
  const Matrix& u = l.features[idx];
  Vector margins = l.labels[idx].cwiseProduct(u * x);
  Vector curv(margins.size());
  for (Eigen::Index s = 0; s < margins.size(); ++s) {
    double sg = sigmoid(margins(s));
    curv(s) = sg * (1.0 - sg);
  }
  Matrix h = u.transpose() * curv.asDiagonal() * u;
  h.diagonal().array() += l.reg_weight / problem.nodes();
  return 0.5 * (h + h.transpose());
}

double aggregate_value(const Problem& problem, const Vector& x) {
  double v = 0.0;
  for (int i = 0; i < problem.nodes(); ++i) v += local_value(problem, i, x);
  return v;
}

Vector aggregate_gradient(const Problem& problem, const Vector& x) {
  Vector g = Vector::Zero(problem.dim());
  for (int i = 0; i < problem.nodes(); ++i) g += local_gradient(problem, i, x);
  return g;
}

ReferenceSolution centralized_solution(const Problem& problem) {
  ReferenceSolution sol;
  const int p = problem.dim();
  if (problem.is_quadratic()) {
    const auto& q = problem.quadratic();
    Vector a = Vector::Zero(p);
    Vector b = Vector::Zero(p);
    for (int i = 0; i < problem.nodes(); ++i) {
      a += q.diagonals[static_cast<std::size_t>(i)];
      b += q.offsets[static_cast<std::size_t>(i)];
    }
    sol.x_star = -b.cwiseQuotient(a);
    sol.method = ReferenceSolution::Method::closed_form;
  } else {
    sol.method = ReferenceSolution::Method::newton_oracle;
    Vector x = Vector::Zero(p);
    double fx = aggregate_value(problem, x);
    bool certified = false;
    for (int it = 0; it < 500; ++it) {
      Vector g = aggregate_gradient(problem, x);
      if (g.norm() <= 1e-12 * std::max(1.0, x.norm())) {
        certified = true;
        break;
      }
      Matrix h = Matrix::Zero(p, p);
      for (int i = 0; i < problem.nodes(); ++i) h += local_hessian(problem, i, x);
      Eigen::LLT<Matrix> llt(h);
      if (llt.info() != Eigen::Success) throw std::runtime_error("internal error: aggregate Hessian not positive definite");
      Vector step = -llt.solve(g);
      double t = 1.0;
      Vector trial = x + step;
      double ft = aggregate_value(problem, trial);
      // Armijo backtracking; near the optimum function values stop resolving
      // progress, so fall back to the full Newton step there.
      while (ft > fx + 1e-4 * t * g.dot(step) && t > 1e-10) {
        t *= 0.5;
        trial = x + t * step;
        ft = aggregate_value(problem, trial);
      }
      if (t <= 1e-10) {
        trial = x + step;
        ft = aggregate_value(problem, trial);
      }
      x = trial;
      fx = ft;
    }
    if (!certified)
      throw std::runtime_error("internal error: Newton oracle did not reach gradient norm 1e-12 max(1, ||x||)");
    sol.x_star = x;
  }
  sol.f_star = aggregate_value(problem, sol.x_star);
  sol.residual_norm = aggregate_gradient(problem, sol.x_star).norm();
  return sol;
}

Vector local_argmin_L0(const Problem& problem, int i, const Vector& y) {
  check_node(problem, i, y);
  if (!problem.is_quadratic())
    throw std::invalid_argument(
        "local Lagrangian minimizer has no closed form for logistic objectives; dual ascent would need an inner "
        "optimization at every iteration");
  const auto idx = static_cast<std::size_t>(i);
  const auto& q = problem.quadratic();
  return -(q.offsets[idx] + y).cwiseQuotient(q.diagonals[idx]);
}

ConvexityBounds convexity_bounds(const Problem& problem) {
  ConvexityBounds cb;
  if (problem.is_quadratic()) {
    const auto& q = problem.quadratic();
    cb.mu = q.diagonals.front().minCoeff();
    cb.L = q.diagonals.front().maxCoeff();
    for (const auto& a : q.diagonals) {
      cb.mu = std::min(cb.mu, a.minCoeff());
      cb.L = std::max(cb.L, a.maxCoeff());
    }
    return cb;
  }
  const auto& l = problem.logistic();
  cb.mu = l.reg_weight / problem.nodes();
  double worst = 0.0;
  for (const auto& u : l.features) {
    Matrix gram = 0.25 * u.transpose() * u;
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    worst = std::max(worst, es.eigenvalues().maxCoeff());
  }
  cb.L = cb.mu + worst;
  return cb;
}

namespace {

nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const nlohmann::json& j) {
  auto raw = j.get<std::vector<double>>();
  return Eigen::Map<Vector>(raw.data(), static_cast<Eigen::Index>(raw.size()));
}

}  // namespace

nlohmann::json problem_to_json(const Problem& problem) {
  nlohmann::json j;
  j["family"] = problem.family();
  j["nodes"] = nlohmann::json::array();
  if (problem.is_quadratic()) {
    const auto& q = problem.quadratic();
    for (std::size_t i = 0; i < q.diagonals.size(); ++i)
      j["nodes"].push_back({{"diagonal", vec_json(q.diagonals[i])}, {"offset", vec_json(q.offsets[i])}});
  } else {
    const auto& l = problem.logistic();
    j["reg_weight"] = l.reg_weight;
    for (std::size_t i = 0; i < l.features.size(); ++i) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index s = 0; s < l.features[i].rows(); ++s) rows.push_back(vec_json(l.features[i].row(s).transpose()));
      j["nodes"].push_back({{"features", rows}, {"labels", vec_json(l.labels[i])}});
    }
  }
  return j;
}

Problem problem_from_json(const nlohmann::json& j) {
  const std::string family = j.at("family").get<std::string>();
  if (family == "quadratic") {
    QuadraticProblem q;
    for (const auto& node : j.at("nodes")) {
      q.diagonals.push_back(json_vec(node.at("diagonal")));
      q.offsets.push_back(json_vec(node.at("offset")));
    }
    return Problem(std::move(q));
  }
  if (family == "logistic") {
    LogisticProblem l;
    l.reg_weight = j.at("reg_weight").get<double>();
    for (const auto& node : j.at("nodes")) {
      const auto& rows = node.at("features");
      Matrix u(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t s = 0; s < rows.size(); ++s) u.row(static_cast<Eigen::Index>(s)) = json_vec(rows[s]).transpose();
      l.features.push_back(std::move(u));
      l.labels.push_back(json_vec(node.at("labels")));
    }
    return Problem(std::move(l));
  }
  throw std::invalid_argument("unknown problem family '" + family + "'");
}

std::string problem_digest(const Problem& problem) {
  std::string text = problem_to_json(problem).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pdqn
