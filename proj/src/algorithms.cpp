#include "pdqn/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace pdqn {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::pdqn: return "pdqn";
    case Variant::da: return "da";
    case Variant::dgd: return "dgd";
    case Variant::extra: return "extra";
    case Variant::esom: return "esom";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::pdqn, Variant::da, Variant::dgd, Variant::extra, Variant::esom})
    if (variant_name(v) == name) return v;
  throw std::invalid_argument("unknown variant '" + name + "' (expected pdqn, da, dgd, extra or esom)");
}

bool is_exact(Variant v) { return v != Variant::dgd; }

std::vector<std::string> AlgorithmConfig::violations() const {
  std::vector<std::string> out;
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) out.push_back(std::string(name) + " must be a positive finite number");
  };
  positive(alpha, "alpha");
  positive(eps_d, "eps_d");
  positive(gamma, "gamma");
  positive(Gamma, "Gamma");
  positive(primal_step, "primal_step");
  positive(initial_curvature, "initial_curvature");
  if (K < 0) out.push_back("K must be >= 0");
  if (Gamma > 1.0) out.push_back("Gamma must be <= 1 (dual bound precondition)");
  if (clip_curvature && !(clip_lo > 0.0 && clip_lo < clip_hi)) out.push_back("clip range must satisfy 0 < clip_lo < clip_hi");
  if (!(variation_floor >= 0.0)) out.push_back("variation_floor must be >= 0");
  return out;
}

void AlgorithmConfig::validate() const {
  auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid algorithm config:";
  for (const auto& s : v) msg += "\n  - " + s;
  throw std::invalid_argument(msg);
}

nlohmann::json config_to_json(const AlgorithmConfig& c) {
  return {{"variant", variant_name(c.variant)}, {"alpha", c.alpha},       {"eps_d", c.eps_d},
          {"K", c.K},                           {"gamma", c.gamma},       {"Gamma", c.Gamma},
          {"primal_step", c.primal_step},       {"clip_curvature", c.clip_curvature},
          {"clip_lo", c.clip_lo},               {"clip_hi", c.clip_hi},   {"variation_floor", c.variation_floor},
          {"initial_curvature", c.initial_curvature}};
}

AlgorithmConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("algorithm config must be an object");
  static const std::set<std::string> known = {"variant", "alpha",          "eps_d",   "K",       "gamma",
                                              "Gamma",   "primal_step",    "clip_curvature", "clip_lo",
                                              "clip_hi", "variation_floor", "initial_curvature", "tune", "grid"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown algorithm config key '" + key + "'");
  AlgorithmConfig c;
  if (j.contains("variant")) c.variant = variant_from_name(j.at("variant").get<std::string>());
  auto num = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  num("alpha", c.alpha);
  num("eps_d", c.eps_d);
  num("gamma", c.gamma);
  num("Gamma", c.Gamma);
  num("primal_step", c.primal_step);
  num("clip_lo", c.clip_lo);
  num("clip_hi", c.clip_hi);
  num("variation_floor", c.variation_floor);
  num("initial_curvature", c.initial_curvature);
  if (j.contains("K")) c.K = j.at("K").get<int>();
  if (j.contains("clip_curvature")) c.clip_curvature = j.at("clip_curvature").get<bool>();
  return c;
}

int rounds_per_iteration(const AlgorithmConfig& c) {
  switch (c.variant) {
    case Variant::pdqn: return c.K + 5;
    case Variant::esom: return c.K + 3;
    case Variant::da: return 2;
    case Variant::dgd:
    case Variant::extra: return 1;
  }
  return 0;
}

std::vector<NodeState> initial_states(const Problem& problem, const WeightMatrix& W, const AlgorithmConfig& cfg,
                                      const StackedVector* x0, const StackedVector* y0) {
  const int n = problem.nodes();
  const int p = problem.dim();
  if (W.size() != n) throw std::invalid_argument("weight matrix and problem disagree on node count");
  std::vector<NodeState> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    NodeState& s = out[static_cast<std::size_t>(i)];
    s.x = x0 ? Vector(x0->block(i)) : Vector::Zero(p);
    s.y = y0 ? Vector(y0->block(i)) : Vector::Zero(p);
    s.B = cfg.initial_curvature * Matrix::Identity(p, p);
    const int dim = W.topology().neighborhood_size(i) * p;
    s.C = (1.0 + cfg.gamma) * Matrix::Identity(dim, dim);
    s.x_next = s.x;
    s.y_next = s.y;
  }
  return out;
}

std::vector<NodeState> saddle_states(const Problem& problem, const WeightMatrix& W, const AlgorithmConfig& cfg,
                                     const Vector& x_star) {
  const int n = problem.nodes();
  const int p = problem.dim();
  StackedVector x(n, p), y(n, p);
  for (int i = 0; i < n; ++i) {
    x.block(i) = x_star;
    y.block(i) = -local_gradient(problem, i, x_star);
  }
  auto out = initial_states(problem, W, cfg, &x, &y);
  for (int i = 0; i < n; ++i) {
    NodeState& s = out[static_cast<std::size_t>(i)];
    s.has_history = true;
    s.x_prev = s.x;
    s.y_prev = s.y;
    s.grad_prev = local_gradient(problem, i, x_star);
    s.mixed_prev = s.x;
    s.y_nbhd_prev = gather_neighborhood(y, W.topology(), i);
    s.h_nbhd_prev = Vector::Zero(s.y_nbhd_prev.size());
  }
  return out;
}

StackedVector gather_x(const std::vector<NodeState>& s) {
  const int n = static_cast<int>(s.size());
  StackedVector out(n, n ? static_cast<int>(s.front().x.size()) : 0);
  for (int i = 0; i < n; ++i) out.block(i) = s[static_cast<std::size_t>(i)].x;
  return out;
}

StackedVector gather_y(const std::vector<NodeState>& s) {
  const int n = static_cast<int>(s.size());
  StackedVector out(n, n ? static_cast<int>(s.front().y.size()) : 0);
  for (int i = 0; i < n; ++i) out.block(i) = s[static_cast<std::size_t>(i)].y;
  return out;
}

namespace {

nlohmann::json vec_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    double x = v[k];
    if (std::isfinite(x))
      a.push_back(x);
    else
      a.push_back(std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf"));
  }
  return a;
}

nlohmann::json mat_json(const Matrix& m) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec_json(m.row(r).transpose()));
  return a;
}

bool state_finite(const NodeState& s) {
  return s.x.allFinite() && s.y.allFinite() && s.B.allFinite() && s.C.allFinite();
}

}  // namespace

nlohmann::json states_to_json(const std::vector<NodeState>& states) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < states.size(); ++i) {
    const NodeState& s = states[i];
    out.push_back({{"node", i}, {"x", vec_json(s.x)}, {"y", vec_json(s.y)}, {"B", mat_json(s.B)}, {"C", mat_json(s.C)},
                   {"has_history", s.has_history}});
  }
  return out;
}

NodeView::NodeView(const Problem& problem, const WeightMatrix& W, int id) : problem_(&problem), id_(id) {
  const Topology& t = W.topology();
  auto nb = t.neighborhood(id);
  neighborhood_.assign(nb.begin(), nb.end());
  auto row = W.row(id);
  weights_.assign(row.begin(), row.end());
  self_weight_ = W.self_weight(id);
  self_index_ = t.local_index(id, id);
  std::vector<int> sizes;
  for (int j : neighborhood_) sizes.push_back(t.neighborhood_size(j));
  upsilon_ = neighborhood_normalization(sizes, problem.dim());
}

namespace {

/// sum_{j in n_i} w_ij v_j, own block from state, others from the mailbox.
Vector weighted_sum(const NodeView& view, const Vector& own, const Mailbox& box, bool include_self = true) {
  Vector acc = Vector::Zero(own.size());
  auto nb = view.neighborhood();
  auto w = view.weights();
  for (std::size_t k = 0; k < nb.size(); ++k) {
    if (nb[k] == view.id()) {
      if (include_self) acc += w[k] * own;
    } else {
      acc += w[k] * box.from(nb[k]);
    }
  }
  return acc;
}

Vector stack_neighborhood(const NodeView& view, const Vector& own, const Mailbox& box) {
  auto nb = view.neighborhood();
  const int p = view.dim();
  Vector out(static_cast<Eigen::Index>(nb.size()) * p);
  for (std::size_t k = 0; k < nb.size(); ++k)
    out.segment(static_cast<Eigen::Index>(k) * p, p) = nb[k] == view.id() ? own : box.from(nb[k]);
  return out;
}

Outbox broadcast(const Vector& v) {
  Outbox o;
  o.broadcast = v;
  return o;
}

void factor_block(NodeState& s, const Matrix& block) {
  s.D_factor.compute(block);
  if (s.D_factor.info() != Eigen::Success) throw std::runtime_error("splitting block is not positive definite");
}

/// Rounding-level variations carry no curvature information.
bool below_floor(const Vector& diff, const Vector& a, const Vector& b, double floor) {
  const double scale = std::max(a.norm(), b.norm());
  return diff.norm() <= floor * scale;
}

void commit(NodeState& s) {
  s.last_step = std::max((s.x_next - s.x).norm(), (s.y_next - s.y).norm());
  s.x_prev = s.x;
  s.y_prev = s.y;
  s.grad_prev = s.grad;
  s.mixed_prev = s.mixed;
  s.y_nbhd_prev = s.y_nbhd;
  s.h_nbhd_prev = s.h_nbhd;
  s.x = s.x_next;
  s.y = s.y_next;
  s.has_history = true;
}

/// Shared primal part of PD-QN and ESOM: the x round, K series rounds.
struct SeriesPrimal {
  const AlgorithmConfig* cfg;

  void begin(const NodeView& view, NodeState& s, const Mailbox& box, const Matrix& curvature) const {
    const double a = cfg->alpha;
    s.mixed = weighted_sum(view, s.x, box);
    s.g = s.grad + s.y + a * (s.x - s.mixed);
    factor_block(s, neumann_block(curvature, a, view.self_weight()));
    s.d = -s.D_factor.solve(s.g);
    if (cfg->K == 0) s.x_next = s.x + s.d;
  }

  void refine(const NodeView& view, NodeState& s, const Mailbox& box, bool last) const {
    Vector others = weighted_sum(view, s.d, box, false);
    s.d = s.D_factor.solve(Vector(neumann_coupling(cfg->alpha, view.self_weight(), s.d, others) - s.g));
    if (last) s.x_next = s.x + s.d;
  }
};

class PdqnProgram final : public NodeProgram {
 public:
  explicit PdqnProgram(const AlgorithmConfig& cfg) : cfg_(cfg), primal_{&cfg_} {}

  std::vector<Phase> schedule() const override {
    std::vector<Phase> out{{"y", Phase::Kind::broadcast}, {"x", Phase::Kind::broadcast}};
    for (int k = 1; k <= cfg_.K; ++k) out.push_back({"d" + std::to_string(k), Phase::Kind::broadcast});
    out.push_back({"x_next", Phase::Kind::broadcast});
    out.push_back({"h", Phase::Kind::broadcast});
    out.push_back({"e", Phase::Kind::scatter});
    return out;
  }

  Outbox emit(std::size_t phase, const NodeView& view, const NodeState& s) const override {
    const std::size_t K = static_cast<std::size_t>(cfg_.K);
    if (phase == 0) return broadcast(s.y);
    if (phase == 1) return broadcast(s.x);
    if (phase <= K + 1) return broadcast(s.d);
    if (phase == K + 2) return broadcast(s.x_next);
    if (phase == K + 3) return broadcast(s.h);
    Outbox o;
    const int p = view.dim();
    for (std::size_t k = 0; k < view.neighborhood().size(); ++k)
      o.scatter.push_back(s.e_nbhd.segment(static_cast<Eigen::Index>(k) * p, p));
    return o;
  }

  void absorb(std::size_t phase, const NodeView& view, NodeState& s, const Mailbox& box) const override {
    const std::size_t K = static_cast<std::size_t>(cfg_.K);
    if (phase == 0) {
      s.y_nbhd = stack_neighborhood(view, s.y, box);
    } else if (phase == 1) {
      s.grad = view.gradient(s.x);
      if (s.has_history) update_primal_curvature(s);
      primal_.begin(view, s, box, s.B);
    } else if (phase <= K + 1) {
      primal_.refine(view, s, box, phase == K + 1);
    } else if (phase == K + 2) {
      s.h = s.x_next - weighted_sum(view, s.x_next, box);
    } else if (phase == K + 3) {
      s.h_nbhd = stack_neighborhood(view, s.h, box);
      if (s.has_history) update_dual_curvature(view, s);
      s.e_nbhd = dual_neighborhood_direction(s.C, s.h_nbhd, cfg_.Gamma, view.upsilon());
    } else {
      const int p = view.dim();
      Vector e = s.e_nbhd.segment(static_cast<Eigen::Index>(view.self_index()) * p, p);
      for (int j : view.neighborhood())
        if (j != view.id()) e += box.from(j);
      s.y_next = s.y + cfg_.eps_d * cfg_.alpha * e;
    }
  }

  void finish(const NodeView&, NodeState& s) const override { commit(s); }

 private:
  void update_primal_curvature(NodeState& s) const {
    Vector u = s.x - s.x_prev;
    Vector r = s.grad - s.grad_prev;
    if (below_floor(u, s.x, s.x_prev, cfg_.variation_floor)) {
      ++s.audit.primal_skipped;
      return;
    }
    CurvatureUpdate up = bfgs_update_primal(s.B, u, r);
    if (!up.accepted) {
      ++s.audit.primal_skipped;
      return;
    }
    ++s.audit.primal_accepted;
    s.audit.max_primal_secant = std::max(s.audit.max_primal_secant, up.secant_residual);
    s.B = cfg_.clip_curvature ? clip_eigenvalues(up.matrix, cfg_.clip_lo, cfg_.clip_hi) : up.matrix;
  }

  void update_dual_curvature(const NodeView& view, NodeState& s) const {
    Vector dy = s.y_nbhd - s.y_nbhd_prev;
    if (below_floor(dy, s.y_nbhd, s.y_nbhd_prev, cfg_.variation_floor)) {
      ++s.audit.dual_skipped;
      return;
    }
    VariationPair pair = dual_variations(s.y_nbhd, s.y_nbhd_prev, s.h_nbhd, s.h_nbhd_prev, cfg_.gamma, view.upsilon());
    CurvatureUpdate up = bfgs_update_dual(s.C, pair, cfg_.gamma);
    if (!up.accepted) {
      ++s.audit.dual_skipped;
      return;
    }
    ++s.audit.dual_accepted;
    s.audit.max_dual_secant = std::max(s.audit.max_dual_secant, up.secant_residual);
    s.C = up.matrix;
  }

  AlgorithmConfig cfg_;
  SeriesPrimal primal_;
};

class EsomProgram final : public NodeProgram {
 public:
  explicit EsomProgram(const AlgorithmConfig& cfg) : cfg_(cfg), primal_{&cfg_} {}

  std::vector<Phase> schedule() const override {
    std::vector<Phase> out{{"x", Phase::Kind::broadcast}};
    for (int k = 1; k <= cfg_.K; ++k) out.push_back({"d" + std::to_string(k), Phase::Kind::broadcast});
    out.push_back({"x_next", Phase::Kind::broadcast});
    out.push_back({"y", Phase::Kind::broadcast});
    return out;
  }

  Outbox emit(std::size_t phase, const NodeView&, const NodeState& s) const override {
    const std::size_t K = static_cast<std::size_t>(cfg_.K);
    if (phase == 0) return broadcast(s.x);
    if (phase <= K) return broadcast(s.d);
    if (phase == K + 1) return broadcast(s.x_next);
    return broadcast(s.y_next);
  }

  void absorb(std::size_t phase, const NodeView& view, NodeState& s, const Mailbox& box) const override {
    const std::size_t K = static_cast<std::size_t>(cfg_.K);
    if (phase == 0) {
      s.grad = view.gradient(s.x);
      primal_.begin(view, s, box, view.hessian(s.x));
    } else if (phase <= K) {
      primal_.refine(view, s, box, phase == K);
    } else if (phase == K + 1) {
      s.h = s.x_next - weighted_sum(view, s.x_next, box);
      s.y_next = s.y + cfg_.eps_d * cfg_.alpha * s.h;
    } else {
      s.y_nbhd = stack_neighborhood(view, s.y_next, box);
    }
  }

  void finish(const NodeView&, NodeState& s) const override { commit(s); }

 private:
  AlgorithmConfig cfg_;
  SeriesPrimal primal_;
};

class DaProgram final : public NodeProgram {
 public:
  explicit DaProgram(const AlgorithmConfig& cfg) : cfg_(cfg) {}

  std::vector<Phase> schedule() const override {
    return {{"x_next", Phase::Kind::broadcast}, {"y", Phase::Kind::broadcast}};
  }

  void start(const NodeView& view, NodeState& s) const override {
    s.grad = view.gradient(s.x);
    s.x_next = view.argmin(s.y);
  }

  Outbox emit(std::size_t phase, const NodeView&, const NodeState& s) const override {
    return broadcast(phase == 0 ? s.x_next : s.y_next);
  }

  void absorb(std::size_t phase, const NodeView& view, NodeState& s, const Mailbox& box) const override {
    if (phase == 0) {
      s.h = s.x_next - weighted_sum(view, s.x_next, box);
      s.y_next = s.y + cfg_.eps_d * s.h;
    } else {
      s.y_nbhd = stack_neighborhood(view, s.y_next, box);
    }
  }

  void finish(const NodeView&, NodeState& s) const override { commit(s); }

 private:
  AlgorithmConfig cfg_;
};

class DgdProgram final : public NodeProgram {
 public:
  explicit DgdProgram(const AlgorithmConfig& cfg) : cfg_(cfg) {}

  std::vector<Phase> schedule() const override { return {{"x", Phase::Kind::broadcast}}; }

  Outbox emit(std::size_t, const NodeView&, const NodeState& s) const override { return broadcast(s.x); }

  void absorb(std::size_t, const NodeView& view, NodeState& s, const Mailbox& box) const override {
    s.grad = view.gradient(s.x);
    s.mixed = weighted_sum(view, s.x, box);
    s.x_next = s.mixed - cfg_.primal_step * s.grad;
    s.y_next = s.y;
  }

  void finish(const NodeView&, NodeState& s) const override { commit(s); }

 private:
  AlgorithmConfig cfg_;
};

class ExtraProgram final : public NodeProgram {
 public:
  explicit ExtraProgram(const AlgorithmConfig& cfg) : cfg_(cfg) {}

  std::vector<Phase> schedule() const override { return {{"x", Phase::Kind::broadcast}}; }

  Outbox emit(std::size_t, const NodeView&, const NodeState& s) const override { return broadcast(s.x); }

  void absorb(std::size_t, const NodeView& view, NodeState& s, const Mailbox& box) const override {
    const double eps = cfg_.primal_step;
    s.grad = view.gradient(s.x);
    s.mixed = weighted_sum(view, s.x, box);
    if (!s.has_history) {
      s.x_next = s.mixed - eps * s.grad;
    } else {
      // (I + W) x^t - (I + W)/2 x^{t-1} - eps (grad^t - grad^{t-1})
      s.x_next = s.x + s.mixed - 0.5 * (s.x_prev + s.mixed_prev) - eps * (s.grad - s.grad_prev);
    }
    s.y_next = s.y;
  }

  void finish(const NodeView&, NodeState& s) const override { commit(s); }

 private:
  AlgorithmConfig cfg_;
};

}  // namespace

std::unique_ptr<NodeProgram> make_program(const AlgorithmConfig& cfg) {
  switch (cfg.variant) {
    case Variant::pdqn: return std::make_unique<PdqnProgram>(cfg);
    case Variant::esom: return std::make_unique<EsomProgram>(cfg);
    case Variant::da: return std::make_unique<DaProgram>(cfg);
    case Variant::dgd: return std::make_unique<DgdProgram>(cfg);
    case Variant::extra: return std::make_unique<ExtraProgram>(cfg);
  }
  throw std::invalid_argument("unknown variant");
}

Engine::Engine(const Problem& problem, const WeightMatrix& W, AlgorithmConfig cfg, bool parallel, unsigned threads)
    : problem_(&problem),
      W_(&W),
      cfg_(cfg),
      executor_(W.topology(), problem.dim(), parallel, threads),
      ledger_(problem.nodes()) {
  cfg_.validate();
  if (W.size() != problem.nodes()) throw std::invalid_argument("weight matrix and problem disagree on node count");
  if (cfg_.variant == Variant::da && !problem.is_quadratic())
    throw std::invalid_argument(
        "dual ascent needs a closed-form local minimizer; it is only available for quadratic problems");
  program_ = make_program(cfg_);
  schedule_ = program_->schedule();
  for (int i = 0; i < problem.nodes(); ++i) views_.emplace_back(problem, W, i);
}

void Engine::step(std::vector<NodeState>& states) {
  if (static_cast<int>(states.size()) != problem_->nodes()) throw std::invalid_argument("state count mismatch");
  ledger_.begin_iteration();
  auto view = [&](int i) -> const NodeView& { return views_[static_cast<std::size_t>(i)]; };
  auto state = [&](int i) -> NodeState& { return states[static_cast<std::size_t>(i)]; };
  executor_.for_each_node([&](int i) { program_->start(view(i), state(i)); });
  for (std::size_t ph = 0; ph < schedule_.size(); ++ph) {
    executor_.round(
        schedule_[ph], [&](int i) { return program_->emit(ph, view(i), state(i)); },
        [&](int i, const Mailbox& box) { program_->absorb(ph, view(i), state(i), box); }, &ledger_);
  }
  executor_.for_each_node([&](int i) { program_->finish(view(i), state(i)); });
  for (const auto& s : states)
    if (!state_finite(s)) throw NonFiniteState(iterations_, states_to_json(states));
  ++iterations_;
}

void iterate(std::vector<NodeState>& states, const Problem& problem, const WeightMatrix& W,
             const AlgorithmConfig& cfg, ExchangeLedger* ledger) {
  Engine engine(problem, W, cfg);
  engine.step(states);
  if (ledger) {
    ledger->begin_iteration();
    for (int r = 0; r < engine.ledger().rounds_per_iteration().front(); ++r) ledger->record_round(problem.nodes(), problem.dim());
  }
}

namespace {
void iterate_as(Variant v, std::vector<NodeState>& states, const Problem& problem, const WeightMatrix& W,
                AlgorithmConfig cfg) {
  cfg.variant = v;
  iterate(states, problem, W, cfg);
}
}  // namespace

void pdqn_iterate(std::vector<NodeState>& s, const Problem& pr, const WeightMatrix& W, const AlgorithmConfig& c) {
  iterate_as(Variant::pdqn, s, pr, W, c);
}
void da_iterate(std::vector<NodeState>& s, const Problem& pr, const WeightMatrix& W, const AlgorithmConfig& c) {
  iterate_as(Variant::da, s, pr, W, c);
}
void dgd_iterate(std::vector<NodeState>& s, const Problem& pr, const WeightMatrix& W, const AlgorithmConfig& c) {
  iterate_as(Variant::dgd, s, pr, W, c);
}
void extra_iterate(std::vector<NodeState>& s, const Problem& pr, const WeightMatrix& W, const AlgorithmConfig& c) {
  iterate_as(Variant::extra, s, pr, W, c);
}
void esom_iterate(std::vector<NodeState>& s, const Problem& pr, const WeightMatrix& W, const AlgorithmConfig& c) {
  iterate_as(Variant::esom, s, pr, W, c);
}

std::string tuned_field(Variant v) {
  switch (v) {
    case Variant::pdqn:
    case Variant::esom:
    case Variant::da: return "eps_d";
    case Variant::dgd:
    case Variant::extra: return "primal_step";
  }
  return "";
}

double field_value(const AlgorithmConfig& c, const std::string& field) {
  if (field == "alpha") return c.alpha;
  if (field == "eps_d") return c.eps_d;
  if (field == "primal_step") return c.primal_step;
  throw std::invalid_argument("cannot tune '" + field + "' (expected alpha, eps_d or primal_step)");
}

void set_field_value(AlgorithmConfig& c, const std::string& field, double value) {
  if (field == "alpha")
    c.alpha = value;
  else if (field == "eps_d")
    c.eps_d = value;
  else if (field == "primal_step")
    c.primal_step = value;
  else
    throw std::invalid_argument("cannot tune '" + field + "' (expected alpha, eps_d or primal_step)");
}

double tuned_value(const AlgorithmConfig& c) { return field_value(c, tuned_field(c.variant)); }

void set_tuned_value(AlgorithmConfig& c, double value) { set_field_value(c, tuned_field(c.variant), value); }

std::vector<double> power_of_two_grid(int lo, int hi) {
  std::vector<double> g;
  for (int k = lo; k <= hi; ++k) g.push_back(std::ldexp(1.0, k));
  return g;
}

double relative_error(const StackedVector& x, const Vector& x_star) {
  const int n = x.blocks();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += (x.block(i) - x_star).squaredNorm();
  double scale = x_star.squaredNorm();
  if (scale == 0.0) scale = 1.0;
  return acc / (n * scale);
}

namespace {
constexpr double kRoundoffFloor = 1e-20;
}

TuneResult tune_stepsize(const AlgorithmConfig& base, const Problem& problem, const WeightMatrix& W,
                         const Vector& x_star, const std::vector<double>& grid, int probe_iterations,
                         const std::string& field) {
  const std::string target = field.empty() ? tuned_field(base.variant) : field;
  field_value(base, target);
  if (grid.empty()) throw std::invalid_argument("tuning grid is empty");
  if (probe_iterations < 4) throw std::invalid_argument("probe needs at least 4 iterations");
  std::vector<double> order = grid;
  std::sort(order.begin(), order.end(), std::greater<>());
  order.erase(std::unique(order.begin(), order.end()), order.end());

  TuneResult result;
  result.field = target;
  for (double value : order) {
    TuneCandidate cand;
    cand.value = value;
    AlgorithmConfig cfg = base;
    set_field_value(cfg, target, value);
    if (!cfg.violations().empty()) {
      cand.reason = "invalid value";
      result.candidates.push_back(cand);
      continue;
    }
    std::vector<double> err;
    try {
      Engine engine(problem, W, cfg);
      auto states = initial_states(problem, W, cfg);
      err.push_back(relative_error(gather_x(states), x_star));
      for (int t = 0; t < probe_iterations; ++t) {
        engine.step(states);
        err.push_back(relative_error(gather_x(states), x_star));
      }
    } catch (const NonFiniteState&) {
      cand.reason = "diverged";
      cand.final_error = INFINITY;
      result.candidates.push_back(cand);
      continue;
    }
    const double last = err.back();
    const double quartile = err[err.size() * 3 / 4];
    cand.final_error = last;
    if (!std::isfinite(last)) {
      cand.reason = "diverged";
    } else if (last <= kRoundoffFloor) {
      cand.accepted = true;
      cand.reason = "reached rounding level";
    } else if (last <= quartile && last < err.front()) {
      cand.accepted = true;
      cand.reason = "decreasing over final quartile";
    } else {
      cand.reason = "not decreasing over final quartile";
    }
    result.candidates.push_back(cand);
    if (cand.accepted) {
      result.config = cfg;
      result.value = value;
      return result;
    }
  }
  std::string msg = "no " + target + " in the grid converges for " + variant_name(base.variant);
  throw TuningFailed(msg);
}

}  // namespace pdqn
