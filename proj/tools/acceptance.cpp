// Acceptance suite: one PASS/FAIL line per criterion.
//
// Exit status is 0 when the set of failing criteria equals --expect-fail
// (default: none), so known, documented failures stay visible in the output
// without hiding regressions or unexpected passes.

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "pdqn/experiments.hpp"
#include "pdqn/trace_io.hpp"

using namespace pdqn;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string g(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

std::string opt(const std::optional<int>& v) { return v ? std::to_string(*v) : "never"; }

struct Bench {
  Problem problem;
  WeightMatrix W;
  ReferenceSolution ref;
};

Bench quadratic(int n, int p, int d, int eta, std::uint64_t seed = 1) {
  Problem pr = generate_quadratic(n, p, eta, seed);
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(n, d));
  ReferenceSolution ref = centralized_solution(pr);
  return {std::move(pr), std::move(W), std::move(ref)};
}

AlgorithmConfig cfg(Variant v, int K = 2, double alpha = 2.0) {
  AlgorithmConfig c;
  c.variant = v;
  c.K = K;
  c.alpha = alpha;
  c.gamma = 0.1;
  c.Gamma = 0.1;
  if (v == Variant::da) c.alpha = 1.0;
  return c;
}

/// Tuned config, or nullopt with the reason.
std::optional<AlgorithmConfig> tuned(const Bench& b, AlgorithmConfig c, std::string* why = nullptr) {
  try {
    return tune_stepsize(c, b.problem, b.W, b.ref.x_star).config;
  } catch (const TuningFailed& e) {
    if (why) *why = e.what();
    return std::nullopt;
  }
}

ConvergenceTrace trace_of(const Bench& b, const AlgorithmConfig& c, int T, bool diagnostics = false,
                          bool parallel = false) {
  RunOptions o;
  o.iterations = T;
  o.diagnostics = diagnostics;
  o.parallel = parallel;
  o.seed = 1;
  return run(b.problem, b.W, c, b.ref, o);
}

// Shared by criteria 1, 2 and 10.
const Bench& eta0() {
  static const Bench b = quadratic(20, 5, 4, 0);
  return b;
}
const ConvergenceTrace& eta0_pdqn_trace() {
  static const ConvergenceTrace t = trace_of(eta0(), *tuned(eta0(), cfg(Variant::pdqn)), 2000);
  return t;
}

Verdict exactness() {
  const Bench& b = eta0();
  std::ostringstream s;
  bool ok = true;
  for (Variant v : {Variant::pdqn, Variant::extra, Variant::esom, Variant::da}) {
    std::string why;
    auto c = tuned(b, cfg(v), &why);
    if (!c) {
      s << variant_name(v) << ": tuning failed; ";
      ok = false;
      continue;
    }
    ConvergenceTrace t = v == Variant::pdqn ? eta0_pdqn_trace() : trace_of(b, *c, 2000);
    auto it = t.iterations_to(1e-8);
    ok = ok && it.has_value();
    s << variant_name(v) << " 1e-8@" << opt(it) << "; ";
  }
  auto d = tuned(b, cfg(Variant::dgd));
  if (!d) return {false, s.str() + "dgd: tuning failed"};
  ConvergenceTrace t = trace_of(b, *d, 2000);
  ok = ok && t.final_error() >= 1e-4;
  s << "dgd(step " << g(d->primal_step) << ") final " << g(t.final_error()) << " (needs >= 1e-4)";
  return {ok, s.str()};
}

Verdict speed_to_tight_error() {
  auto it = eta0_pdqn_trace().iterations_to(1e-8);
  return {it && *it <= 150, "pdqn 1e-8@" + opt(it) + " (needs <= 150)"};
}

Verdict ill_conditioning() {
  std::optional<int> pd[2], da[2];
  for (int eta : {0, 1}) {
    Bench b = quadratic(20, 5, 4, eta);
    auto p = tuned(b, cfg(Variant::pdqn));
    auto d = tuned(b, cfg(Variant::da));
    if (p) pd[eta] = trace_of(b, *p, 3000).iterations_to(1e-5);
    if (d) da[eta] = trace_of(b, *d, 3000).iterations_to(1e-5);
  }
  std::ostringstream s;
  s << "to 1e-5: pdqn " << opt(pd[0]) << "->" << opt(pd[1]) << ", da " << opt(da[0]) << "->" << opt(da[1]);
  if (!pd[0] || !pd[1] || !da[0] || !da[1]) return {false, s.str()};
  const double gp = double(*pd[1]) / *pd[0], gd = double(*da[1]) / *da[0];
  s << "; growth pdqn x" << g(gp) << ", da x" << g(gd);
  return {*pd[1] < *da[1] && gd > gp, s.str()};
}

Verdict exchange_accounting() {
  const Bench b = quadratic(20, 5, 4, 0);
  const int T = 25;
  std::ostringstream s;
  bool ok = true;
  for (Variant v : {Variant::pdqn, Variant::esom}) {
    for (int K = 0; K <= 3; ++K) {
      AlgorithmConfig c = cfg(v, K);
      c.eps_d = 0.25;
      Engine e(b.problem, b.W, c);
      auto st = initial_states(b.problem, b.W, c);
      for (int t = 0; t < T; ++t) e.step(st);
      const long long expect = static_cast<long long>(K + (v == Variant::pdqn ? 5 : 3)) * T;
      bool each = true;
      for (int r : e.ledger().rounds_per_iteration()) each = each && r == K + (v == Variant::pdqn ? 5 : 3);
      ok = ok && each && e.ledger().total_rounds() == expect;
      s << variant_name(v) << " K=" << K << ":" << e.ledger().total_rounds() << "/" << expect << " ";
    }
  }
  return {ok, s.str()};
}

Verdict exchange_efficiency() {
  const Bench b = quadratic(20, 5, 4, 0, 1);
  SeedSweepSpec spec;
  spec.threshold = 1e-5;
  spec.budget = 3000;
  std::ostringstream s;
  for (Variant v : {Variant::pdqn, Variant::da, Variant::esom}) {
    auto c = tuned(b, cfg(v));
    if (!c) return {false, variant_name(v) + ": tuning failed"};
    spec.variants.push_back(*c);
  }
  SeedSweepResult r = sweep_seeds(spec, 100);
  double med[3];
  for (int k = 0; k < 3; ++k) {
    med[k] = r.variants[static_cast<std::size_t>(k)].median_exchanges();
    s << variant_name(r.variants[static_cast<std::size_t>(k)].config.variant) << " median " << g(med[k])
      << " (censored " << r.variants[static_cast<std::size_t>(k)].censored() << ") ";
  }
  return {med[0] < med[1] && med[0] < med[2], s.str()};
}

// Criteria 6-8 share one 200-iteration run with dense diagnostics.
const ConvergenceTrace& small_diag_trace() {
  static const ConvergenceTrace t = [] {
    Bench b = quadratic(6, 4, 2, 1);
    auto c = tuned(b, cfg(Variant::pdqn));
    return trace_of(b, c.value_or(cfg(Variant::pdqn)), 200, true);
  }();
  return t;
}

Verdict bounds(bool primal) {
  const ConvergenceTrace& t = small_diag_trace();
  int checked = 0, first_bad = -1;
  double margin = 1e300;
  for (const auto& r : t.rows) {
    if (!r.diagnostics) continue;
    const DiagnosticRecord& d = *r.diagnostics;
    ++checked;
    const bool ok = primal ? d.primal_bounds_hold(1e-9) : d.dual_bounds_hold(1e-9);
    margin = std::min(margin, primal ? std::min(d.g_inv_min - d.primal_bound_lower, d.primal_bound_upper - d.g_inv_max)
                                     : std::min(d.h_inv_min - d.dual_bound_lower, d.dual_bound_upper - d.h_inv_max));
    if (!ok && first_bad < 0) first_bad = r.iteration;
  }
  std::ostringstream s;
  s << checked << " iterations (n=6, p=4), worst margin " << g(margin);
  if (first_bad >= 0) s << ", first violation at " << first_bad;
  if (t.aborted) s << ", run aborted: " << t.abort_reason;
  return {checked == 200 && first_bad < 0 && !t.aborted, s.str()};
}

Verdict secants() {
  // the tuned runs skip every dual pair; this one accepts some
  static const ConvergenceTrace accepting = [] {
    Bench b = quadratic(6, 4, 2, 0, 3);
    AlgorithmConfig c = cfg(Variant::pdqn);
    c.eps_d = 0.5;
    return trace_of(b, c, 200);
  }();
  std::ostringstream s;
  bool ok = true;
  long long dual_accepted = 0, primal_accepted = 0;
  for (const ConvergenceTrace* t : {&small_diag_trace(), &eta0_pdqn_trace(), &accepting}) {
    const CurvatureAudit& a = t->audit;
    ok = ok && a.max_primal_secant <= 1e-10 && a.max_dual_secant <= 1e-10;
    primal_accepted += a.primal_accepted;
    dual_accepted += a.dual_accepted;
    s << "primal " << g(a.max_primal_secant) << " (" << a.primal_accepted << " accepted), dual "
      << g(a.max_dual_secant) << " (" << a.dual_accepted << " accepted); ";
  }
  return {ok && primal_accepted > 0 && dual_accepted > 0, s.str()};
}

Verdict oracles() {
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(6, 2));
  const double a = oracle_neumann_exact(W, 4, 50, 11);
  const double b = oracle_dual_direction(W, 4, 0.1, 0.1, 50, 12);
  const double c = oracle_laplacian(W, 4, 50, 13);
  return {a <= 1e-8 && b <= 1e-10 && c <= 1e-12,
          "neumann K=40 " + g(a) + ", dual direction " + g(b) + ", laplacian " + g(c)};
}

Verdict linear_rate() {
  RateFit f = fit_linear_rate(eta0_pdqn_trace());
  if (!f.fitted) return {false, f.reason};
  return {f.r_squared >= 0.95, "r2 " + g(f.r_squared) + ", rate " + g(f.rate) + " over [" + std::to_string(f.first) +
                                   ", " + std::to_string(f.last) + "]"};
}

Verdict logistic_parity() {
  Problem pr = generate_logistic(20, 4, 100, 3.0, 1.0, 1.0, 1e-4, 1);
  WeightMatrix W = metropolis_weights(build_d_regular_cycle(20, 4));
  ReferenceSolution ref = centralized_solution(pr);
  Bench b{std::move(pr), std::move(W), std::move(ref)};
  const double L = convexity_bounds(b.problem).L;
  AlgorithmConfig p = cfg(Variant::pdqn, 2, 1e-4);
  p.initial_curvature = L;
  AlgorithmConfig e = cfg(Variant::esom, 2, 1e-4);
  std::string why_p, why_e;
  auto tp = tuned(b, p, &why_p);
  auto te = tuned(b, e, &why_e);
  std::optional<int> ip, ie;
  std::ostringstream s;
  if (tp) {
    ip = trace_of(b, *tp, 2000).iterations_to(1e-6);
    s << "pdqn 1e-6@" << opt(ip) << " (eps_d " << g(tp->eps_d) << ")";
  } else {
    // still report what the configured step does
    AlgorithmConfig fixed = p;
    fixed.eps_d = 1.0;
    ConvergenceTrace t = trace_of(b, fixed, 2000);
    s << "pdqn: " << why_p << "; at eps_d=1 final error " << g(t.final_error())
      << (t.aborted ? " (aborted)" : "");
  }
  if (te) {
    ie = trace_of(b, *te, 2000).iterations_to(1e-6);
    s << "; esom 1e-6@" << opt(ie) << " (eps_d " << g(te->eps_d) << ")";
  } else {
    s << "; esom: " << why_e;
  }
  return {ip && ie && *ip <= 2 * *ie, s.str()};
}

Verdict fixed_point_and_determinism() {
  std::ostringstream s;
  bool ok = true;
  double worst = 0;
  for (int eta : {0, 1}) {
    Bench b = quadratic(20, 5, 4, eta);
    pdqn::Setup setup{b.problem, b.W, b.ref};
    for (Variant v : {Variant::pdqn, Variant::esom, Variant::da, Variant::extra}) {
      AlgorithmConfig c = cfg(v);
      c.eps_d = 0.5;
      c.primal_step = 0.5;
      worst = std::max(worst, fixed_point_step(setup, c));
    }
    if (eta == 0) {
      AlgorithmConfig d = cfg(Variant::dgd);
      d.primal_step = 0.5;
      s << "dgd excluded (inexact; step at saddle " << g(fixed_point_step(setup, d)) << "); ";
    }
  }
  ok = worst <= 1e-12;
  s << "exact variants max step " << g(worst) << "; ";
  const Bench& b = eta0();
  int identical = 0;
  for (Variant v : {Variant::pdqn, Variant::esom, Variant::da, Variant::extra, Variant::dgd}) {
    AlgorithmConfig c = cfg(v);
    c.eps_d = 0.5;
    c.primal_step = 0.5;
    const std::string a = trace_to_csv(trace_of(b, c, 100, false, false));
    const std::string again = trace_to_csv(trace_of(b, c, 100, false, false));
    const std::string par = trace_to_csv(trace_of(b, c, 100, false, true));
    identical += (a == again && a == par);
  }
  ok = ok && identical == 5;
  s << identical << "/5 variants bitwise identical serial/rerun/parallel";
  return {ok, s.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only, expect_fail;
  app.add_option("--only", only, "run only these criteria");
  app.add_option("--expect-fail", expect_fail, "criteria known to fail; exit 0 iff exactly these fail")
      ->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"exactness", exactness},
      {"iterations to 1e-8 on the well-conditioned quadratic", speed_to_tight_error},
      {"ill-conditioning ordering", ill_conditioning},
      {"exchange accounting", exchange_accounting},
      {"exchange efficiency over 100 seeds", exchange_efficiency},
      {"primal inverse eigenvalue bounds", [] { return bounds(true); }},
      {"dual inverse eigenvalue bounds", [] { return bounds(false); }},
      {"secant properties", secants},
      {"oracle equivalences", oracles},
      {"linear rate fit", linear_rate},
      {"logistic parity with ESOM", logistic_parity},
      {"fixed point and determinism", fixed_point_and_determinism},
  };

  std::set<int> failed, selected(only.begin(), only.end());
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!v.pass) failed.insert(id);
    std::printf("%s  %2d  %-52s %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(),
                v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::set<int> expected;
  for (int id : expect_fail)
    if (selected.empty() || selected.count(id)) expected.insert(id);
  std::printf("%zu failed", failed.size());
  if (!expected.empty()) std::printf(" (%zu expected)", expected.size());
  std::printf("\n");
  return failed == expected ? 0 : 1;
}
