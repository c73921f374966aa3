#include "pdqn/trace_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pdqn {

namespace {

const char* const kBaseColumns[] = {"iteration", "error", "consensus_residual", "exchanges", "step_norm"};
const char* const kDiagColumns[] = {"psi",          "Psi",          "g_inv_min",    "g_inv_max",       "primal_bound_lower",
                                    "primal_bound_upper", "h_inv_min",    "h_inv_max",    "dual_bound_lower",    "dual_bound_upper",
                                    "sigma_norm",   "lyapunov_before", "lyapunov_after", "kappa",      "nu_defined"};

bool has_diagnostics(const ConvergenceTrace& t) {
  for (const auto& r : t.rows)
    if (r.diagnostics) return true;
  return false;
}

nlohmann::json audit_json(const CurvatureAudit& a) {
  return {{"primal_accepted", a.primal_accepted}, {"primal_skipped", a.primal_skipped},
          {"dual_accepted", a.dual_accepted},     {"dual_skipped", a.dual_skipped},
          {"max_primal_secant", a.max_primal_secant}, {"max_dual_secant", a.max_dual_secant}};
}

CurvatureAudit audit_from(const nlohmann::json& j) {
  CurvatureAudit a;
  a.primal_accepted = j.value("primal_accepted", 0LL);
  a.primal_skipped = j.value("primal_skipped", 0LL);
  a.dual_accepted = j.value("dual_accepted", 0LL);
  a.dual_skipped = j.value("dual_skipped", 0LL);
  a.max_primal_secant = j.value("max_primal_secant", 0.0);
  a.max_dual_secant = j.value("max_dual_secant", 0.0);
  return a;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw std::runtime_error("malformed number '" + s + "' in trace");
  return v;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trace_csv(const ConvergenceTrace& t, std::ostream& out) {
  nlohmann::json meta = {{"variant", t.variant},
                         {"seed", t.seed},
                         {"config", t.config},
                         {"problem", t.problem_digest},
                         {"aborted", t.aborted},
                         {"abort_reason", t.abort_reason},
                         {"audit", audit_json(t.audit)}};
  out << kTraceHeader << "\n# meta " << meta.dump() << "\n";
  const bool diag = has_diagnostics(t);
  bool first = true;
  for (const char* c : kBaseColumns) {
    out << (first ? "" : ",") << c;
    first = false;
  }
  if (diag)
    for (const char* c : kDiagColumns) out << "," << c;
  out << "\n";
  for (const auto& r : t.rows) {
    out << r.iteration << "," << format_double(r.error) << "," << format_double(r.consensus_residual) << ","
        << r.exchanges << "," << format_double(r.step_norm);
    if (diag) {
      if (r.diagnostics) {
        const DiagnosticRecord& d = *r.diagnostics;
        for (double v : {d.psi, d.Psi, d.g_inv_min, d.g_inv_max, d.primal_bound_lower, d.primal_bound_upper, d.h_inv_min,
                         d.h_inv_max, d.dual_bound_lower, d.dual_bound_upper, d.sigma_norm, d.lyapunov_before,
                         d.lyapunov_after, d.kappa})
          out << "," << format_double(v);
        out << "," << (d.nu_defined ? 1 : 0);
      } else {
        for (std::size_t k = 0; k < std::size(kDiagColumns); ++k) out << ",";
      }
    }
    out << "\n";
  }
}

std::string trace_to_csv(const ConvergenceTrace& trace) {
  std::ostringstream s;
  write_trace_csv(trace, s);
  return s.str();
}

ConvergenceTrace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader)
    throw std::runtime_error("not a trace file: expected first line '" + std::string(kTraceHeader) + "'");
  ConvergenceTrace t;
  if (!std::getline(in, line) || line.rfind("# meta ", 0) != 0) throw std::runtime_error("trace is missing its meta line");
  nlohmann::json meta = nlohmann::json::parse(line.substr(7));
  t.variant = meta.value("variant", "");
  t.seed = meta.value("seed", std::uint64_t{0});
  t.config = meta.value("config", nlohmann::json::object());
  t.problem_digest = meta.value("problem", "");
  t.aborted = meta.value("aborted", false);
  t.abort_reason = meta.value("abort_reason", "");
  if (meta.contains("audit")) t.audit = audit_from(meta["audit"]);

  if (!std::getline(in, line)) throw std::runtime_error("trace is missing its column header");
  const auto cols = split(line);
  const std::size_t base = std::size(kBaseColumns);
  const bool diag = cols.size() == base + std::size(kDiagColumns);
  if (cols.size() != base && !diag) throw std::runtime_error("unexpected trace columns");
  for (std::size_t k = 0; k < base; ++k)
    if (cols[k] != kBaseColumns[k]) throw std::runtime_error("unexpected trace column '" + cols[k] + "'");

  long long prev_exchanges = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line);
    if (f.size() != cols.size()) throw std::runtime_error("trace row has " + std::to_string(f.size()) + " fields");
    TraceRow r;
    r.iteration = static_cast<int>(parse_double(f[0]));
    r.error = parse_double(f[1]);
    r.consensus_residual = parse_double(f[2]);
    r.exchanges = std::stoll(f[3]);
    r.step_norm = parse_double(f[4]);
    if (diag && !f[base].empty()) {
      DiagnosticRecord d;
      double* slots[] = {&d.psi,          &d.Psi,          &d.g_inv_min,  &d.g_inv_max,       &d.primal_bound_lower,
                         &d.primal_bound_upper, &d.h_inv_min,    &d.h_inv_max,  &d.dual_bound_lower,    &d.dual_bound_upper,
                         &d.sigma_norm,   &d.lyapunov_before, &d.lyapunov_after, &d.kappa};
      for (std::size_t k = 0; k < std::size(slots); ++k) *slots[k] = parse_double(f[base + k]);
      d.nu_defined = f[base + std::size(slots)] == "1";
      r.diagnostics = d;
    }
    if (!t.rows.empty()) t.rounds_per_iteration.push_back(static_cast<int>(r.exchanges - prev_exchanges));
    prev_exchanges = r.exchanges;
    t.rows.push_back(r);
  }
  return t;
}

ConvergenceTrace read_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace '" + path + "'");
  return read_trace_csv(in);
}

void write_text_file(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

void write_trace_file(const ConvergenceTrace& trace, const std::string& path) {
  write_text_file(path, trace_to_csv(trace));
}

}  // namespace pdqn
