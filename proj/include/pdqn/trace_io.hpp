#pragma once

#include <iosfwd>
#include <string>

#include "pdqn/simulator.hpp"

namespace pdqn {

/// First line of every trace file.
inline constexpr const char* kTraceHeader = "# pdqn-trace v1";

// Layout:
//   # pdqn-trace v1
//   # meta {"variant": ..., "seed": ..., "config": {...}, "problem": "<digest>", ...}
//   iteration,error,consensus_residual,exchanges,step_norm[,diagnostic columns]
//   one row per iteration; numbers use 17 significant digits.
void write_trace_csv(const ConvergenceTrace& trace, std::ostream& out);
std::string trace_to_csv(const ConvergenceTrace& trace);

/// Parses what write_trace_csv produced. Throws std::runtime_error on a
/// missing or unknown version header or malformed rows.
ConvergenceTrace read_trace_csv(std::istream& in);
ConvergenceTrace read_trace_file(const std::string& path);
/// Writes to path via a temporary file and rename.
void write_trace_file(const ConvergenceTrace& trace, const std::string& path);

/// Writes text to path atomically (temporary file, then rename).
void write_text_file(const std::string& path, const std::string& text);

std::string format_double(double v);

}  // namespace pdqn
