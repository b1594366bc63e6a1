#ifndef AGGSPLIT_CLI_HPP
#define AGGSPLIT_CLI_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "aggsplit/problem.hpp"
#include "aggsplit/splitting.hpp"

namespace aggsplit::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;  // non-convergence or failed validation
inline constexpr int kInputError = 2;

/// Entry point of the aggsplit executable; `args` excludes the program name.
/// Output goes to `out`, diagnostics to `err`.
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Trace CSV with the fixed header, one row per iteration.
std::string trace_csv(const std::vector<TraceRecord>& trace);

/// ψ̃⁰ with standard normal entries drawn from `seed`.
Iterate random_init(const ProblemInstance& instance, std::uint64_t seed);

}  // namespace aggsplit::cli

#endif  // AGGSPLIT_CLI_HPP
