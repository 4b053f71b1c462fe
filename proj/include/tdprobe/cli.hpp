#pragma once

#include <iosfwd>

namespace tdprobe {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int usage = 2;
inline constexpr int invariant = 3;
inline constexpr int connect = 4;
inline constexpr int io = 5;
inline constexpr int parse = 6;
}  // namespace exit_code

// Entry point for the `tdprobe` binary. Output goes to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tdprobe
