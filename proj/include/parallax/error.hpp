#pragma once

#include <stdexcept>
#include <string>

namespace parallax {

// Error category; the CLI maps it to an exit code:
// parse/validation -> 1, io -> 2, internal invariant -> 3.
enum class ErrorKind { parse, validation, io, internal };

struct Error : std::runtime_error {
  ErrorKind kind;
  Error(ErrorKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

}  // namespace parallax

// Internal invariant check. A failure here is a bug in this library, not bad
// input, and surfaces as exit code 3 in the CLI.
#define PX_CHECK(cond, msg)                                                  \
  do {                                                                       \
    if (!(cond))                                                             \
      ::parallax::fail(::parallax::ErrorKind::internal,                      \
                       std::string("invariant violated: ") + (msg));         \
  } while (0)
