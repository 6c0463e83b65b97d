#pragma once

#include <stdexcept>
#include <string>

namespace pyrovis {

/// Failure category. Maps one-to-one onto the C API status codes.
enum class Errc {
  invalid_argument = 1,
  config = 2,
  data = 3,
  io = 4,
  mismatch = 5,
  convergence = 6,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace pyrovis
