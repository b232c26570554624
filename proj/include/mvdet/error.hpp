// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mvdet {

// Error categories. The CLI maps them to exit codes:
// usage/bad_argument -> 1, data problems -> 2, numeric failures -> 3.
enum class Errc {
  usage,
  bad_argument,
  missing_file,
  malformed_header,
  size_mismatch,
  bad_spacing,
  io_failure,
  bad_data,
  numeric_failure,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline int exit_code_for(Errc c) {
  switch (c) {
    case Errc::usage:
    case Errc::bad_argument:
      return 1;
    case Errc::numeric_failure:
      return 3;
    default:
      return 2;
  }
}

}  // namespace mvdet
