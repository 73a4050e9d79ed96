#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

// NC_REQUIRE: argument/precondition violations (caller error).
// NC_CHECK: internal consistency / numeric-state failures.
#define NC_REQUIRE(cond, msg)                        \
  do {                                               \
    if (!(cond)) {                                   \
      std::ostringstream nc_oss_;                    \
      nc_oss_ << msg;                                \
      throw std::invalid_argument(nc_oss_.str());    \
    }                                                \
  } while (0)

#define NC_CHECK(cond, msg)                          \
  do {                                               \
    if (!(cond)) {                                   \
      std::ostringstream nc_oss_;                    \
      nc_oss_ << msg;                                \
      throw std::runtime_error(nc_oss_.str());       \
    }                                                \
  } while (0)

namespace ncopt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ncopt
