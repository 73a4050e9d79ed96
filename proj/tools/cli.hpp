#pragma once

#include <string>
#include <vector>

namespace ncopt {

// Full command-line surface; `args` excludes the program name. Returns the
// process exit status: 0 on success, nonzero on any validation or runtime
// failure (partial outputs are removed before returning).
int run_cli(const std::vector<std::string>& args);

}  // namespace ncopt
