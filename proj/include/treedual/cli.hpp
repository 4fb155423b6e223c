#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace treedual::cli {

// Exit codes: 0 success, 1 solver-reported failure (infeasible/unbounded/
// rejected instance), 2 validation or usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct Diagnostics {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
};

// Full invariant sweep of a problem file of any supported kind.
Diagnostics validate_file(const std::string& path);

}  // namespace treedual::cli
