#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace chatdqn {

// Exit codes: 0 success, 1 runtime failure or missing artifact, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace chatdqn
