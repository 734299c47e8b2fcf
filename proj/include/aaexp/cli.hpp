#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aaexp {

// Entry point of the aaexp tool; args excludes the program name.
// Returns 0 on success, 1 on runtime errors and 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aaexp
