#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace quicksilver::app {

/// Entry point of the `quicksilver` executable. args[0] is the program name.
/// Returns 0 on success, 2 on usage errors and 1 on runtime failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

const char* version();

}  // namespace quicksilver::app
