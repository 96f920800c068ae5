#pragma once

#include <iosfwd>

namespace mshoot {

/// Entry point for the `mshoot` tool. Returns 0 on success, 2 on usage
/// errors and 1 on runtime errors; failures print one line
/// `error: <Kind>: <message>` to `err`.
int dispatch(int argc, const char *const *argv, std::ostream &out,
             std::ostream &err);

} // namespace mshoot
