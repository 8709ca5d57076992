#pragma once

namespace sadir {

// Entry point for the sadir command line. Returns 0 on success, 1 on usage
// errors and 2 on runtime or format errors.
int run_cli(int argc, char **argv);

} // namespace sadir
