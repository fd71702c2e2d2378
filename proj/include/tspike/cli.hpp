#pragma once

namespace tspike {

/// Command-line entry point: train, eval, convert, analyze, energy,
/// selftest. Returns 0 on success, 1 on a runtime failure (with a
/// diagnostic on stderr), 2 on a usage error.
int cli_dispatch(int argc, const char* const* argv);

} // namespace tspike
