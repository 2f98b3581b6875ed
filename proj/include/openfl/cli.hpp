#pragma once

namespace openfl {

// Exit codes: 0 success, 1 usage/validation error, 2 failed check.
int cli_main(int argc, const char* const* argv);

// Honors the OPENFL_THREADS worker-count cap; called by entry points.
void apply_thread_cap();

}  // namespace openfl
