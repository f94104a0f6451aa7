// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace heartdarts {

/// Environment variable selecting the worker count for parallel kernels.
inline constexpr const char* kThreadsEnvVar = "HEARTDARTS_THREADS";

/// Applies HEARTDARTS_THREADS if set (positive integer); otherwise leaves
/// the runtime default (all cores). Returns the resulting thread count.
int configure_threads_from_env();

void set_num_threads(int n);
int num_threads();

}  // namespace heartdarts
