// SPDX-License-Identifier: Apache-2.0
#include "heartdarts/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace heartdarts {

int configure_threads_from_env() {
    if (const char* v = std::getenv(kThreadsEnvVar)) {
        try {
            const int n = std::stoi(v);
            if (n > 0) omp_set_num_threads(n);
        } catch (const std::exception&) {
            // unparsable value: keep the runtime default
        }
    }
    return num_threads();
}

void set_num_threads(int n) {
    if (n > 0) omp_set_num_threads(n);
}

int num_threads() { return omp_get_max_threads(); }

}  // namespace heartdarts
