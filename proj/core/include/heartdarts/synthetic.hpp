// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "heartdarts/ecg.hpp"

namespace heartdarts {

struct SyntheticConfig {
    std::uint64_t seed = 0;
    std::size_t per_class = 400;
    std::size_t length = 300;
    std::size_t leads = 1;
    double noise_sigma = 0.3;
};

/// Noise-free, unjittered class template for one lead: [length] values.
/// N single spike, S double spike, V wide bump, F spike then dip, Q notch.
std::vector<double> synthetic_template(AamiClass c, std::size_t length, std::size_t lead);

/// Five classes of jittered templates plus Gaussian noise, split with
/// split_dataset(seed). Throws InputError if length < 64.
HeartbeatDataset make_synthetic_dataset(const SyntheticConfig& cfg);

}  // namespace heartdarts
