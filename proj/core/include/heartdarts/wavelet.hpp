// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace heartdarts {

/// Daubechies-6 reconstruction low-pass filter (12 taps, unit L2 norm).
std::span<const double> db6_lowpass();

struct WaveletDecomposition {
    std::vector<double> approx;               // coarsest approximation
    std::vector<std::vector<double>> details;  // details[0] is the finest band
    std::vector<std::size_t> lengths;          // signal length entering each level
};

/// Periodized multi-level DWT; odd lengths are extended by repeating the
/// last sample before each level.
WaveletDecomposition wavelet_decompose(std::span<const double> signal, std::size_t levels);
std::vector<double> wavelet_reconstruct(const WaveletDecomposition& dec);

/// floor(log2(fs / 25)), at least 1.
std::size_t denoise_levels(double fs);

/// Soft-threshold every detail band with sigma * sqrt(2 ln n), sigma being
/// the median absolute deviation of the finest band over 0.6745. Throws
/// InputError if the signal is shorter than 2^levels.
std::vector<double> wavelet_denoise(std::span<const double> signal, double fs);

}  // namespace heartdarts
