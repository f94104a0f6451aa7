// SPDX-License-Identifier: Apache-2.0
#include "heartdarts/wavelet.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "heartdarts/error.hpp"

namespace heartdarts {

namespace {

constexpr std::array<double, 12> kDb6 = {
    0.11154074335010946362,  0.49462389039845308568,  0.75113390802109535068,  0.31525035170919762909,
    -0.22626469396543982008, -0.12976686756726193556, 0.097501605587323049102, 0.027522865530305728626,
    -0.031582039317486029565, 0.00055384220116149613925, 0.0047772575109455106396, -0.0010773010853084795649,
};

double highpass(std::size_t k) {
    const double h = kDb6[kDb6.size() - 1 - k];
    return (k % 2 == 0) ? h : -h;
}

}  // namespace

std::span<const double> db6_lowpass() { return kDb6; }

WaveletDecomposition wavelet_decompose(std::span<const double> signal, std::size_t levels) {
    WaveletDecomposition dec;
    std::vector<double> cur(signal.begin(), signal.end());
    for (std::size_t lvl = 0; lvl < levels; ++lvl) {
        dec.lengths.push_back(cur.size());
        if (cur.size() % 2 == 1) cur.push_back(cur.back());
        const std::size_t n = cur.size();
        const std::size_t half = n / 2;
        std::vector<double> a(half, 0.0), d(half, 0.0);
        for (std::size_t i = 0; i < half; ++i) {
            for (std::size_t k = 0; k < kDb6.size(); ++k) {
                const double x = cur[(2 * i + k) % n];
                a[i] += kDb6[k] * x;
                d[i] += highpass(k) * x;
            }
        }
        dec.details.push_back(std::move(d));
        cur = std::move(a);
    }
    dec.approx = std::move(cur);
    return dec;
}

std::vector<double> wavelet_reconstruct(const WaveletDecomposition& dec) {
    std::vector<double> cur = dec.approx;
    for (std::size_t lvl = dec.details.size(); lvl-- > 0;) {
        const auto& d = dec.details[lvl];
        const std::size_t half = d.size();
        const std::size_t n = 2 * half;
        std::vector<double> x(n, 0.0);
        for (std::size_t i = 0; i < half; ++i)
            for (std::size_t k = 0; k < kDb6.size(); ++k)
                x[(2 * i + k) % n] += kDb6[k] * cur[i] + highpass(k) * d[i];
        x.resize(dec.lengths[lvl]);
        cur = std::move(x);
    }
    return cur;
}

std::size_t denoise_levels(double fs) {
    const double l = std::floor(std::log2(fs / 25.0));
    return l < 1.0 ? 1 : static_cast<std::size_t>(l);
}

std::vector<double> wavelet_denoise(std::span<const double> signal, double fs) {
    if (!(fs > 0.0)) throw InputError("wavelet_denoise: sampling rate must be positive");
    const std::size_t levels = denoise_levels(fs);
    if (signal.size() < (std::size_t{1} << levels))
        throw InputError("wavelet_denoise: signal of length " + std::to_string(signal.size()) + " is shorter than 2^" +
                         std::to_string(levels));
    auto dec = wavelet_decompose(signal, levels);

    std::vector<double> mag(dec.details.front().size());
    std::transform(dec.details.front().begin(), dec.details.front().end(), mag.begin(),
                   [](double v) { return std::fabs(v); });
    const auto mid = mag.begin() + static_cast<std::ptrdiff_t>(mag.size() / 2);
    std::nth_element(mag.begin(), mid, mag.end());
    double median = *mid;
    if (mag.size() % 2 == 0) median = 0.5 * (median + *std::max_element(mag.begin(), mid));
    const double sigma = median / 0.6745;
    const double thr = sigma * std::sqrt(2.0 * std::log(static_cast<double>(signal.size())));

    for (auto& band : dec.details)
        for (double& c : band) {
            const double m = std::fabs(c) - thr;
            c = m > 0.0 ? std::copysign(m, c) : 0.0;
        }
    return wavelet_reconstruct(dec);
}

}  // namespace heartdarts
