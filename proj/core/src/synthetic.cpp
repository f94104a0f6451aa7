// SPDX-License-Identifier: Apache-2.0
#include "heartdarts/synthetic.hpp"

#include <cmath>

#include "heartdarts/rng.hpp"

namespace heartdarts {

namespace {

double bump(double t, double mu, double width) {
    const double z = (t - mu) / width;
    return std::exp(-0.5 * z * z);
}

double template_value(AamiClass c, double t, double centre, double s) {
    switch (c) {
        case AamiClass::N: return bump(t, centre, 3 * s);
        case AamiClass::S: return bump(t, centre - 20 * s, 3 * s) + bump(t, centre + 20 * s, 3 * s);
        case AamiClass::V: return bump(t, centre, 20 * s);
        case AamiClass::F: return bump(t, centre, 3 * s) - 0.8 * bump(t, centre + 15 * s, 5 * s);
        case AamiClass::Q: return -0.8 * bump(t, centre, 6 * s);
    }
    return 0.0;
}

double lead_gain(std::size_t lead) { return lead == 0 ? 1.0 : std::pow(-0.7, static_cast<double>(lead)); }

}  // namespace

std::vector<double> synthetic_template(AamiClass c, std::size_t length, std::size_t lead) {
    const double s = static_cast<double>(length) / 300.0;
    const double centre = static_cast<double>(length) / 3.0;
    std::vector<double> out(length);
    for (std::size_t i = 0; i < length; ++i)
        out[i] = lead_gain(lead) * template_value(c, static_cast<double>(i), centre, s);
    return out;
}

HeartbeatDataset make_synthetic_dataset(const SyntheticConfig& cfg) {
    if (cfg.length < 64) throw InputError("synthetic beats need length >= 64");
    if (cfg.leads < 1 || cfg.per_class < 1) throw InputError("synthetic dataset needs leads >= 1 and per_class >= 1");
    Rng rng(cfg.seed);
    const double s = static_cast<double>(cfg.length) / 300.0;
    const double centre = static_cast<double>(cfg.length) / 3.0;
    std::vector<Heartbeat> beats;
    std::uint64_t serial = 0;
    for (AamiClass c : kAllAamiClasses) {
        for (std::size_t n = 0; n < cfg.per_class; ++n) {
            Heartbeat hb;
            hb.leads = cfg.leads;
            hb.label = c;
            hb.record_id = "synthetic";
            hb.r_peak = serial++;
            const double amp = 0.85 + 0.3 * rng.uniform();
            const double shift = std::round((rng.uniform() * 2.0 - 1.0) * 3.0 * s);
            hb.window.resize(cfg.leads * cfg.length);
            for (std::size_t l = 0; l < cfg.leads; ++l)
                for (std::size_t i = 0; i < cfg.length; ++i) {
                    const double clean =
                        lead_gain(l) * amp * template_value(c, static_cast<double>(i), centre + shift, s);
                    hb.window[l * cfg.length + i] = clean + cfg.noise_sigma * rng.normal();
                }
            quantize_to_float(hb);
            beats.push_back(std::move(hb));
        }
    }
    return split_dataset(std::move(beats), cfg.seed);
}

}  // namespace heartdarts
