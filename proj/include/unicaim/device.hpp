// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "unicaim/rng.hpp"

namespace unicaim {

/// Behavioral parameters of a single FeFET. The I-V curve is modeled as
/// cutoff plus a linear transconductance region:
///
///     I(v_gate) = i_off + gm * max(0, v_gate - (vth_levels[level] + offset))
///
/// which preserves the two properties the architecture actually relies on:
/// current ordering across programmed levels and linearity above threshold.
struct DeviceParams {
    std::vector<double> vth_levels;  // nominal threshold voltages, strictly increasing [V]
    double sigma_vth = 0.0;          // device-to-device variation stddev [V]
    double gm = 10e-6;               // transconductance slope [A/V]
    double i_off = 1e-9;             // off-state leakage [A]
    double v_read = 0.3;             // nominal read voltage [V]
    double vdd = 1.0;                // supply [V]
    bool resample_on_program = true; // false: variation offset is fixed per physical device

    static DeviceParams defaults() {
        DeviceParams p;
        p.vth_levels = {0.3, 0.5};  // 2-level device, 0.2 V spacing
        return p;
    }

    /// Uniformly spaced grid of `n_levels` thresholds centered on `center`.
    static DeviceParams uniform_grid(std::size_t n_levels, double center, double spacing) {
        DeviceParams p;
        p.vth_levels.resize(n_levels);
        const double lo = center - spacing * static_cast<double>(n_levels - 1) / 2.0;
        for (std::size_t i = 0; i < n_levels; ++i)
            p.vth_levels[i] = lo + spacing * static_cast<double>(i);
        return p;
    }

    void validate() const {
        if (vth_levels.size() < 2)
            throw std::invalid_argument("DeviceParams: need at least 2 vth levels");
        for (std::size_t i = 1; i < vth_levels.size(); ++i)
            if (!(vth_levels[i] > vth_levels[i - 1]))
                throw std::invalid_argument("DeviceParams: vth_levels must be strictly increasing");
        if (sigma_vth < 0.0) throw std::invalid_argument("DeviceParams: sigma_vth < 0");
        if (!(gm > 0.0)) throw std::invalid_argument("DeviceParams: gm must be > 0");
        if (i_off < 0.0) throw std::invalid_argument("DeviceParams: i_off < 0");
        if (!(v_read > 0.0 && v_read <= vdd))
            throw std::invalid_argument("DeviceParams: require 0 < v_read <= vdd");
    }

    std::size_t n_levels() const { return vth_levels.size(); }
};

/// One ferroelectric transistor: which threshold level it is programmed to,
/// plus the variation offset sampled at program time.
struct FeFetState {
    int level_index = 0;
    double vth_offset = 0.0;
};

/// Program a device to `target_level`. A fresh variation offset is sampled
/// from Normal(0, sigma_vth); with sigma_vth = 0 the offset is exactly 0.
/// The normal draw is consumed unconditionally so that runs sharing a seed
/// see the same noise stream across sigma settings.
inline FeFetState program(FeFetState state, int target_level, const DeviceParams& params,
                          Rng& rng) {
    if (target_level < 0 || static_cast<std::size_t>(target_level) >= params.n_levels())
        throw std::invalid_argument("program: level index " + std::to_string(target_level) +
                                    " out of range");
    const double z = rng.normal();
    state.level_index = target_level;
    if (params.resample_on_program || state.vth_offset == 0.0)
        state.vth_offset = params.sigma_vth * z;
    return state;
}

/// Non-destructive read: piecewise-linear channel current at the given gate
/// voltage. Pure; never mutates device state.
inline double read_current(const FeFetState& state, double v_gate, const DeviceParams& params) {
    const double vth = params.vth_levels[static_cast<std::size_t>(state.level_index)] +
                       state.vth_offset;
    const double overdrive = v_gate - vth;
    return params.i_off + params.gm * std::max(0.0, overdrive);
}

}  // namespace unicaim
