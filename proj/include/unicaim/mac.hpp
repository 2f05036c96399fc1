// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "unicaim/array.hpp"
#include "unicaim/cost.hpp"

namespace unicaim {

// ---------------------------------------------------------------------------
// SAR ADC
// ---------------------------------------------------------------------------
//
// Ideal affine quantizer over [i_min, i_max] with 2^bits + 1 mid-tread codes,
// one code per step of the signed score grid. The range is calibrated to the
// currents of scores +s_max and -s_max; note the reversal — a larger score
// draws a smaller current, so i_min corresponds to +s_max. With the default
// d=128 / radius-2 grids, s_max = 512, the LSB is exactly one score unit and
// every one of the 1025 representable scores round-trips through a code with
// zero error.

struct AdcConfig {
    int bits = 10;
    double i_min = 0.0;  // current at score +s_max [A]
    double i_max = 0.0;  // current at score -s_max [A]
    double t_conv = 1e-9;
    double e_conv = 1e-12;
    long s_max = 512;

    static AdcConfig calibrated(const ArrayConfig& array, int bits = 10, double t_conv = 1e-9,
                                double e_conv = 1e-12) {
        AdcConfig a;
        a.bits = bits;
        a.s_max = array.score_max();
        a.i_min = array.current_of_score(static_cast<double>(a.s_max));
        a.i_max = array.current_of_score(-static_cast<double>(a.s_max));
        a.t_conv = t_conv;
        a.e_conv = e_conv;
        a.validate();
        return a;
    }

    void validate() const {
        if (bits < 1) throw std::invalid_argument("AdcConfig: bits must be >= 1");
        if (!(i_min < i_max)) throw std::invalid_argument("AdcConfig: need i_min < i_max");
        if (!(t_conv > 0.0) || !(e_conv > 0.0))
            throw std::invalid_argument("AdcConfig: conversion cost must be > 0");
    }

    long n_steps() const { return 1L << bits; }
    /// Score units per code step.
    double lsb_scores() const { return 2.0 * static_cast<double>(s_max) / static_cast<double>(n_steps()); }
};

struct AdcSample {
    long code = 0;
    bool clamped = false;
};

/// Quantize a sense-line current. Out-of-range inputs clamp to the nearest
/// endpoint and are reported, never raised.
inline AdcSample quantize(double i_sl, const AdcConfig& adc, EventLog* log = nullptr,
                          int step = -1) {
    AdcSample s;
    const double span = adc.i_max - adc.i_min;
    double x = (i_sl - adc.i_min) / span * static_cast<double>(adc.n_steps());
    if (x < 0.0) {
        x = 0.0;
        s.clamped = true;
    } else if (x > static_cast<double>(adc.n_steps())) {
        x = static_cast<double>(adc.n_steps());
        s.clamped = true;
    }
    s.code = static_cast<long>(std::floor(x + 0.5));  // round half up
    if (log) log->add(step, EventKind::adc_conversion, 1, adc.e_conv, 0.0);
    return s;
}

/// Inverse affine map of a code back to the integer score grid (nearest),
/// honoring the current/score reversal.
inline long decode_score(long code, const AdcConfig& adc) {
    const double s = static_cast<double>(adc.s_max) -
                     static_cast<double>(code) * adc.lsb_scores();
    const double r = std::floor(s + 0.5);
    const double lim = static_cast<double>(adc.s_max);
    return static_cast<long>(std::max(-lim, std::min(lim, r)));
}

// ---------------------------------------------------------------------------
// Exact attention scores for the selected rows
// ---------------------------------------------------------------------------

struct MacResult {
    int row = -1;
    long code = 0;
    long decoded_score = 0;
    double i_sl = 0.0;
    bool clamped = false;
    std::optional<long> true_score;  // oracle slot, filled by tests only
};

struct MacBatch {
    std::vector<MacResult> results;  // ordered by row index
    int conversion_rounds = 0;
    double latency = 0.0;
    long clamp_events = 0;
};

/// Route the selected sense lines through the MUX and quantize each one.
/// Only the selected rows are converted; latency is ceil(k / n_adcs) rounds.
inline MacBatch exact_scores(const CaimArray& array, const QueryDrive& drive,
                             const std::vector<int>& selected, const AdcConfig& adc, int n_adcs,
                             EventLog* log = nullptr, int step = -1) {
    if (selected.empty()) throw std::invalid_argument("exact_scores: empty selection");
    if (n_adcs < 1) throw std::invalid_argument("exact_scores: n_adcs must be >= 1");
    MacBatch batch;
    batch.results.reserve(selected.size());
    std::vector<int> rows(selected);
    std::sort(rows.begin(), rows.end());
    for (int r : rows) {
        if (!array.rows[static_cast<std::size_t>(r)].occupied)
            throw std::logic_error("exact_scores: selected row " + std::to_string(r) +
                                   " not occupied");
        MacResult m;
        m.row = r;
        m.i_sl = row_current(array, r, drive);
        const AdcSample s = quantize(m.i_sl, adc, log, step);
        m.code = s.code;
        m.clamped = s.clamped;
        m.decoded_score = decode_score(s.code, adc);
        if (s.clamped) ++batch.clamp_events;
        batch.results.push_back(m);
    }
    batch.conversion_rounds = adc_rounds(static_cast<int>(rows.size()), n_adcs);
    batch.latency = batch.conversion_rounds * adc.t_conv;
    if (log)
        log->add(step, EventKind::sense_static, static_cast<std::int64_t>(rows.size()), 0.0,
                 batch.latency);
    return batch;
}

// ---------------------------------------------------------------------------
// Energy ordering check
// ---------------------------------------------------------------------------

struct EnergyOrderingReport {
    bool pass = true;
    int offending_a = -1;
    int offending_b = -1;
};

/// Static sensing energy is I_SL * vdd * t_sense, so rows with larger scores
/// (smaller currents) must cost no more to sense. Returns the first
/// offending pair if the ordering is violated.
inline EnergyOrderingReport attention_energy_ordering_check(const std::vector<MacResult>& results,
                                                            double vdd, double t_sense) {
    if (results.size() < 2)
        throw std::invalid_argument("attention_energy_ordering_check: need >= 2 results");
    EnergyOrderingReport rep;
    for (std::size_t a = 0; a < results.size(); ++a) {
        for (std::size_t b = 0; b < results.size(); ++b) {
            if (a == b) continue;
            const double ea = results[a].i_sl * vdd * t_sense;
            const double eb = results[b].i_sl * vdd * t_sense;
            if (results[a].decoded_score > results[b].decoded_score && ea > eb) {
                rep.pass = false;
                rep.offending_a = results[a].row;
                rep.offending_b = results[b].row;
                return rep;
            }
        }
    }
    return rep;
}

}  // namespace unicaim
