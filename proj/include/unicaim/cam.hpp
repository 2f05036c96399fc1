// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "unicaim/array.hpp"
#include "unicaim/cost.hpp"

namespace unicaim {

// ---------------------------------------------------------------------------
// Race configuration
// ---------------------------------------------------------------------------

struct RaceConfig {
    int k = 1;             // top-k count
    double v_half = 0.5;   // race threshold, vdd/2
    double i_dyn = 1e-6;   // per-row detector current when F_dyn conducts [A]
    double i_ref1 = 2e-6;  // detector reference, maintained as (k+1)*i_dyn

    static RaceConfig for_k(int k, double vdd = 1.0, double i_dyn = 1e-6) {
        if (k < 1) throw std::invalid_argument("RaceConfig: k must be >= 1");
        RaceConfig c;
        c.k = k;
        c.v_half = vdd / 2.0;
        c.i_dyn = i_dyn;
        c.i_ref1 = (k + 1) * i_dyn;
        return c;
    }
};

/// Retarget the detector to a new k: i_ref1 becomes (k+1)*i_dyn. No array
/// state is touched; the F_dyn reprogramming is logged as one event.
inline RaceConfig configure_k(RaceConfig cfg, int k, EventLog* log = nullptr,
                              const CostParams* cost = nullptr, int step = -1) {
    if (k < 1) throw std::invalid_argument("configure_k: k must be >= 1");
    cfg.k = k;
    cfg.i_ref1 = (k + 1) * cfg.i_dyn;
    if (log && cost) log->add(step, EventKind::fdyn_program, 1, cost->e_write, 0.0);
    return cfg;
}

// ---------------------------------------------------------------------------
// Pure race arithmetic
// ---------------------------------------------------------------------------
//
// Constant-current discharge: V_SL(t) = vdd - I*t/c_sl, so a sense line
// crosses vdd/2 at  t = c_sl*(vdd - v_half)/I.  The golden model evaluates
// the same functions on currents derived from exact scores, which keeps the
// two routes equal to the last bit at sigma = 0.

inline double discharge_time_of_current(double i_row, double c_sl, double vdd, double v_half) {
    if (!(i_row > 0.0)) throw std::domain_error("discharge time: non-positive row current");
    return c_sl * (vdd - v_half) / i_row;
}

/// Instant the survivor count first reaches k: the (n-k)-th smallest
/// crossing time. k == n degenerates to an immediate freeze at t = 0.
inline double freeze_time_of(const std::vector<double>& times, int k) {
    const int n = static_cast<int>(times.size());
    if (k < 1 || k > n) throw std::invalid_argument("freeze_time_of: k out of range");
    if (k == n) return 0.0;
    std::vector<double> sorted(times);
    std::nth_element(sorted.begin(), sorted.begin() + (n - k - 1), sorted.end());
    return sorted[static_cast<std::size_t>(n - k - 1)];
}

/// Sense-line voltage at the freeze instant: rows that already crossed hold
/// v_half (their detector stopped the discharge there); survivors sit at
/// vdd - I*t_freeze/c_sl.
inline double residual_voltage(double i_row, double t_row, double t_freeze, double c_sl,
                               double vdd, double v_half) {
    if (t_row <= t_freeze) return v_half;
    return vdd - i_row * t_freeze / c_sl;
}

// ---------------------------------------------------------------------------
// Race outcome
// ---------------------------------------------------------------------------

struct RaceOutcome {
    std::vector<int> selected_rows;            // k row indices, ascending
    double freeze_time = 0.0;                  // [s]
    std::vector<double> discharge_times;       // per array row; 0 for unoccupied
    std::vector<double> residual_voltages;     // per array row at freeze; 0 for unoccupied
    std::vector<std::pair<int, int>> tie_events;  // equal-time pairs across the cut
};

/// Per-row crossing time under the constant-current approximation. Strictly
/// increasing in score at sigma = 0.
inline double discharge_time(const CaimArray& array, int row, const QueryDrive& drive) {
    const double i = row_current(array, row, drive);
    return discharge_time_of_current(i, array.config.c_sl, array.config.device.vdd, 0.5 * array.config.device.vdd);
}

namespace detail {

/// Select the k longest-lived rows; exact time ties resolve to the lowest row
/// index (analog hardware would resolve them by noise; the model pins a rule).
inline std::vector<int> select_top_k(const std::vector<int>& rows,
                                     const std::vector<double>& times, int k) {
    std::vector<int> order(rows);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double ta = times[static_cast<std::size_t>(a)];
        const double tb = times[static_cast<std::size_t>(b)];
        if (ta != tb) return ta > tb;
        return a < b;
    });
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace detail

/// One CAM-mode operation: precharge, race, freeze once only k survivors
/// remain above vdd/2 (accumulated detector current drops below i_ref1 =
/// (k+1)*i_dyn). Residual voltages are recorded for the charge-domain step.
inline RaceOutcome run_race(const CaimArray& array, const QueryDrive& drive,
                            const RaceConfig& cfg, EventLog* log = nullptr,
                            const CostParams* cost = nullptr, int step = -1) {
    const ArrayConfig& acfg = array.config;
    std::vector<int> occupied;
    occupied.reserve(array.rows.size());
    for (int r = 0; r < acfg.n_rows; ++r)
        if (array.rows[static_cast<std::size_t>(r)].occupied) occupied.push_back(r);
    const int n = static_cast<int>(occupied.size());
    if (cfg.k < 1 || cfg.k > n)
        throw std::invalid_argument("run_race: k=" + std::to_string(cfg.k) + " with " +
                                    std::to_string(n) + " occupied rows");

    RaceOutcome out;
    out.discharge_times.assign(static_cast<std::size_t>(acfg.n_rows), 0.0);
    out.residual_voltages.assign(static_cast<std::size_t>(acfg.n_rows), 0.0);

    const double vdd = acfg.device.vdd;
    std::vector<double> occ_times(static_cast<std::size_t>(n));
    std::vector<double> occ_currents(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int r = occupied[static_cast<std::size_t>(i)];
        const double cur = row_current(array, r, drive);
        occ_currents[static_cast<std::size_t>(i)] = cur;
        const double t = discharge_time_of_current(cur, acfg.c_sl, vdd, cfg.v_half);
        occ_times[static_cast<std::size_t>(i)] = t;
        out.discharge_times[static_cast<std::size_t>(r)] = t;
    }

    out.freeze_time = freeze_time_of(occ_times, cfg.k);
    out.selected_rows = detail::select_top_k(occupied, out.discharge_times, cfg.k);

    for (int i = 0; i < n; ++i) {
        const int r = occupied[static_cast<std::size_t>(i)];
        out.residual_voltages[static_cast<std::size_t>(r)] =
            residual_voltage(occ_currents[static_cast<std::size_t>(i)],
                             occ_times[static_cast<std::size_t>(i)], out.freeze_time,
                             acfg.c_sl, vdd, cfg.v_half);
    }

    // equal-time pairs straddling the selection cut
    {
        std::vector<char> is_sel(static_cast<std::size_t>(acfg.n_rows), 0);
        for (int r : out.selected_rows) is_sel[static_cast<std::size_t>(r)] = 1;
        double cut = out.discharge_times[static_cast<std::size_t>(out.selected_rows.front())];
        for (int r : out.selected_rows)
            cut = std::min(cut, out.discharge_times[static_cast<std::size_t>(r)]);
        for (int r : occupied) {
            if (is_sel[static_cast<std::size_t>(r)]) continue;
            if (out.discharge_times[static_cast<std::size_t>(r)] == cut) {
                for (int s : out.selected_rows)
                    if (out.discharge_times[static_cast<std::size_t>(s)] == cut)
                        out.tie_events.emplace_back(s, r);
            }
        }
    }

    if (log && cost) {
        log->add(step, EventKind::precharge_sl, n, n * cost->e_precharge, 0.0);
        double e_dis = 0.0;
        for (int r : occupied)
            e_dis += acfg.c_sl * (vdd - out.residual_voltages[static_cast<std::size_t>(r)]) * vdd;
        log->add(step, EventKind::race_discharge, n, e_dis, cost->t_race + out.freeze_time);
        log->add(step, EventKind::comparator, 1, cost->e_comparator, 0.0);
    }
    return out;
}

}  // namespace unicaim
