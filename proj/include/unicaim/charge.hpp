// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "unicaim/array.hpp"
#include "unicaim/cam.hpp"
#include "unicaim/cost.hpp"

namespace unicaim {

/// Charge-domain accumulation parameters. lambda is the physical retention
/// factor of the C_SL/C_Acc divider; v_s is the FE-INV switching voltage used
/// by the eviction race, programmed below v_half so eviction detection cannot
/// retrigger the top-k race.
struct ChargeParams {
    double lambda = 0.8;  // c_acc / (c_sl + c_acc)
    double v_s = 0.25;    // FE-INV switching voltage [V]
    bool score_dependent_discharge = false;  // alternative eviction-race model

    static ChargeParams from_array(const ArrayConfig& cfg) {
        ChargeParams p;
        p.lambda = cfg.c_acc / (cfg.c_sl + cfg.c_acc);
        p.v_s = 0.25 * cfg.device.vdd;
        return p;
    }

    void validate(double vdd) const {
        if (!(lambda > 0.0 && lambda < 1.0))
            throw std::invalid_argument("ChargeParams: lambda must be in (0,1)");
        if (!(v_s > 0.0 && v_s < vdd))
            throw std::invalid_argument("ChargeParams: v_s must be in (0, vdd)");
    }
};

/// One EMA update: acc <- lambda*acc + (1-lambda)*residual. Written in this
/// exact form everywhere (hardware and golden model) so both produce
/// identical floating-point trajectories.
inline double ema_update(double acc, double residual, double lambda) {
    return lambda * acc + (1.0 - lambda) * residual;
}

/// Close S1 on every occupied row: charge sharing folds this step's residual
/// sense-line voltage into the accumulation capacitor.
inline void accumulate(CaimArray& array, const RaceOutcome& outcome, const ChargeParams& params,
                       EventLog* log = nullptr, const CostParams* cost = nullptr, int step = -1) {
    if (outcome.residual_voltages.size() != array.rows.size())
        throw std::logic_error("accumulate: race outcome does not match this array");
    int shared = 0;
    for (std::size_t r = 0; r < array.rows.size(); ++r) {
        CaimRow& row = array.rows[r];
        if (!row.occupied) continue;
        row.acc_voltage = ema_update(row.acc_voltage, outcome.residual_voltages[r], params.lambda);
        ++shared;
    }
    if (shared == 0) throw std::logic_error("accumulate: no occupied rows");
    if (log && cost)
        log->add(step, EventKind::charge_share, shared, shared * cost->e_share, cost->t_share);
}

struct EvictionCandidate {
    int row = -1;
    bool tie = false;
};

/// The row whose accumulation capacitor reaches v_s first once the shared
/// discharge transistor opens. With the default shared constant current that
/// is simply the argmin of acc_voltage; the score-dependent mode divides the
/// headroom by this step's row current instead. Ties go to the lowest index.
inline EvictionCandidate find_eviction_candidate(const CaimArray& array,
                                                 const ChargeParams& params,
                                                 const QueryDrive* drive = nullptr) {
    EvictionCandidate best;
    double best_m = 0.0;
    bool first = true;
    for (int r = 0; r < array.config.n_rows; ++r) {
        const CaimRow& row = array.rows[static_cast<std::size_t>(r)];
        if (!row.occupied) continue;
        double m = row.acc_voltage;
        if (params.score_dependent_discharge) {
            if (!drive)
                throw std::invalid_argument(
                    "find_eviction_candidate: score-dependent mode needs the step's drive");
            m = std::max(0.0, row.acc_voltage - params.v_s) / row_current(array, r, *drive);
        }
        if (first || m < best_m) {
            best.row = r;
            best_m = m;
            best.tie = false;
            first = false;
        } else if (m == best_m) {
            best.tie = true;
        }
    }
    if (first) throw std::logic_error("find_eviction_candidate: no occupied rows");
    return best;
}

/// Lower median of the occupied rows' accumulator voltages; the documented
/// initial value for a freshly written token, keeping new tokens competitive
/// instead of immediately re-evicted.
inline double median_acc_voltage(const CaimArray& array) {
    std::vector<double> vals;
    vals.reserve(array.rows.size());
    for (const auto& row : array.rows)
        if (row.occupied) vals.push_back(row.acc_voltage);
    if (vals.empty()) throw std::logic_error("median_acc_voltage: no occupied rows");
    std::sort(vals.begin(), vals.end());
    return vals[(vals.size() - 1) / 2];
}

/// In-place static eviction: reprogram the victim row with the new key in a
/// single write cycle, no data movement elsewhere. Only legal once the
/// reserved slots are exhausted; the accumulator restarts at the array median.
inline void evict_and_overwrite(CaimArray& array, int victim, const std::vector<level_t>& new_key,
                                std::int64_t token_id, Rng& rng, EventLog* log = nullptr,
                                const CostParams* cost = nullptr, int step = -1) {
    array.check_row(victim);
    if (!array.rows[static_cast<std::size_t>(victim)].occupied)
        throw std::logic_error("evict_and_overwrite: victim row not occupied");
    if (array.occupied_count() < array.config.n_rows)
        throw std::logic_error("evict_and_overwrite: free reserved rows remain");
    const double init = median_acc_voltage(array);
    write_key(array, victim, new_key, token_id, rng, log, cost, step);
    array.rows[static_cast<std::size_t>(victim)].acc_voltage = init;
}

}  // namespace unicaim
