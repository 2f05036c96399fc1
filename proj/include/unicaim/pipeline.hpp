// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "unicaim/array.hpp"
#include "unicaim/cam.hpp"
#include "unicaim/charge.hpp"
#include "unicaim/cost.hpp"
#include "unicaim/mac.hpp"
#include "unicaim/pruning.hpp"

namespace unicaim {

struct HwStepResult {
    int step = -1;
    std::vector<int> selected_rows;
    int evicted_row = -1;
    std::int64_t evicted_token_id = -1;
    int written_row = -1;
    RaceOutcome outcome;
    MacBatch mac;
};

/// The full UniCAIM decode loop on the device-level array: CAM-mode top-k
/// race, charge-domain accumulation and static eviction, current-domain exact
/// scoring, in-place overwrite of the generated token. One pipeline owns one
/// array, one event log, and one random stream.
class HwPipeline {
public:
    HwPipeline(ArrayConfig array_cfg, ChargeParams charge, AdcConfig adc, CostParams cost,
               int n_adcs, int k_top, int m_reserved, std::uint64_t seed, double i_dyn = 1e-6)
        : array_(std::move(array_cfg)),
          charge_(charge),
          adc_(adc),
          cost_(cost),
          n_adcs_(n_adcs),
          k_top_(k_top),
          m_reserved_(m_reserved),
          rng_(seed) {
        cost_.validate();
        charge_.validate(array_.config.device.vdd);
        race_ = RaceConfig::for_k(k_top, array_.config.device.vdd, i_dyn);
        if (n_adcs_ < 1) throw std::invalid_argument("HwPipeline: n_adcs must be >= 1");
    }

    /// Load the prefill survivors. Keys arrive as integer-valued level rows;
    /// accumulator voltages start from the shared prefill squash so hardware
    /// and golden model enter decode in identical states. Loading belongs to
    /// the prefill stage and stays out of the decode-phase event log that the
    /// baseline ratios are computed against.
    void load_prefill(const KvCacheState& golden) {
        if (golden.n_slots() > array_.config.n_rows)
            throw std::invalid_argument("load_prefill: more slots than array rows");
        if (golden.keys.cols != array_.config.d)
            throw std::invalid_argument("load_prefill: dimension mismatch");
        std::vector<level_t> key(static_cast<std::size_t>(array_.config.d));
        for (int s = 0; s < golden.n_slots(); ++s) {
            if (!golden.occupied[static_cast<std::size_t>(s)]) continue;
            for (int c = 0; c < array_.config.d; ++c)
                key[static_cast<std::size_t>(c)] = to_level(golden.keys.at(s, c));
            write_key(array_, s, key, golden.token_ids[static_cast<std::size_t>(s)], rng_);
            array_.rows[static_cast<std::size_t>(s)].acc_voltage =
                golden.acc_score[static_cast<std::size_t>(s)];
        }
        generated_ = 0;
        step_index_ = 0;
    }

    HwStepResult step(const std::vector<level_t>& query_levels,
                      const std::vector<level_t>& new_key_levels, std::int64_t token_id) {
        HwStepResult res;
        res.step = step_index_;

        const QueryDrive drive = encode_query(query_levels, array_.config);
        const int occupied = array_.occupied_count();
        const int k_eff = std::min(k_top_, occupied);
        if (k_eff != race_.k) race_ = configure_k(race_, k_eff, &log_, &cost_, step_index_);

        res.outcome = run_race(array_, drive, race_, &log_, &cost_, step_index_);
        res.selected_rows = res.outcome.selected_rows;

        accumulate(array_, res.outcome, charge_, &log_, &cost_, step_index_);
        res.mac = exact_scores(array_, drive, res.selected_rows, adc_, n_adcs_, &log_, step_index_);

        if (generated_ < m_reserved_) {
            int target = -1;
            for (int r = 0; r < array_.config.n_rows; ++r)
                if (!array_.rows[static_cast<std::size_t>(r)].occupied) {
                    target = r;
                    break;
                }
            if (target < 0) throw std::logic_error("HwPipeline: reserved rows exhausted early");
            const double med = median_acc_voltage(array_);
            write_key(array_, target, new_key_levels, token_id, rng_, &log_, &cost_, step_index_);
            array_.rows[static_cast<std::size_t>(target)].acc_voltage = med;
            res.written_row = target;
        } else {
            const EvictionCandidate victim = find_eviction_candidate(array_, charge_, &drive);
            res.evicted_token_id = array_.rows[static_cast<std::size_t>(victim.row)].token_id;
            evict_and_overwrite(array_, victim.row, new_key_levels, token_id, rng_, &log_, &cost_,
                                step_index_);
            res.evicted_row = victim.row;
            res.written_row = victim.row;
        }

        ++generated_;
        ++step_index_;
        return res;
    }

    const CaimArray& array() const { return array_; }
    CaimArray& array() { return array_; }
    const EventLog& log() const { return log_; }
    EventLog& log() { return log_; }
    const RaceConfig& race() const { return race_; }
    const AdcConfig& adc() const { return adc_; }
    const CostParams& cost() const { return cost_; }
    int n_adcs() const { return n_adcs_; }
    Rng& rng() { return rng_; }

    static level_t to_level(double x) { return static_cast<level_t>(std::llround(x)); }

    static std::vector<level_t> to_levels(const double* p, int n) {
        std::vector<level_t> out(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = to_level(p[i]);
        return out;
    }

private:
    CaimArray array_;
    RaceConfig race_;
    ChargeParams charge_;
    AdcConfig adc_;
    CostParams cost_;
    int n_adcs_;
    int k_top_;
    int m_reserved_;
    int generated_ = 0;
    int step_index_ = 0;
    Rng rng_;
    EventLog log_;
};

}  // namespace unicaim
