// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace unicaim {

// ---------------------------------------------------------------------------
// Event log
// ---------------------------------------------------------------------------

enum class EventKind {
    precharge_sl,     // sense-line precharge, one count per SL
    race_discharge,   // partial SL discharge during the CAM race
    fdyn_program,     // reprogramming the top-k detector FeFET
    charge_share,     // one C_SL <-> C_Acc sharing event per row
    comparator,       // detector comparator evaluation
    adc_conversion,   // one SAR conversion
    write_cell,       // programming one cell (both FeFETs)
    sense_static,     // current-mode sensing while the ADC samples
};

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::precharge_sl: return "precharge_sl";
        case EventKind::race_discharge: return "race_discharge";
        case EventKind::fdyn_program: return "fdyn_program";
        case EventKind::charge_share: return "charge_share";
        case EventKind::comparator: return "comparator";
        case EventKind::adc_conversion: return "adc_conversion";
        case EventKind::write_cell: return "write_cell";
        case EventKind::sense_static: return "sense_static";
    }
    return "?";
}

struct CostEvent {
    int step = -1;  // decode step the event belongs to, -1 for setup
    EventKind kind{};
    std::int64_t count = 0;
    double energy_j = 0.0;
    double time_s = 0.0;  // contribution to the step's critical path (phases do not overlap)
};

/// Per-trial append-only log. Owned by one trial; tallying is pure.
struct EventLog {
    std::vector<CostEvent> events;

    void add(int step, EventKind kind, std::int64_t count, double energy_j, double time_s = 0.0) {
        events.push_back(CostEvent{step, kind, count, energy_j, time_s});
    }
    void clear() { events.clear(); }

    std::int64_t count_of(EventKind kind) const {
        std::int64_t n = 0;
        for (const auto& e : events)
            if (e.kind == kind) n += e.count;
        return n;
    }
    std::int64_t count_of(EventKind kind, int step) const {
        std::int64_t n = 0;
        for (const auto& e : events)
            if (e.kind == kind && e.step == step) n += e.count;
        return n;
    }
};

// ---------------------------------------------------------------------------
// Cost parameters
// ---------------------------------------------------------------------------

/// Per-event energy/time constants and device-count factors. These are
/// declared calibration inputs: every acceptance check on top of them is a
/// ratio or an ordering, never an absolute value.
struct CostParams {
    // energy per event [J]
    double e_precharge = 1e-13;   // per SL, = c_sl * vdd^2 with the default array
    double e_write = 1e-13;       // per cell program
    double e_adc = 1e-12;         // per SAR conversion
    double e_share = 1e-14;       // per charge-sharing event
    double e_comparator = 5e-14;  // per detector evaluation
    // phase durations [s]
    double t_race = 1e-9;   // precharge + race overhead (freeze time is added on top)
    double t_share = 5e-10;
    double t_adc = 1e-9;    // per conversion round
    double t_write = 1e-8;  // single write cycle
    // area factors [devices]
    int devices_per_cell = 4;           // two 1T1F units
    int devices_per_row_periphery = 12; // precharge + detector + FE-INV + switches

    void validate() const {
        const double vals[] = {e_precharge, e_write, e_adc, e_share, e_comparator,
                               t_race, t_share, t_adc, t_write};
        for (double v : vals)
            if (!(v > 0.0)) throw std::invalid_argument("CostParams: constants must be > 0");
        if (devices_per_cell <= 0 || devices_per_row_periphery <= 0)
            throw std::invalid_argument("CostParams: device counts must be > 0");
    }
};

// ---------------------------------------------------------------------------
// Area model
// ---------------------------------------------------------------------------

/// Storage cells per row: each of `d` dimensions needs ceil(key_bits /
/// bits_per_cell) cells, so a 3-bit multilevel cell replaces three 1-bit
/// cells exactly.
inline std::int64_t cells_per_row(int d, int key_bits, int bits_per_cell) {
    if (d < 1 || key_bits < 1 || bits_per_cell < 1)
        throw std::invalid_argument("cells_per_row: arguments must be >= 1");
    const std::int64_t per_dim = (key_bits + bits_per_cell - 1) / bits_per_cell;
    return static_cast<std::int64_t>(d) * per_dim;
}

struct AreaBreakdown {
    std::int64_t cell_devices = 0;
    std::int64_t periphery_devices = 0;
    std::int64_t total() const { return cell_devices + periphery_devices; }
};

inline AreaBreakdown area_devices(std::int64_t n_rows, int d, int key_bits, int bits_per_cell,
                                  const CostParams& p) {
    AreaBreakdown a;
    a.cell_devices = n_rows * cells_per_row(d, key_bits, bits_per_cell) * p.devices_per_cell;
    a.periphery_devices = n_rows * p.devices_per_row_periphery;
    return a;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct CostReport {
    std::int64_t area_devices = 0;
    std::int64_t area_cell_devices = 0;
    std::int64_t area_periphery_devices = 0;
    double energy_total = 0.0;
    double delay_total = 0.0;
    double aedp = 0.0;
    // per-kind breakdowns
    std::vector<std::pair<std::string, double>> energy_by_kind;
    std::vector<std::pair<std::string, double>> delay_by_kind;

    double energy_of(const std::string& kind) const {
        for (const auto& [k, v] : energy_by_kind)
            if (k == kind) return v;
        return 0.0;
    }
    double delay_of(const std::string& kind) const {
        for (const auto& [k, v] : delay_by_kind)
            if (k == kind) return v;
        return 0.0;
    }
};

/// Sum a trial's event log into a report. Energy is the plain sum of logged
/// event energies; delay is the sum of logged phase times (the simulator logs
/// phases already serialized: race -> share -> ADC rounds -> write).
inline CostReport tally(const EventLog& log, const AreaBreakdown& area) {
    CostReport r;
    r.area_cell_devices = area.cell_devices;
    r.area_periphery_devices = area.periphery_devices;
    r.area_devices = area.total();

    constexpr int n_kinds = 8;
    double energy[n_kinds] = {0};
    double delay[n_kinds] = {0};
    for (const auto& e : log.events) {
        if (!(e.energy_j >= 0.0) || !(e.time_s >= 0.0))
            throw std::runtime_error("tally: malformed event (negative energy or time)");
        const int k = static_cast<int>(e.kind);
        energy[k] += e.energy_j;
        delay[k] += e.time_s;
        r.energy_total += e.energy_j;
        r.delay_total += e.time_s;
    }
    for (int k = 0; k < n_kinds; ++k) {
        const char* name = to_string(static_cast<EventKind>(k));
        r.energy_by_kind.emplace_back(name, energy[k]);
        r.delay_by_kind.emplace_back(name, delay[k]);
    }
    r.aedp = static_cast<double>(r.area_devices) * r.energy_total * r.delay_total;
    return r;
}

// ---------------------------------------------------------------------------
// Workloads and analytic baseline laws
// ---------------------------------------------------------------------------

/// Shape of one decode workload, shared between the simulated design and the
/// analytic baselines so ratios compare like against like.
struct Workload {
    int n_input = 1024;   // prompt length
    int n_output = 64;    // decode steps
    int d = 128;
    int h_heavy = 512;
    int m_reserved = 64;
    double prune_ratio = 0.8;  // fraction of kept rows dynamically pruned per step
    int key_bits = 3;          // storage precision class per dimension
    int bits_per_cell = 3;     // 3 = multilevel cell, 1 = three cells per dimension
    int n_adcs = 64;

    int rows_kept() const { return h_heavy + m_reserved; }
    int k_selected() const {
        const int k = static_cast<int>(std::llround((1.0 - prune_ratio) * rows_kept()));
        return std::max(1, k);
    }
    /// Cache size of an unpruned design at decode step t.
    int dense_rows(int t) const { return n_input + t; }

    bool same_shape(const Workload& o) const {
        return n_input == o.n_input && n_output == o.n_output && d == o.d &&
               h_heavy == o.h_heavy && m_reserved == o.m_reserved &&
               prune_ratio == o.prune_ratio && key_bits == o.key_bits && n_adcs == o.n_adcs;
    }
};

inline int adc_rounds(int conversions, int n_adcs) {
    return (conversions + n_adcs - 1) / n_adcs;
}

/// Abstract accelerator cost law. Baselines are never simulated: each one is
/// a pure function of the workload shape, parameterized to match its design
/// class (storage technology, selection mechanism, ADC usage).
struct BaselineModel {
    std::string name;
    bool static_pruning = false;   // retains only h+m rows
    bool dynamic_exact_topk = false;  // scores everything, sorts, keeps k
    bool dynamic_approx = false;   // low-precision pre-pass, exact on k
    int devices_per_bit = 8;       // storage devices per key bit
    double sort_t_unit = 1e-10;    // per compare-exchange stage [s]
    double sort_e_unit = 5e-14;    // per compare-exchange [J]
    double approx_adc_scale = 0.25;  // LP conversion energy relative to e_adc
    double approx_t_scale = 0.5;

    CostReport evaluate(const Workload& w, const CostParams& p) const;
};

inline CostReport BaselineModel::evaluate(const Workload& w, const CostParams& p) const {
    CostReport r;
    const int rows_static = w.rows_kept();
    const int k = w.k_selected();

    // Area: per-bit storage (no multilevel capability) plus row periphery.
    const std::int64_t rows_area = static_pruning
        ? rows_static
        : static_cast<std::int64_t>(w.dense_rows(w.n_output));
    r.area_cell_devices = rows_area * static_cast<std::int64_t>(w.d) * w.key_bits * devices_per_bit;
    r.area_periphery_devices = rows_area * p.devices_per_row_periphery;
    r.area_devices = r.area_cell_devices + r.area_periphery_devices;

    double energy = 0.0, delay = 0.0;
    for (int t = 0; t < w.n_output; ++t) {
        const int n = static_pruning ? rows_static : w.dense_rows(t);
        energy += n * p.e_precharge;
        if (dynamic_exact_topk) {
            // full-precision scoring of every row, then an O(n log n) top-k sort
            const double stages = static_cast<double>(n) * std::log2(std::max(2, n));
            energy += n * p.e_adc + stages * sort_e_unit + k * p.e_adc;
            delay += adc_rounds(n, w.n_adcs) * p.t_adc + stages * sort_t_unit +
                     adc_rounds(k, w.n_adcs) * p.t_adc;
        } else if (dynamic_approx) {
            energy += n * p.e_adc * approx_adc_scale + k * p.e_adc;
            delay += adc_rounds(n, w.n_adcs) * p.t_adc * approx_t_scale +
                     adc_rounds(k, w.n_adcs) * p.t_adc;
        } else {
            // no dynamic selection: exact attention over every retained row
            energy += n * p.e_adc;
            delay += adc_rounds(n, w.n_adcs) * p.t_adc;
        }
        // every design writes the newly generated key
        energy += cells_per_row(w.d, w.key_bits, 1) * p.e_write;
        delay += p.t_write;
    }
    r.energy_total = energy;
    r.delay_total = delay;
    r.aedp = static_cast<double>(r.area_devices) * r.energy_total * r.delay_total;
    return r;
}

inline BaselineModel baseline_sort_topk_cim() {
    BaselineModel b;
    b.name = "sort_topk_cim";
    b.dynamic_exact_topk = true;
    b.devices_per_bit = 8;  // SRAM storage
    return b;
}

inline BaselineModel baseline_fixed_window_cim() {
    BaselineModel b;
    b.name = "fixed_window_cim";
    b.static_pruning = true;  // fixed-pattern window of the same kept size
    b.devices_per_bit = 8;
    return b;
}

inline BaselineModel baseline_approx_score_nvm() {
    BaselineModel b;
    b.name = "approx_score_nvm";
    b.dynamic_approx = true;
    b.devices_per_bit = 4;  // NVM storage
    return b;
}

struct RatioReport {
    std::string baseline;
    double area_ratio = 0.0;
    double energy_ratio = 0.0;
    double delay_ratio = 0.0;
    double aedp_ratio = 0.0;
};

/// Ratios of a baseline law over a (simulated or law-derived) UniCAIM report
/// for the same workload shape.
inline RatioReport compare(const CostReport& unicaim, const BaselineModel& baseline,
                           const Workload& workload, const Workload& report_workload,
                           const CostParams& params) {
    if (!workload.same_shape(report_workload))
        throw std::invalid_argument("compare: workload shapes differ");
    const CostReport b = baseline.evaluate(workload, params);
    RatioReport r;
    r.baseline = baseline.name;
    r.area_ratio = static_cast<double>(b.area_devices) / static_cast<double>(unicaim.area_devices);
    r.energy_ratio = b.energy_total / unicaim.energy_total;
    r.delay_ratio = b.delay_total / unicaim.delay_total;
    r.aedp_ratio = b.aedp / unicaim.aedp;
    return r;
}

}  // namespace unicaim
