// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "unicaim/config.hpp"
#include "unicaim/pipeline.hpp"

namespace unicaim {

inline std::string fmt_g(double v) {
    char b[48];
    std::snprintf(b, sizeof(b), "%.12g", v);
    return b;
}

// ---------------------------------------------------------------------------
// Hardware-vs-golden equivalence
// ---------------------------------------------------------------------------

struct EquivalenceSummary {
    int seeds_run = 0;
    long steps_total = 0;
    long selected_matches = 0;
    long evicted_matches = 0;
    long score_matches = 0;
    bool all_match = true;
    std::string first_mismatch;

    double selected_match_rate() const {
        return steps_total ? static_cast<double>(selected_matches) / steps_total : 1.0;
    }
    double evicted_match_rate() const {
        return steps_total ? static_cast<double>(evicted_matches) / steps_total : 1.0;
    }
};

/// Build the array config the decode pipeline needs for a pruning setup: one
/// row per retained slot.
inline ArrayConfig array_for_prune(const SimConfig& cfg, int h_heavy, int m_reserved) {
    ArrayConfig a = cfg.array;
    a.n_rows = h_heavy + m_reserved;
    a.validate();
    return a;
}

/// Run the device-level pipeline and the golden policy on identical quantized
/// traces and compare every step's selected set, eviction index and decoded
/// scores. Requires sigma = 0; any variation would make the comparison
/// statistical rather than exact.
inline EquivalenceSummary run_equivalence(const SimConfig& cfg, const ExperimentSpec& spec,
                                          bool debug_mismatch_tie_rule = false) {
    if (cfg.array.device.sigma_vth != 0.0)
        throw std::runtime_error("equivalence: requires sigma_vth = 0 in the config");
    EquivalenceSummary sum;

    PruneConfig pcfg = cfg.prune;
    pcfg.normalize_proxy = false;  // scores are already grid-bounded integers
    pcfg.debug_tie_break_highest = debug_mismatch_tie_rule;
    const ArrayConfig acfg = array_for_prune(cfg, pcfg.h_heavy, pcfg.m_reserved);

    for (std::uint64_t seed : spec.seeds) {
        AttentionTrace trace =
            synth_trace(seed, spec.input_len, spec.steps, acfg.d, spec.heavy_fraction);
        AttentionTrace q = quantize_trace(trace, acfg.level_radius_key, acfg.level_radius_query);

        PruneConfig gold_cfg = pcfg;
        KvCacheState golden = prefill_prune(q, [&] {
            PruneConfig p = pcfg;
            p.debug_tie_break_highest = false;  // prefill shared by both sides
            return p;
        }());

        HwPipeline hw(acfg, cfg.charge, cfg.make_adc(), cfg.cost, cfg.n_adcs, pcfg.k_top,
                      pcfg.m_reserved, seed ^ 0xc0ffee, cfg.i_dyn);
        hw.load_prefill(golden);

        for (int t = 0; t < q.n_steps(); ++t) {
            std::vector<double> qv(q.decode_queries.row(t), q.decode_queries.row(t) + q.dim());
            std::vector<double> kv(q.decode_keys.row(t), q.decode_keys.row(t) + q.dim());
            const std::int64_t token = q.n_input() + t;

            DecodeStepResult g = decode_step(golden, qv, kv, token, gold_cfg);
            HwStepResult h = hw.step(HwPipeline::to_levels(qv.data(), q.dim()),
                                     HwPipeline::to_levels(kv.data(), q.dim()), token);

            ++sum.steps_total;
            const bool sel_ok = g.selected_slots == h.selected_rows;
            const bool evi_ok = g.evicted_slot == h.evicted_row;
            bool score_ok = true;
            for (std::size_t i = 0; i < h.mac.results.size() && score_ok; ++i) {
                const long want = static_cast<long>(std::llround(g.selected_scores[i]));
                score_ok = h.mac.results[i].decoded_score == want;
            }
            sum.selected_matches += sel_ok;
            sum.evicted_matches += evi_ok;
            sum.score_matches += score_ok;
            if ((!sel_ok || !evi_ok || !score_ok) && sum.all_match) {
                sum.all_match = false;
                std::ostringstream os;
                os << "seed " << seed << " step " << t << ":"
                   << (sel_ok ? "" : " selected-set") << (evi_ok ? "" : " eviction")
                   << (score_ok ? "" : " decoded-score") << " mismatch";
                sum.first_mismatch = os.str();
            }
        }
        ++sum.seeds_run;
    }
    return sum;
}

// ---------------------------------------------------------------------------
// Cost simulation of one decode workload
// ---------------------------------------------------------------------------

struct SimulatedCost {
    EventLog log;
    CostReport report;            // area with the configured bits_per_cell
    CostReport report_alt_bits;   // same events, alternative cell precision
};

/// Simulate the static+dynamic pipeline on a synthetic workload and tally its
/// event log. The reserved slots are consumed during an untallied warmup so
/// the measured window is the steady-state decode phase (fixed cache size,
/// one eviction per step). Cell precision only affects storage area in this
/// model, so the same run prices both the multilevel and the 1-bit variant.
inline SimulatedCost simulate_unicaim(const SimConfig& cfg, int k_top, int input_len,
                                      int output_len, std::uint64_t seed, int key_bits = 3,
                                      int bits_per_cell = 3, int alt_bits_per_cell = 1) {
    PruneConfig pcfg = cfg.prune;
    pcfg.k_top = k_top;
    pcfg.normalize_proxy = false;
    const ArrayConfig acfg = array_for_prune(cfg, pcfg.h_heavy, pcfg.m_reserved);

    const int warmup = pcfg.m_reserved;
    AttentionTrace trace = synth_trace(seed, input_len, warmup + output_len, acfg.d, 0.1);
    AttentionTrace q = quantize_trace(trace, acfg.level_radius_key, acfg.level_radius_query);
    KvCacheState golden = prefill_prune(q, pcfg);

    HwPipeline hw(acfg, cfg.charge, cfg.make_adc(), cfg.cost, cfg.n_adcs, pcfg.k_top,
                  pcfg.m_reserved, seed ^ 0xdecade, cfg.i_dyn);
    hw.load_prefill(golden);
    for (int t = 0; t < q.n_steps(); ++t) {
        std::vector<double> qv(q.decode_queries.row(t), q.decode_queries.row(t) + q.dim());
        std::vector<double> kv(q.decode_keys.row(t), q.decode_keys.row(t) + q.dim());
        hw.step(HwPipeline::to_levels(qv.data(), q.dim()),
                HwPipeline::to_levels(kv.data(), q.dim()), q.n_input() + t);
        if (t + 1 == warmup) hw.log().clear();
    }

    SimulatedCost out;
    out.log = hw.log();
    out.report = tally(out.log, area_devices(acfg.n_rows, acfg.d, key_bits, bits_per_cell,
                                             cfg.cost));
    out.report_alt_bits = tally(out.log, area_devices(acfg.n_rows, acfg.d, key_bits,
                                                      alt_bits_per_cell, cfg.cost));
    return out;
}

/// Analytic cost of the unpruned ("dense") and prefill-only ("static")
/// conditions: plain CIM with the same cell technology, exact attention over
/// every cached row each step, no race and no selection.
inline CostReport condition_cost_analytic(const SimConfig& cfg, int input_len, int output_len,
                                          bool static_pruned, int key_bits, int bits_per_cell) {
    const CostParams& p = cfg.cost;
    const int kept = cfg.prune.h_heavy + cfg.prune.m_reserved;
    double energy = 0.0, delay = 0.0;
    const std::int64_t wcells = cells_per_row(cfg.array.d, key_bits, bits_per_cell);
    for (int t = 0; t < output_len; ++t) {
        const int n = static_pruned ? kept : input_len + t;
        energy += n * (p.e_precharge + p.e_adc) + static_cast<double>(wcells) * p.e_write;
        delay += adc_rounds(n, cfg.n_adcs) * p.t_adc + p.t_write;
    }
    const std::int64_t rows = static_pruned ? kept : input_len + output_len;
    CostReport r;
    const AreaBreakdown a = area_devices(rows, cfg.array.d, key_bits, bits_per_cell, p);
    r.area_cell_devices = a.cell_devices;
    r.area_periphery_devices = a.periphery_devices;
    r.area_devices = a.total();
    r.energy_total = energy;
    r.delay_total = delay;
    r.aedp = static_cast<double>(r.area_devices) * energy * delay;
    return r;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    int input_len = 0;
    int output_len = 0;
    std::string condition;
    std::int64_t rows = 0;
    int k_top = 0;
    int bits_per_cell = 1;
    CostReport cost;
    double overlap_mean = 1.0;
    double retained_mass_mean = 1.0;
};

inline std::vector<SweepRow> sweep_rows(const SimConfig& cfg, const ExperimentSpec& spec,
                                        bool with_fidelity = true) {
    std::vector<SweepRow> rows;
    const std::uint64_t seed = spec.seeds.empty() ? 1 : spec.seeds.front();
    const int kept = cfg.prune.h_heavy + cfg.prune.m_reserved;

    for (int il : spec.input_lens) {
        for (int ol : spec.output_lens) {
            // dense
            {
                SweepRow r;
                r.input_len = il;
                r.output_len = ol;
                r.condition = "dense";
                r.rows = il + ol;
                r.k_top = 0;
                r.bits_per_cell = 1;
                r.cost = condition_cost_analytic(cfg, il, ol, false, 3, 1);
                rows.push_back(r);
            }
            // static prefill pruning only
            {
                SweepRow r;
                r.input_len = il;
                r.output_len = ol;
                r.condition = "static";
                r.rows = kept;
                r.k_top = kept;
                r.bits_per_cell = 1;
                r.cost = condition_cost_analytic(cfg, il, ol, true, 3, 1);
                if (with_fidelity) {
                    PruneConfig p = cfg.prune;
                    p.k_top = kept;
                    p.normalize_proxy = true;
                    AttentionTrace tr = synth_trace(seed, il, ol, cfg.array.d, spec.heavy_fraction);
                    GenerationResult g = run_generation(tr, p);
                    r.overlap_mean = g.overlap_mean;
                    r.retained_mass_mean = g.retained_mass_mean;
                }
                rows.push_back(r);
            }
            // static + dynamic, 1-bit and multilevel cells
            {
                SimulatedCost sim = simulate_unicaim(cfg, cfg.prune.k_top, il, ol, seed, 3, 3, 1);
                double overlap = 1.0, mass = 1.0;
                if (with_fidelity) {
                    PruneConfig p = cfg.prune;
                    p.normalize_proxy = true;
                    AttentionTrace tr = synth_trace(seed, il, ol, cfg.array.d, spec.heavy_fraction);
                    GenerationResult g = run_generation(tr, p);
                    overlap = g.overlap_mean;
                    mass = g.retained_mass_mean;
                }
                SweepRow r;
                r.input_len = il;
                r.output_len = ol;
                r.rows = kept;
                r.k_top = cfg.prune.k_top;
                r.overlap_mean = overlap;
                r.retained_mass_mean = mass;

                r.condition = "static_dynamic";
                r.bits_per_cell = 1;
                r.cost = sim.report_alt_bits;
                rows.push_back(r);

                r.condition = "static_dynamic_multilevel";
                r.bits_per_cell = 3;
                r.cost = sim.report;
                rows.push_back(r);
            }
        }
    }
    return rows;
}

/// sweep-v1 CSV schema (documented in the README).
inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "input_len,output_len,condition,rows,k_top,bits_per_cell,area_devices,"
          "area_cell_devices,area_periphery_devices,energy_j,delay_s,aedp,"
          "overlap_mean,retained_mass_mean\n";
    for (const auto& r : rows) {
        os << r.input_len << ',' << r.output_len << ',' << r.condition << ',' << r.rows << ','
           << r.k_top << ',' << r.bits_per_cell << ',' << r.cost.area_devices << ','
           << r.cost.area_cell_devices << ',' << r.cost.area_periphery_devices << ','
           << fmt_g(r.cost.energy_total) << ',' << fmt_g(r.cost.delay_total) << ','
           << fmt_g(r.cost.aedp) << ',' << fmt_g(r.overlap_mean) << ','
           << fmt_g(r.retained_mass_mean) << "\n";
    }
    return os.str();
}

inline std::string run_sweep(const SimConfig& cfg, const ExperimentSpec& spec,
                             bool with_fidelity = true) {
    return sweep_csv(sweep_rows(cfg, spec, with_fidelity));
}

// ---------------------------------------------------------------------------
// Variation study
// ---------------------------------------------------------------------------

struct VariationRow {
    double sigma_mv = 0.0;
    int trials = 0;
    double overlap_mean = 0.0;
    double eviction_agreement = 0.0;
    double decode_err_mean = 0.0;
    double decode_err_median = 0.0;
    double decode_err_p95 = 0.0;
    long clamp_events = 0;
};

/// Single-decode-step Monte-Carlo trials at each variation level. Trials with
/// the same index share a seed across sigma points (the variation offsets are
/// the same underlying normal draws, scaled), which keeps the degradation
/// curves clean.
inline std::vector<VariationRow> variation_rows(const SimConfig& cfg, const ExperimentSpec& spec) {
    std::vector<VariationRow> out;
    const int n_rows = cfg.prune.h_heavy + cfg.prune.m_reserved;
    const int k = cfg.prune.k_top;

    for (double sigma_mv : spec.sigmas_mv) {
        SimConfig c = cfg;
        c.array.device.sigma_vth = sigma_mv * 1e-3;
        c.array.validate();
        const ArrayConfig acfg = array_for_prune(c, cfg.prune.h_heavy, cfg.prune.m_reserved);
        const AdcConfig adc = c.make_adc();
        const ChargeParams charge = c.charge;
        const ProxyLaw law = ProxyLaw::from_array(acfg);

        VariationRow row;
        row.sigma_mv = sigma_mv;
        row.trials = spec.trials;
        std::vector<double> errs;
        double overlap_sum = 0.0;
        int evict_agree = 0;

        for (int trial = 0; trial < spec.trials; ++trial) {
            const std::uint64_t seed =
                (spec.seeds.empty() ? 1 : spec.seeds.front()) * 1000003ULL + trial;
            Rng rng(seed);
            CaimArray array(acfg);
            std::vector<level_t> key(static_cast<std::size_t>(acfg.d));
            for (int r = 0; r < n_rows; ++r) {
                for (auto& kk : key)
                    kk = rng.uniform_int(-acfg.level_radius_key, acfg.level_radius_key);
                write_key(array, r, key, r, rng);
            }
            std::vector<level_t> qlev(static_cast<std::size_t>(acfg.d));
            for (auto& qq : qlev)
                qq = rng.uniform_int(-acfg.level_radius_query, acfg.level_radius_query);
            const QueryDrive drive = encode_query(qlev, acfg);

            // exact integer scores are the oracle
            std::vector<double> scores(static_cast<std::size_t>(n_rows));
            std::vector<int> all(static_cast<std::size_t>(n_rows));
            for (int r = 0; r < n_rows; ++r) {
                all[static_cast<std::size_t>(r)] = r;
                scores[static_cast<std::size_t>(r)] =
                    static_cast<double>(row_score_from_states(array, r, drive));
            }
            const std::vector<int> oracle = top_k_slots(scores, all, k);

            const RaceConfig race = RaceConfig::for_k(k, acfg.device.vdd, c.i_dyn);
            const RaceOutcome outcome = run_race(array, drive, race);
            int hits = 0;
            std::vector<char> in_oracle(static_cast<std::size_t>(n_rows), 0);
            for (int r : oracle) in_oracle[static_cast<std::size_t>(r)] = 1;
            for (int r : outcome.selected_rows) hits += in_oracle[static_cast<std::size_t>(r)];
            overlap_sum += static_cast<double>(hits) / k;

            // one accumulate from reset, then the eviction race vs the golden argmin
            accumulate(array, outcome, charge);
            const EvictionCandidate victim = find_eviction_candidate(array, charge, &drive);
            const std::vector<double> proxies = residual_proxies(scores, k, law);
            int victim_gold = 0;
            double best = ema_update(0.0, proxies[0], charge.lambda);
            for (int r = 1; r < n_rows; ++r) {
                const double a = ema_update(0.0, proxies[static_cast<std::size_t>(r)], charge.lambda);
                if (a < best) {
                    best = a;
                    victim_gold = r;
                }
            }
            evict_agree += (victim.row == victim_gold) ? 1 : 0;

            MacBatch mac = exact_scores(array, drive, outcome.selected_rows, adc, c.n_adcs);
            row.clamp_events += mac.clamp_events;
            for (const MacResult& m : mac.results)
                errs.push_back(std::abs(static_cast<double>(m.decoded_score) -
                                        scores[static_cast<std::size_t>(m.row)]));
        }

        row.overlap_mean = overlap_sum / spec.trials;
        row.eviction_agreement = static_cast<double>(evict_agree) / spec.trials;
        if (!errs.empty()) {
            row.decode_err_mean =
                std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(errs.size());
            std::sort(errs.begin(), errs.end());
            row.decode_err_median = errs[(errs.size() - 1) / 2];
            row.decode_err_p95 = errs[static_cast<std::size_t>(0.95 * (errs.size() - 1))];
        }
        out.push_back(row);
    }
    return out;
}

/// variation-v1 CSV schema.
inline std::string variation_csv(const std::vector<VariationRow>& rows) {
    std::ostringstream os;
    os << "sigma_mv,trials,topk_overlap_mean,eviction_agreement,decode_err_mean,"
          "decode_err_median,decode_err_p95,clamp_events\n";
    for (const auto& r : rows) {
        os << fmt_g(r.sigma_mv) << ',' << r.trials << ',' << fmt_g(r.overlap_mean) << ','
           << fmt_g(r.eviction_agreement) << ',' << fmt_g(r.decode_err_mean) << ','
           << fmt_g(r.decode_err_median) << ',' << fmt_g(r.decode_err_p95) << ','
           << r.clamp_events << "\n";
    }
    return os.str();
}

inline std::string run_variation(const SimConfig& cfg, const ExperimentSpec& spec) {
    return variation_csv(variation_rows(cfg, spec));
}

// ---------------------------------------------------------------------------
// Baseline comparison
// ---------------------------------------------------------------------------

struct CompareRow {
    std::string baseline;
    double prune_ratio = 0.0;
    int bits_per_cell = 1;
    RatioReport ratios;
};

inline std::vector<CompareRow> compare_rows(const SimConfig& cfg, const ExperimentSpec& spec) {
    std::vector<CompareRow> out;
    const std::uint64_t seed = spec.seeds.empty() ? 1 : spec.seeds.front();
    const std::vector<BaselineModel> baselines = {
        baseline_approx_score_nvm(), baseline_fixed_window_cim(), baseline_sort_topk_cim()};

    for (double ratio : spec.prune_ratios) {
        Workload w;
        w.n_input = spec.input_len;
        w.n_output = spec.steps;
        w.d = cfg.array.d;
        w.h_heavy = cfg.prune.h_heavy;
        w.m_reserved = cfg.prune.m_reserved;
        w.prune_ratio = ratio;
        w.n_adcs = cfg.n_adcs;
        const int k = w.k_selected();
        SimulatedCost sim =
            simulate_unicaim(cfg, k, w.n_input, w.n_output, seed, w.key_bits, 3, 1);
        for (int bits : {1, 3}) {
            Workload wb = w;
            wb.bits_per_cell = bits;
            const CostReport& rep = (bits == 3) ? sim.report : sim.report_alt_bits;
            for (const BaselineModel& b : baselines) {
                CompareRow row;
                row.baseline = b.name;
                row.prune_ratio = ratio;
                row.bits_per_cell = bits;
                row.ratios = compare(rep, b, wb, wb, cfg.cost);
                out.push_back(row);
            }
        }
    }
    return out;
}

/// compare-v1 CSV schema.
inline std::string compare_csv(const std::vector<CompareRow>& rows) {
    std::ostringstream os;
    os << "baseline,prune_ratio,bits_per_cell,area_ratio,energy_ratio,delay_ratio,aedp_ratio\n";
    for (const auto& r : rows) {
        os << r.baseline << ',' << fmt_g(r.prune_ratio) << ',' << r.bits_per_cell << ','
           << fmt_g(r.ratios.area_ratio) << ',' << fmt_g(r.ratios.energy_ratio) << ','
           << fmt_g(r.ratios.delay_ratio) << ',' << fmt_g(r.ratios.aedp_ratio) << "\n";
    }
    return os.str();
}

inline std::string run_compare(const SimConfig& cfg, const ExperimentSpec& spec) {
    return compare_csv(compare_rows(cfg, spec));
}

// ---------------------------------------------------------------------------
// Attention-trace files
// ---------------------------------------------------------------------------
//
// Line-delimited records: one meta line, one line per prompt token, one line
// per decode step. Doubles round-trip exactly through the JSON encoder, so a
// reloaded trace reproduces a run bit for bit.

inline void save_trace(const AttentionTrace& trace, std::ostream& os) {
    json meta;
    meta["kind"] = "meta";
    meta["version"] = 1;
    meta["n_input"] = trace.n_input();
    meta["steps"] = trace.n_steps();
    meta["d"] = trace.dim();
    meta["heavy_tokens"] = trace.heavy_tokens;
    os << meta.dump() << "\n";
    for (int r = 0; r < trace.n_input(); ++r) {
        json rec;
        rec["kind"] = "prompt";
        rec["key"] = std::vector<double>(trace.prompt_keys.row(r),
                                         trace.prompt_keys.row(r) + trace.dim());
        rec["prefill_attention"] = trace.prefill_attention[static_cast<std::size_t>(r)];
        os << rec.dump() << "\n";
    }
    for (int t = 0; t < trace.n_steps(); ++t) {
        json rec;
        rec["kind"] = "step";
        rec["query"] = std::vector<double>(trace.decode_queries.row(t),
                                           trace.decode_queries.row(t) + trace.dim());
        rec["key"] = std::vector<double>(trace.decode_keys.row(t),
                                         trace.decode_keys.row(t) + trace.dim());
        os << rec.dump() << "\n";
    }
}

inline AttentionTrace load_trace(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("load_trace: empty stream");
    const json meta = json::parse(line);
    if (meta.value("kind", std::string()) != "meta" || meta.value("version", 0) != 1)
        throw std::runtime_error("load_trace: missing or unsupported meta record");
    const int n_input = meta.at("n_input").get<int>();
    const int steps = meta.at("steps").get<int>();
    const int d = meta.at("d").get<int>();

    AttentionTrace tr;
    tr.prompt_keys = Matrix(n_input, d);
    tr.decode_queries = Matrix(steps, d);
    tr.decode_keys = Matrix(steps, d);
    tr.prefill_attention.assign(static_cast<std::size_t>(n_input), 0.0);
    tr.heavy_tokens = meta.value("heavy_tokens", std::vector<int>{});

    auto fill_row = [d](const json& arr, double* dst) {
        if (static_cast<int>(arr.size()) != d)
            throw std::runtime_error("load_trace: row dimension mismatch");
        for (int c = 0; c < d; ++c) dst[c] = arr[static_cast<std::size_t>(c)].get<double>();
    };
    int prompt_seen = 0, steps_seen = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const json rec = json::parse(line);
        const std::string kind = rec.value("kind", std::string());
        if (kind == "prompt") {
            if (prompt_seen >= n_input) throw std::runtime_error("load_trace: extra prompt rows");
            fill_row(rec.at("key"), tr.prompt_keys.row(prompt_seen));
            tr.prefill_attention[static_cast<std::size_t>(prompt_seen)] =
                rec.at("prefill_attention").get<double>();
            ++prompt_seen;
        } else if (kind == "step") {
            if (steps_seen >= steps) throw std::runtime_error("load_trace: extra step rows");
            fill_row(rec.at("query"), tr.decode_queries.row(steps_seen));
            fill_row(rec.at("key"), tr.decode_keys.row(steps_seen));
            ++steps_seen;
        } else {
            throw std::runtime_error("load_trace: unknown record kind '" + kind + "'");
        }
    }
    if (prompt_seen != n_input || steps_seen != steps)
        throw std::runtime_error("load_trace: truncated trace");
    return tr;
}

// ---------------------------------------------------------------------------
// Trace emission
// ---------------------------------------------------------------------------

/// One JSON record per decode step: the race outcome, the eviction, and the
/// decoded scores of the selected rows. Verbose mode adds the accumulator
/// snapshot.
inline std::string run_trace(const SimConfig& cfg, const ExperimentSpec& spec) {
    const std::uint64_t seed = spec.seeds.empty() ? 1 : spec.seeds.front();
    PruneConfig pcfg = cfg.prune;
    pcfg.normalize_proxy = false;
    const ArrayConfig acfg = array_for_prune(cfg, pcfg.h_heavy, pcfg.m_reserved);

    AttentionTrace trace =
        synth_trace(seed, spec.input_len, spec.steps, acfg.d, spec.heavy_fraction);
    AttentionTrace q = quantize_trace(trace, acfg.level_radius_key, acfg.level_radius_query);
    KvCacheState golden = prefill_prune(q, pcfg);

    HwPipeline hw(acfg, cfg.charge, cfg.make_adc(), cfg.cost, cfg.n_adcs, pcfg.k_top,
                  pcfg.m_reserved, seed ^ 0xc0ffee, cfg.i_dyn);
    hw.load_prefill(golden);

    std::ostringstream os;
    for (int t = 0; t < q.n_steps(); ++t) {
        std::vector<double> qv(q.decode_queries.row(t), q.decode_queries.row(t) + q.dim());
        std::vector<double> kv(q.decode_keys.row(t), q.decode_keys.row(t) + q.dim());
        HwStepResult h = hw.step(HwPipeline::to_levels(qv.data(), q.dim()),
                                 HwPipeline::to_levels(kv.data(), q.dim()), q.n_input() + t);
        json rec;
        rec["step"] = t;
        rec["selected_rows"] = h.selected_rows;
        rec["evicted_row"] = h.evicted_row;
        rec["written_row"] = h.written_row;
        rec["freeze_time_s"] = h.outcome.freeze_time;
        rec["tie_events"] = h.outcome.tie_events.size();
        json scores = json::array();
        for (const MacResult& m : h.mac.results)
            scores.push_back({{"row", m.row}, {"score", m.decoded_score}});
        rec["scores"] = scores;
        if (spec.verbose) {
            json acc = json::array();
            for (const auto& r : hw.array().rows) acc.push_back(r.occupied ? r.acc_voltage : -1.0);
            rec["acc_voltage"] = acc;
        }
        os << rec.dump() << "\n";
    }
    return os.str();
}

}  // namespace unicaim
