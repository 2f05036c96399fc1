// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "unicaim/array.hpp"
#include "unicaim/cam.hpp"
#include "unicaim/charge.hpp"
#include "unicaim/rng.hpp"

namespace unicaim {

// ---------------------------------------------------------------------------
// Dense matrices (row-major, tiny on purpose)
// ---------------------------------------------------------------------------

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

inline double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

/// Attention scores of one query against every key row: Attn(q, K) = q K^T.
inline std::vector<double> attn_scores(const std::vector<double>& q, const Matrix& keys) {
    if (static_cast<int>(q.size()) != keys.cols)
        throw std::invalid_argument("attn_scores: dimension mismatch");
    std::vector<double> s(static_cast<std::size_t>(keys.rows));
    for (int r = 0; r < keys.rows; ++r) s[static_cast<std::size_t>(r)] = dot(q.data(), keys.row(r), keys.cols);
    return s;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class AccumulationMode { ema, sum };

/// Constants of the hardware similarity-to-residual mapping. The golden model
/// accumulates exactly the voltages the charge-domain mode would, evaluated
/// through the same functions, so hardware and golden eviction decisions agree
/// to the last bit at zero variation.
struct ProxyLaw {
    double i_base = 0.0;
    double alpha = 0.0;
    double c_sl = 1e-13;
    double vdd = 1.0;
    double v_half = 0.5;
    double s_max = 512.0;

    static ProxyLaw from_array(const ArrayConfig& cfg) {
        ProxyLaw law;
        law.i_base = cfg.i_base;
        law.alpha = cfg.alpha;
        law.c_sl = cfg.c_sl;
        law.vdd = cfg.device.vdd;
        law.v_half = 0.5 * cfg.device.vdd;
        law.s_max = static_cast<double>(cfg.score_max());
        return law;
    }
};

struct PruneConfig {
    int h_heavy = 512;
    int m_reserved = 64;
    int k_top = 115;
    double lambda = 0.8;
    AccumulationMode accumulation_mode = AccumulationMode::ema;
    ProxyLaw proxy;
    /// Rescale each step's scores onto the hardware score grid before the
    /// residual map. Required when scores are raw real dot products; the
    /// quantized pipeline feeds grid-bounded scores and turns this off.
    bool normalize_proxy = true;
    /// Per-step softmax before sum-mode accumulation (H2O-style study knob).
    bool softmax_accumulation = false;
    bool permissive_prefill = false;
    /// Test fixture: invert the tie rule, for the negative-control check.
    bool debug_tie_break_highest = false;

    void validate() const {
        if (h_heavy < 1) throw std::invalid_argument("PruneConfig: h_heavy must be >= 1");
        if (m_reserved < 0) throw std::invalid_argument("PruneConfig: m_reserved must be >= 0");
        if (k_top < 1 || k_top > h_heavy + m_reserved)
            throw std::invalid_argument("PruneConfig: require 1 <= k_top <= h_heavy + m_reserved");
        if (!(lambda > 0.0 && lambda < 1.0))
            throw std::invalid_argument("PruneConfig: lambda must be in (0,1)");
    }
};

// ---------------------------------------------------------------------------
// State and traces
// ---------------------------------------------------------------------------

struct KvCacheState {
    Matrix keys;                       // n_slots x d
    std::vector<std::int64_t> token_ids;
    std::vector<char> occupied;
    std::vector<double> acc_score;     // accumulated similarity per slot
    int generated_count = 0;

    int n_slots() const { return keys.rows; }
    int occupied_count() const {
        int n = 0;
        for (char c : occupied) n += c ? 1 : 0;
        return n;
    }
};

struct AttentionTrace {
    Matrix prompt_keys;                 // N_in x d
    Matrix decode_queries;              // steps x d
    Matrix decode_keys;                 // steps x d, key of each generated token
    std::vector<double> prefill_attention;  // per prompt token, accumulated at prefill
    std::vector<int> heavy_tokens;      // planted heavy hitters (synthetic traces), ascending

    int n_input() const { return prompt_keys.rows; }
    int n_steps() const { return decode_queries.rows; }
    int dim() const { return prompt_keys.cols; }
};

struct DecodeStepResult {
    int step = -1;
    std::vector<int> selected_slots;     // ascending
    int evicted_slot = -1;               // -1 when a reserved slot absorbed the token
    std::int64_t evicted_token_id = -1;
    std::vector<double> selected_scores; // aligned with selected_slots
    std::int64_t new_token_id = -1;
    int written_slot = -1;
};

// ---------------------------------------------------------------------------
// Shared selection arithmetic
// ---------------------------------------------------------------------------

/// Top-k slots by score; exact ties resolve to the lowest slot index (the one
/// global tie rule shared with the hardware race).
inline std::vector<int> top_k_slots(const std::vector<double>& scores,
                                    const std::vector<int>& slots, int k,
                                    bool tie_break_highest = false) {
    std::vector<int> order(slots);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double sa = scores[static_cast<std::size_t>(a)];
        const double sb = scores[static_cast<std::size_t>(b)];
        if (sa != sb) return sa > sb;
        return tie_break_highest ? a > b : a < b;
    });
    order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
    return order;
}

/// Residual-voltage proxies for one step's scores, evaluated through the same
/// race functions the hardware uses. Scores clamp to the representable grid.
inline std::vector<double> residual_proxies(const std::vector<double>& scores, int k_eff,
                                            const ProxyLaw& law) {
    std::vector<double> times(scores.size());
    std::vector<double> currents(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double s = std::max(-law.s_max, std::min(law.s_max, scores[i]));
        currents[i] = law.i_base - law.alpha * s;
        times[i] = discharge_time_of_current(currents[i], law.c_sl, law.vdd, law.v_half);
    }
    const double t_freeze = freeze_time_of(times, k_eff);
    std::vector<double> res(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        res[i] = residual_voltage(currents[i], times[i], t_freeze, law.c_sl, law.vdd, law.v_half);
    return res;
}

inline double lower_median(std::vector<double> vals) {
    if (vals.empty()) throw std::logic_error("lower_median: empty");
    std::sort(vals.begin(), vals.end());
    return vals[(vals.size() - 1) / 2];
}

// ---------------------------------------------------------------------------
// Prefill
// ---------------------------------------------------------------------------

/// One-shot static pruning: keep the h_heavy prompt tokens with the highest
/// accumulated prefill attention (ties to the lowest token index), drop the
/// rest permanently, and reserve m_reserved empty slots for decode.
inline KvCacheState prefill_prune(const AttentionTrace& trace, const PruneConfig& cfg) {
    cfg.validate();
    const int n_in = trace.n_input();
    if (static_cast<int>(trace.prefill_attention.size()) != n_in)
        throw std::invalid_argument("prefill_prune: prefill_attention length mismatch");
    int keep = cfg.h_heavy;
    if (n_in < cfg.h_heavy) {
        if (!cfg.permissive_prefill)
            throw std::invalid_argument("prefill_prune: prompt shorter than h_heavy");
        keep = n_in;
    }

    std::vector<int> idx(static_cast<std::size_t>(n_in));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        const double sa = trace.prefill_attention[static_cast<std::size_t>(a)];
        const double sb = trace.prefill_attention[static_cast<std::size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    });
    idx.resize(static_cast<std::size_t>(keep));
    std::sort(idx.begin(), idx.end());  // kept tokens stay in prompt order

    KvCacheState st;
    const int slots = keep + cfg.m_reserved;
    st.keys = Matrix(slots, trace.dim());
    st.token_ids.assign(static_cast<std::size_t>(slots), -1);
    st.occupied.assign(static_cast<std::size_t>(slots), 0);
    st.acc_score.assign(static_cast<std::size_t>(slots), 0.0);

    // accumulated prefill attention, squashed into the accumulator domain
    std::vector<double> kept_scores(static_cast<std::size_t>(keep));
    for (int i = 0; i < keep; ++i)
        kept_scores[static_cast<std::size_t>(i)] =
            trace.prefill_attention[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];

    double lo = 0.0, hi = 0.0;
    if (cfg.accumulation_mode == AccumulationMode::ema) {
        lo = *std::min_element(kept_scores.begin(), kept_scores.end());
        hi = *std::max_element(kept_scores.begin(), kept_scores.end());
    }
    const double v_lo = cfg.proxy.v_half, v_hi = cfg.proxy.vdd;
    for (int i = 0; i < keep; ++i) {
        const int tok = idx[static_cast<std::size_t>(i)];
        for (int c = 0; c < trace.dim(); ++c)
            st.keys.at(i, c) = trace.prompt_keys.at(tok, c);
        st.token_ids[static_cast<std::size_t>(i)] = tok;
        st.occupied[static_cast<std::size_t>(i)] = 1;
        if (cfg.accumulation_mode == AccumulationMode::ema) {
            const double s = kept_scores[static_cast<std::size_t>(i)];
            st.acc_score[static_cast<std::size_t>(i)] =
                (hi > lo) ? v_lo + (v_hi - v_lo) * (s - lo) / (hi - lo) : 0.5 * (v_lo + v_hi);
        } else {
            st.acc_score[static_cast<std::size_t>(i)] = kept_scores[static_cast<std::size_t>(i)];
        }
    }
    return st;
}

// ---------------------------------------------------------------------------
// Decode step
// ---------------------------------------------------------------------------

inline DecodeStepResult decode_step(KvCacheState& state, const std::vector<double>& q,
                                    const std::vector<double>& new_key, std::int64_t token_id,
                                    const PruneConfig& cfg) {
    if (static_cast<int>(q.size()) != state.keys.cols ||
        static_cast<int>(new_key.size()) != state.keys.cols)
        throw std::invalid_argument("decode_step: dimension mismatch");

    DecodeStepResult res;
    res.new_token_id = token_id;

    std::vector<int> occ;
    occ.reserve(static_cast<std::size_t>(state.n_slots()));
    for (int s = 0; s < state.n_slots(); ++s)
        if (state.occupied[static_cast<std::size_t>(s)]) occ.push_back(s);

    // (1) similarity over the occupied slots
    std::vector<double> scores(static_cast<std::size_t>(state.n_slots()), 0.0);
    for (int s : occ)
        scores[static_cast<std::size_t>(s)] = dot(q.data(), state.keys.row(s), state.keys.cols);

    // (2) dynamic top-k
    const int k_eff = std::min<int>(cfg.k_top, static_cast<int>(occ.size()));
    res.selected_slots = top_k_slots(scores, occ, k_eff, cfg.debug_tie_break_highest);
    res.selected_scores.reserve(res.selected_slots.size());
    for (int s : res.selected_slots)
        res.selected_scores.push_back(scores[static_cast<std::size_t>(s)]);

    // (3) accumulation
    if (cfg.accumulation_mode == AccumulationMode::ema) {
        std::vector<double> occ_scores(occ.size());
        for (std::size_t i = 0; i < occ.size(); ++i)
            occ_scores[i] = scores[static_cast<std::size_t>(occ[i])];
        if (cfg.normalize_proxy) {
            double m = 0.0;
            for (double s : occ_scores) m = std::max(m, std::abs(s));
            if (m > 0.0)
                for (double& s : occ_scores) s = s / m * cfg.proxy.s_max;
        }
        const std::vector<double> proxies = residual_proxies(occ_scores, k_eff, cfg.proxy);
        for (std::size_t i = 0; i < occ.size(); ++i) {
            double& acc = state.acc_score[static_cast<std::size_t>(occ[i])];
            acc = ema_update(acc, proxies[i], cfg.lambda);
        }
    } else {
        std::vector<double> add(occ.size());
        for (std::size_t i = 0; i < occ.size(); ++i)
            add[i] = scores[static_cast<std::size_t>(occ[i])];
        if (cfg.softmax_accumulation) {
            double m = *std::max_element(add.begin(), add.end());
            double z = 0.0;
            for (double& a : add) {
                a = std::exp(a - m);
                z += a;
            }
            for (double& a : add) a /= z;
        }
        for (std::size_t i = 0; i < occ.size(); ++i)
            state.acc_score[static_cast<std::size_t>(occ[i])] += add[i];
    }

    // (4) write the new token: a reserved slot while any remain, otherwise
    // statically evict the slot with the lowest accumulated similarity
    const double med = [&] {
        std::vector<double> vals;
        vals.reserve(occ.size());
        for (int s : occ) vals.push_back(state.acc_score[static_cast<std::size_t>(s)]);
        return lower_median(std::move(vals));
    }();
    int target = -1;
    if (state.generated_count < cfg.m_reserved) {
        for (int s = 0; s < state.n_slots(); ++s)
            if (!state.occupied[static_cast<std::size_t>(s)]) {
                target = s;
                break;
            }
        if (target < 0) throw std::logic_error("decode_step: reserved slot bookkeeping broken");
    } else {
        double best = 0.0;
        for (int s : occ) {
            const double a = state.acc_score[static_cast<std::size_t>(s)];
            const bool better = (target < 0) || (cfg.debug_tie_break_highest ? a <= best : a < best);
            if (better) {
                best = a;
                target = s;
            }
        }
        res.evicted_slot = target;
        res.evicted_token_id = state.token_ids[static_cast<std::size_t>(target)];
    }
    for (int c = 0; c < state.keys.cols; ++c)
        state.keys.at(target, c) = new_key[static_cast<std::size_t>(c)];
    state.token_ids[static_cast<std::size_t>(target)] = token_id;
    state.occupied[static_cast<std::size_t>(target)] = 1;
    state.acc_score[static_cast<std::size_t>(target)] = med;
    res.written_slot = target;

    // (5)
    ++state.generated_count;
    return res;
}

// ---------------------------------------------------------------------------
// Full generation with fidelity metrics
// ---------------------------------------------------------------------------

struct GenerationResult {
    std::vector<DecodeStepResult> steps;
    std::vector<double> overlap;        // per-step top-k overlap vs dense attention
    std::vector<double> retained_mass;  // per-step dense softmax mass of the selected set
    double overlap_mean = 0.0;
    double retained_mass_mean = 0.0;
};

/// Run the whole trace through the policy and score it against dense
/// attention over the unpruned cache (prompt + all generated tokens).
inline GenerationResult run_generation(const AttentionTrace& trace, const PruneConfig& cfg) {
    KvCacheState st = prefill_prune(trace, cfg);
    GenerationResult out;
    out.steps.reserve(static_cast<std::size_t>(trace.n_steps()));

    // dense reference cache, grown as tokens generate
    Matrix dense(trace.n_input() + trace.n_steps(), trace.dim());
    for (int r = 0; r < trace.n_input(); ++r)
        for (int c = 0; c < trace.dim(); ++c) dense.at(r, c) = trace.prompt_keys.at(r, c);
    int dense_rows = trace.n_input();

    for (int t = 0; t < trace.n_steps(); ++t) {
        std::vector<double> q(trace.decode_queries.row(t), trace.decode_queries.row(t) + trace.dim());
        std::vector<double> nk(trace.decode_keys.row(t), trace.decode_keys.row(t) + trace.dim());
        const std::int64_t token_id = trace.n_input() + t;

        DecodeStepResult r = decode_step(st, q, nk, token_id, cfg);
        r.step = t;

        // dense reference for this step
        std::vector<double> ds(static_cast<std::size_t>(dense_rows));
        for (int i = 0; i < dense_rows; ++i) ds[static_cast<std::size_t>(i)] = dot(q.data(), dense.row(i), trace.dim());
        const int k_eff = static_cast<int>(r.selected_slots.size());
        std::vector<int> all(static_cast<std::size_t>(dense_rows));
        std::iota(all.begin(), all.end(), 0);
        std::vector<int> dense_top = top_k_slots(ds, all, std::min(k_eff, dense_rows));

        std::vector<char> in_dense(static_cast<std::size_t>(dense_rows), 0);
        for (int i : dense_top) in_dense[static_cast<std::size_t>(i)] = 1;
        int hits = 0;
        for (int s : r.selected_slots) {
            const std::int64_t tok = st.token_ids[static_cast<std::size_t>(s)];
            if (tok >= 0 && tok < dense_rows && in_dense[static_cast<std::size_t>(tok)]) ++hits;
        }
        out.overlap.push_back(k_eff > 0 ? static_cast<double>(hits) / k_eff : 1.0);

        // softmax mass of the selected tokens under the dense distribution
        double m = *std::max_element(ds.begin(), ds.end());
        double z = 0.0;
        for (double s : ds) z += std::exp(s - m);
        double mass = 0.0;
        for (int s : r.selected_slots) {
            const std::int64_t tok = st.token_ids[static_cast<std::size_t>(s)];
            if (tok >= 0 && tok < dense_rows) mass += std::exp(ds[static_cast<std::size_t>(tok)] - m) / z;
        }
        out.retained_mass.push_back(mass);

        // the generated token joins the dense cache for the next step
        for (int c = 0; c < trace.dim(); ++c) dense.at(dense_rows, c) = nk[static_cast<std::size_t>(c)];
        ++dense_rows;

        out.steps.push_back(std::move(r));
    }
    if (!out.overlap.empty()) {
        out.overlap_mean = std::accumulate(out.overlap.begin(), out.overlap.end(), 0.0) /
                           static_cast<double>(out.overlap.size());
        out.retained_mass_mean =
            std::accumulate(out.retained_mass.begin(), out.retained_mass.end(), 0.0) /
            static_cast<double>(out.retained_mass.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic traces
// ---------------------------------------------------------------------------

/// Accumulated causal self-attention of a prompt acting as its own queries:
/// token j collects sum_{i >= j} k_i . k_j, evaluated through suffix sums so
/// long prompts stay O(N*d).
inline std::vector<double> causal_prefill_accumulation(const Matrix& prompt_keys) {
    const int n = prompt_keys.rows, d = prompt_keys.cols;
    std::vector<double> suffix(static_cast<std::size_t>(d), 0.0);
    std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
    for (int j = n - 1; j >= 0; --j) {
        const double* kj = prompt_keys.row(j);
        for (int c = 0; c < d; ++c) suffix[static_cast<std::size_t>(c)] += kj[c];
        acc[static_cast<std::size_t>(j)] = dot(kj, suffix.data(), d);
    }
    return acc;
}

/// Desk-scale workload generator: background keys are isotropic noise, a
/// controllable fraction of prompt tokens is planted along a common direction
/// that every decode query leans toward, making them unambiguous heavy
/// hitters. Deterministic given the seed.
inline AttentionTrace synth_trace(std::uint64_t seed, int n_input, int steps, int d,
                                  double heavy_fraction) {
    if (n_input < 1 || steps < 1 || d < 1)
        throw std::invalid_argument("synth_trace: sizes must be >= 1");
    if (heavy_fraction < 0.0 || heavy_fraction > 1.0)
        throw std::invalid_argument("synth_trace: heavy_fraction must be in [0,1]");
    Rng rng(seed);

    std::vector<double> u(static_cast<std::size_t>(d));
    double norm = 0.0;
    for (double& x : u) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : u) x /= norm;

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const int n_heavy = static_cast<int>(std::llround(heavy_fraction * n_input));
    std::vector<char> heavy(static_cast<std::size_t>(n_input), 0);
    {
        std::vector<int> idx(static_cast<std::size_t>(n_input));
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = 0; i < n_heavy; ++i) {
            const int j = rng.uniform_int(i, n_input - 1);
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
            heavy[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;
        }
    }

    AttentionTrace tr;
    for (int j = 0; j < n_input; ++j)
        if (heavy[static_cast<std::size_t>(j)]) tr.heavy_tokens.push_back(j);
    tr.prompt_keys = Matrix(n_input, d);
    for (int r = 0; r < n_input; ++r) {
        const double bias = heavy[static_cast<std::size_t>(r)] ? 2.0 : 0.0;
        const double noise = heavy[static_cast<std::size_t>(r)] ? 0.5 : 1.0;
        for (int c = 0; c < d; ++c)
            tr.prompt_keys.at(r, c) = bias * u[static_cast<std::size_t>(c)] +
                                      noise * rng.normal() * inv_sqrt_d;
    }
    tr.decode_queries = Matrix(steps, d);
    tr.decode_keys = Matrix(steps, d);
    for (int t = 0; t < steps; ++t) {
        for (int c = 0; c < d; ++c)
            tr.decode_queries.at(t, c) = u[static_cast<std::size_t>(c)] + rng.normal() * inv_sqrt_d;
        for (int c = 0; c < d; ++c) tr.decode_keys.at(t, c) = rng.normal() * inv_sqrt_d;
    }

    tr.prefill_attention = causal_prefill_accumulation(tr.prompt_keys);
    return tr;
}

/// Quantize a real-valued trace onto the hardware level grids: keys share one
/// global scale from the prompt (decode keys clamp into it), queries are
/// normalized per step. The result is integer-valued but stays in doubles so
/// the same policy code runs on both.
inline AttentionTrace quantize_trace(const AttentionTrace& tr, int radius_key, int radius_query) {
    AttentionTrace q = tr;
    double key_scale = 0.0;
    for (double x : tr.prompt_keys.data) key_scale = std::max(key_scale, std::abs(x));
    if (key_scale == 0.0) key_scale = 1.0;

    auto quant_row = [](double* p, int n, int radius, double scale) {
        for (int i = 0; i < n; ++i) {
            const double x = std::round(p[i] / scale * radius);
            p[i] = std::max(-static_cast<double>(radius),
                            std::min(static_cast<double>(radius), x));
        }
    };
    for (int r = 0; r < q.prompt_keys.rows; ++r)
        quant_row(q.prompt_keys.row(r), q.prompt_keys.cols, radius_key, key_scale);
    for (int r = 0; r < q.decode_keys.rows; ++r)
        quant_row(q.decode_keys.row(r), q.decode_keys.cols, radius_key, key_scale);
    for (int r = 0; r < q.decode_queries.rows; ++r) {
        double m = 0.0;
        for (int c = 0; c < q.decode_queries.cols; ++c)
            m = std::max(m, std::abs(q.decode_queries.at(r, c)));
        quant_row(q.decode_queries.row(r), q.decode_queries.cols, radius_query,
                  m > 0.0 ? m : 1.0);
    }
    // prefill accumulation recomputed on the quantized prompt
    q.prefill_attention = causal_prefill_accumulation(q.prompt_keys);
    return q;
}

}  // namespace unicaim
