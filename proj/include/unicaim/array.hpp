// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "unicaim/cost.hpp"
#include "unicaim/device.hpp"
#include "unicaim/rng.hpp"

namespace unicaim {

/// Signed integer level on the key or query grid, |level| <= radius.
using level_t = int;

// ---------------------------------------------------------------------------
// Array configuration and the derived current law
// ---------------------------------------------------------------------------
//
// Each cell is a complementary pair of FeFETs. Key level k (|k| <= L) programs
// the pair to the mirrored grid indices (L - k, L + k) of a uniform threshold
// grid with spacing D and midpoint c = vth_levels[L], so F1 sits at a low
// threshold for positive keys and F1b mirrors it.
//
// A query level q (|q| <= Lq) is expanded bitwise into Lq ternary sub-drives
// ("slots"): |q| slots of sign(q) and Lq - |q| neutral slots, all applied in
// the same read cycle. Slot voltages on the (BL1, BL1b) pair:
//
//   +1 -> (v_off, v_on)      -1 -> (v_on, v_off)      0 -> (v_zd, v_zd)
//
// with  v_on = c + L*D + v_h,  v_zd = c + (L*D + v_h)/2,  v_off = 0,
// and headroom v_h = L*D + v_read so that a driven or neutral line conducts
// at every key level while v_off keeps its device in cutoff.
//
// Evaluating the device law per slot (zero variation):
//
//   slot +1: 2*i_off + gm*(L*D + v_h) - gm*D*k
//   slot -1: 2*i_off + gm*(L*D + v_h) + gm*D*k
//   slot  0: 2*i_off + gm*(L*D + v_h)            (complementary terms cancel)
//
// so a cell contributes  U0 - gm*D*(k*q)  with U0 = Lq*(2*i_off + gm*(L*D+v_h)),
// and a row of d cells obeys the exact affine law
//
//   I_SL = I_base - alpha * score,   I_base = d*U0,   alpha = gm*D.
//
// row_current() evaluates exactly this regrouping: the integer score is
// accumulated from the programmed device states, and device-to-device
// variation enters as a per-read deviation term that is identically zero at
// sigma = 0. This keeps equal scores at exactly equal currents, which is what
// an analog race that resolves ties by layout order requires of the model.

struct ArrayConfig {
    int d = 128;
    int n_rows = 576;
    int level_radius_key = 2;
    int level_radius_query = 2;
    double c_sl = 1e-13;   // sense-line capacitance [F]
    double c_acc = 4e-13;  // accumulation capacitance [F]
    DeviceParams device;

    // derived encoding constants, filled by validate()
    double delta = 0.0;   // threshold grid spacing D
    double v_mid = 0.0;   // grid midpoint c
    double v_head = 0.0;  // unit-slot headroom v_h
    double v_on = 0.0;
    double v_zd = 0.0;
    double v_off = 0.0;
    double i_base = 0.0;  // row current at score 0
    double alpha = 0.0;   // current step per score unit

    static ArrayConfig defaults(int d = 128, int n_rows = 576, int radius_key = 2,
                                int radius_query = 2) {
        ArrayConfig c;
        c.d = d;
        c.n_rows = n_rows;
        c.level_radius_key = radius_key;
        c.level_radius_query = radius_query;
        c.device = DeviceParams::uniform_grid(2 * static_cast<std::size_t>(radius_key) + 1,
                                              0.25, 0.1);
        c.device.v_read = 0.15;
        c.validate();
        return c;
    }

    void validate() {
        if (d < 1) throw std::invalid_argument("ArrayConfig: d must be >= 1");
        if (n_rows < 1) throw std::invalid_argument("ArrayConfig: n_rows must be >= 1");
        if (level_radius_key < 1 || level_radius_query < 1)
            throw std::invalid_argument("ArrayConfig: level radii must be >= 1");
        if (!(c_sl > 0.0) || !(c_acc > 0.0))
            throw std::invalid_argument("ArrayConfig: capacitances must be > 0");
        device.validate();
        const std::size_t want = 2 * static_cast<std::size_t>(level_radius_key) + 1;
        if (device.n_levels() != want)
            throw std::invalid_argument("ArrayConfig: device needs " + std::to_string(want) +
                                        " vth levels for key radius " +
                                        std::to_string(level_radius_key));
        // the affine law derivation needs a uniform grid
        delta = device.vth_levels[1] - device.vth_levels[0];
        for (std::size_t i = 1; i < device.n_levels(); ++i) {
            const double step = device.vth_levels[i] - device.vth_levels[i - 1];
            if (std::abs(step - delta) > 1e-12)
                throw std::invalid_argument("ArrayConfig: vth grid must be uniformly spaced");
        }
        v_mid = device.vth_levels[static_cast<std::size_t>(level_radius_key)];
        const double ld = level_radius_key * delta;
        v_head = ld + device.v_read;
        v_on = v_mid + ld + v_head;
        v_zd = v_mid + (ld + v_head) / 2.0;
        v_off = 0.0;
        if (!(device.vth_levels.front() > 0.0))
            throw std::invalid_argument("ArrayConfig: lowest vth must be > 0 so v_off cuts off");
        if (v_on > device.vdd + 1e-12)
            throw std::invalid_argument("ArrayConfig: unit drive exceeds vdd; shrink the grid");
        const double slot_base = 2.0 * device.i_off + device.gm * (ld + v_head);
        i_base = static_cast<double>(d) * static_cast<double>(level_radius_query) * slot_base;
        alpha = device.gm * delta;
    }

    long score_max() const {
        return static_cast<long>(d) * level_radius_key * level_radius_query;
    }
    /// Row current of an exact integer score under zero variation.
    double current_of_score(double score) const { return i_base - alpha * score; }
};

// ---------------------------------------------------------------------------
// Query drive
// ---------------------------------------------------------------------------

struct BitLinePair {
    double v1 = 0.0;   // BL1 (acts on F1)
    double v1b = 0.0;  // BL1b (acts on F1b)
};

/// A query vector expanded into per-dimension bit-line drives. Each dimension
/// carries level_radius_query complementary pairs (the bitwise expansion),
/// all asserted in a single read cycle.
struct QueryDrive {
    std::vector<level_t> levels;
    std::vector<std::vector<BitLinePair>> bl_pairs;  // [dim][slot]
};

/// Ternary slot expansion of one query level: |q| signed slots then zeros.
inline void expand_level(level_t q, int radius_query, std::vector<int>& slots) {
    slots.assign(static_cast<std::size_t>(radius_query), 0);
    const int s = (q > 0) - (q < 0);
    for (int j = 0; j < std::abs(q); ++j) slots[static_cast<std::size_t>(j)] = s;
}

inline QueryDrive encode_query(const std::vector<level_t>& q, const ArrayConfig& cfg) {
    if (static_cast<int>(q.size()) != cfg.d)
        throw std::invalid_argument("encode_query: expected " + std::to_string(cfg.d) +
                                    " levels, got " + std::to_string(q.size()));
    QueryDrive drive;
    drive.levels = q;
    drive.bl_pairs.resize(q.size());
    std::vector<int> slots;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (std::abs(q[i]) > cfg.level_radius_query)
            throw std::invalid_argument("encode_query: level out of range at dim " +
                                        std::to_string(i));
        expand_level(q[i], cfg.level_radius_query, slots);
        auto& pairs = drive.bl_pairs[i];
        pairs.resize(slots.size());
        for (std::size_t s = 0; s < slots.size(); ++s) {
            if (slots[s] > 0)
                pairs[s] = {cfg.v_off, cfg.v_on};
            else if (slots[s] < 0)
                pairs[s] = {cfg.v_on, cfg.v_off};
            else
                pairs[s] = {cfg.v_zd, cfg.v_zd};
        }
    }
    return drive;
}

// ---------------------------------------------------------------------------
// Cells, rows, array
// ---------------------------------------------------------------------------

struct UniCaimCell {
    FeFetState f1;
    FeFetState f1b;
    level_t stored_level = 0;
};

/// Recover the signed level from the complementary pair. Throws if the pair
/// was not produced by write_key.
inline level_t decode_stored_level(const UniCaimCell& cell, const ArrayConfig& cfg) {
    const int L = cfg.level_radius_key;
    const level_t k = static_cast<level_t>(L - cell.f1.level_index);
    if (cell.f1b.level_index != L + k || std::abs(k) > L)
        throw std::logic_error("decode_stored_level: inconsistent device pair");
    return k;
}

struct CaimRow {
    std::vector<UniCaimCell> cells;
    bool occupied = false;
    std::int64_t token_id = -1;
    double acc_voltage = 0.0;  // accumulated-similarity capacitor voltage
};

struct CaimArray {
    ArrayConfig config;
    std::vector<CaimRow> rows;
    bool any_offset = false;  // true once any device carries a nonzero variation offset

    explicit CaimArray(ArrayConfig cfg) : config(std::move(cfg)) {
        rows.resize(static_cast<std::size_t>(config.n_rows));
        for (auto& r : rows) r.cells.resize(static_cast<std::size_t>(config.d));
    }

    int occupied_count() const {
        int n = 0;
        for (const auto& r : rows) n += r.occupied ? 1 : 0;
        return n;
    }

    void check_row(int row) const {
        if (row < 0 || row >= config.n_rows)
            throw std::invalid_argument("row index " + std::to_string(row) + " out of range");
    }
};

/// Program one row with a signed key. Devices are programmed cell by cell
/// (F1 then F1b), each drawing its variation offset from the trial's stream.
/// Exactly one write event (d cells) is logged.
inline void write_key(CaimArray& array, int row, const std::vector<level_t>& key,
                      std::int64_t token_id, Rng& rng, EventLog* log = nullptr,
                      const CostParams* cost = nullptr, int step = -1) {
    array.check_row(row);
    const ArrayConfig& cfg = array.config;
    if (static_cast<int>(key.size()) != cfg.d)
        throw std::invalid_argument("write_key: key length mismatch");
    for (level_t k : key)
        if (std::abs(k) > cfg.level_radius_key)
            throw std::invalid_argument("write_key: key level out of range");

    CaimRow& r = array.rows[static_cast<std::size_t>(row)];
    const int L = cfg.level_radius_key;
    for (int i = 0; i < cfg.d; ++i) {
        UniCaimCell& cell = r.cells[static_cast<std::size_t>(i)];
        const level_t k = key[static_cast<std::size_t>(i)];
        cell.f1 = program(cell.f1, L - k, cfg.device, rng);
        cell.f1b = program(cell.f1b, L + k, cfg.device, rng);
        cell.stored_level = k;
        if (cell.f1.vth_offset != 0.0 || cell.f1b.vth_offset != 0.0) array.any_offset = true;
    }
    r.occupied = true;
    r.token_id = token_id;
    r.acc_voltage = 0.0;  // callers apply their accumulator-init policy on top
    if (log && cost)
        log->add(step, EventKind::write_cell, cfg.d, cfg.d * cost->e_write, cost->t_write);
}

// ---------------------------------------------------------------------------
// Row current
// ---------------------------------------------------------------------------

/// Integer score of a row under a drive, read back from the programmed
/// device states.
inline long row_score_from_states(const CaimArray& array, int row, const QueryDrive& drive) {
    const ArrayConfig& cfg = array.config;
    const CaimRow& r = array.rows[static_cast<std::size_t>(row)];
    long s = 0;
    for (int i = 0; i < cfg.d; ++i) {
        const level_t k = decode_stored_level(r.cells[static_cast<std::size_t>(i)], cfg);
        s += static_cast<long>(k) * drive.levels[static_cast<std::size_t>(i)];
    }
    return s;
}

/// Sense-line current of one row under a drive: the sum of both devices' read
/// currents over every expansion slot of every cell, evaluated in the
/// regrouped form I_base - alpha*score + deviation. The deviation term sums
/// read_current(device) - read_current(zero-offset device) per line and is
/// exactly zero when no device carries a variation offset.
inline double row_current(const CaimArray& array, int row, const QueryDrive& drive) {
    array.check_row(row);
    const ArrayConfig& cfg = array.config;
    const CaimRow& r = array.rows[static_cast<std::size_t>(row)];
    if (!r.occupied) throw std::logic_error("row_current: row not occupied");
    if (static_cast<int>(drive.levels.size()) != cfg.d)
        throw std::invalid_argument("row_current: drive dimension mismatch");

    const long score = row_score_from_states(array, row, drive);
    double current = cfg.i_base - cfg.alpha * static_cast<double>(score);

    if (array.any_offset) {
        double deviation = 0.0;
        for (int i = 0; i < cfg.d; ++i) {
            const UniCaimCell& cell = r.cells[static_cast<std::size_t>(i)];
            FeFetState n1 = cell.f1, n1b = cell.f1b;
            n1.vth_offset = 0.0;
            n1b.vth_offset = 0.0;
            for (const BitLinePair& p : drive.bl_pairs[static_cast<std::size_t>(i)]) {
                deviation += read_current(cell.f1, p.v1, cfg.device) -
                             read_current(n1, p.v1, cfg.device);
                deviation += read_current(cell.f1b, p.v1b, cfg.device) -
                             read_current(n1b, p.v1b, cfg.device);
            }
        }
        current += deviation;
    }
    return current;
}

// ---------------------------------------------------------------------------
// Real-vector quantization
// ---------------------------------------------------------------------------

/// Symmetric uniform quantization onto the signed level grid, rounding half
/// away from zero. `scale` maps to the full radius; values beyond it clamp.
inline std::vector<level_t> quantize_levels(const std::vector<double>& v, int radius,
                                            double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("quantize_levels: scale must be > 0");
    std::vector<level_t> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = std::round(v[i] / scale * radius);  // std::round is half-away-from-zero
        out[i] = static_cast<level_t>(std::max(-static_cast<double>(radius),
                                               std::min(static_cast<double>(radius), x)));
    }
    return out;
}

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// ---------------------------------------------------------------------------
// Snapshot text format
// ---------------------------------------------------------------------------
//
//   unicaim-array v1
//   d <d> rows <n> radius <L>
//   row <idx> token <id> acc <voltage> levels <k_0> ... <k_{d-1}>
//
// Only occupied rows are listed; loading re-programs the devices (offsets are
// resampled from the provided stream, so fixtures are exact only at sigma=0).

inline void save_snapshot(const CaimArray& array, std::ostream& os) {
    const ArrayConfig& cfg = array.config;
    os << "unicaim-array v1\n";
    os << "d " << cfg.d << " rows " << cfg.n_rows << " radius " << cfg.level_radius_key << "\n";
    char buf[64];
    for (int row = 0; row < cfg.n_rows; ++row) {
        const CaimRow& r = array.rows[static_cast<std::size_t>(row)];
        if (!r.occupied) continue;
        std::snprintf(buf, sizeof(buf), "%.17g", r.acc_voltage);
        os << "row " << row << " token " << r.token_id << " acc " << buf << " levels";
        for (const auto& cell : r.cells) os << ' ' << cell.stored_level;
        os << "\n";
    }
}

inline void save_snapshot(const CaimArray& array, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_snapshot: cannot open " + path);
    save_snapshot(array, os);
}

inline CaimArray load_snapshot(std::istream& is, ArrayConfig cfg, Rng& rng) {
    std::string line;
    if (!std::getline(is, line) || line != "unicaim-array v1")
        throw std::runtime_error("load_snapshot: bad header");
    {
        if (!std::getline(is, line)) throw std::runtime_error("load_snapshot: truncated");
        std::istringstream hs(line);
        std::string kw;
        int d = 0, rows = 0, radius = 0;
        hs >> kw >> d;
        hs >> kw >> rows;
        hs >> kw >> radius;
        if (d != cfg.d || rows != cfg.n_rows || radius != cfg.level_radius_key)
            throw std::runtime_error("load_snapshot: shape mismatch with config");
    }
    CaimArray array(std::move(cfg));
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kw;
        int row = 0;
        std::int64_t token = 0;
        double acc = 0.0;
        ls >> kw >> row >> kw >> token >> kw >> acc >> kw;
        std::vector<level_t> key(static_cast<std::size_t>(array.config.d));
        for (auto& k : key)
            if (!(ls >> k)) throw std::runtime_error("load_snapshot: short level row");
        write_key(array, row, key, token, rng);
        array.rows[static_cast<std::size_t>(row)].acc_voltage = acc;
    }
    return array;
}

inline CaimArray load_snapshot(const std::string& path, ArrayConfig cfg, Rng& rng) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_snapshot: cannot open " + path);
    return load_snapshot(is, std::move(cfg), rng);
}

}  // namespace unicaim
