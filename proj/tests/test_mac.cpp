// SPDX-License-Identifier: Apache-2.0
//

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "unicaim/mac.hpp"

using namespace unicaim;

namespace {

AdcConfig default_adc() { return AdcConfig::calibrated(ArrayConfig::defaults()); }

}  // namespace

TEST_CASE("ADC endpoints and midpoint") {
    const AdcConfig adc = default_adc();
    CHECK(adc.n_steps() == 1024);
    CHECK(adc.lsb_scores() == 1.0);
    CHECK(quantize(adc.i_min, adc).code == 0);
    CHECK(quantize(adc.i_max, adc).code == 1024);
    CHECK(quantize(0.5 * (adc.i_min + adc.i_max), adc).code == 512);  // round half up
    CHECK_FALSE(quantize(adc.i_min, adc).clamped);
}

TEST_CASE("clamping is reported, not raised") {
    const AdcConfig adc = default_adc();
    const AdcSample lo = quantize(adc.i_min - 1e-6, adc);
    CHECK(lo.code == 0);
    CHECK(lo.clamped);
    const AdcSample hi = quantize(adc.i_max + 1e-6, adc);
    CHECK(hi.code == adc.n_steps());
    CHECK(hi.clamped);
}

TEST_CASE("exhaustive sweep: every representable score decodes exactly, no clamps") {
    const ArrayConfig cfg = ArrayConfig::defaults();
    const AdcConfig adc = AdcConfig::calibrated(cfg);
    for (long s = -512; s <= 512; ++s) {
        const double i = cfg.current_of_score(static_cast<double>(s));
        const AdcSample sample = quantize(i, adc);
        REQUIRE_FALSE(sample.clamped);
        REQUIRE(decode_score(sample.code, adc) == s);
    }
}

TEST_CASE("finer resolutions stay exact, coarser ones stay within the LSB") {
    const ArrayConfig cfg = ArrayConfig::defaults();
    const AdcConfig fine = AdcConfig::calibrated(cfg, 12);  // LSB = 0.25 score units
    const AdcConfig coarse = AdcConfig::calibrated(cfg, 8);  // LSB = 4 score units
    for (long s = -512; s <= 512; s += 7) {
        const double i = cfg.current_of_score(static_cast<double>(s));
        CHECK(decode_score(quantize(i, fine).code, fine) == s);
        const long got = decode_score(quantize(i, coarse).code, coarse);
        CHECK(std::abs(got - s) <= 2);  // half an LSB
    }
}

TEST_CASE("exact_scores decodes the true dot product for random rows") {
    ArrayConfig cfg = ArrayConfig::defaults(128, 32, 2, 2);
    CaimArray a(cfg);
    Rng rng(61);
    std::vector<std::vector<level_t>> keys;
    for (int r = 0; r < 32; ++r) {
        keys.push_back(oracle::random_levels(rng, 128, 2));
        write_key(a, r, keys.back(), r, rng);
    }
    const AdcConfig adc = AdcConfig::calibrated(cfg);
    for (int trial = 0; trial < 12; ++trial) {
        const std::vector<level_t> qv = oracle::random_levels(rng, 128, 2);
        const QueryDrive q = encode_query(qv, cfg);
        std::vector<int> selected;
        for (int r = 0; r < 32; ++r)
            if (rng.uniform() < 0.5) selected.push_back(r);
        if (selected.empty()) selected.push_back(0);

        MacBatch batch = exact_scores(a, q, selected, adc, 64);
        REQUIRE(batch.results.size() == selected.size());
        for (MacResult& m : batch.results) {
            long want = 0;
            for (int i = 0; i < 128; ++i)
                want += static_cast<long>(keys[static_cast<std::size_t>(m.row)][static_cast<std::size_t>(i)]) *
                        qv[static_cast<std::size_t>(i)];
            m.true_score = want;
            REQUIRE(m.decoded_score == *m.true_score);
            REQUIRE_FALSE(m.clamped);
        }
    }
}

TEST_CASE("conversion rounds follow the ceiling of selected over ADC count") {
    ArrayConfig cfg = ArrayConfig::defaults(8, 130, 2, 2);
    CaimArray a(cfg);
    Rng rng(62);
    for (int r = 0; r < 130; ++r) write_key(a, r, oracle::random_levels(rng, 8, 2), r, rng);
    const AdcConfig adc = AdcConfig::calibrated(cfg);
    const QueryDrive q = encode_query(oracle::random_levels(rng, 8, 2), cfg);

    std::vector<int> sel64(64), sel115(115);
    for (int i = 0; i < 64; ++i) sel64[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < 115; ++i) sel115[static_cast<std::size_t>(i)] = i;

    CHECK(exact_scores(a, q, sel64, adc, 64).conversion_rounds == 1);
    CHECK(exact_scores(a, q, sel115, adc, 64).conversion_rounds == 2);
    CHECK(exact_scores(a, q, sel64, adc, 64).latency == adc.t_conv);
}

TEST_CASE("ADC conversions are logged once per selected row, never per array row") {
    ArrayConfig cfg = ArrayConfig::defaults(8, 40, 2, 2);
    CaimArray a(cfg);
    Rng rng(63);
    for (int r = 0; r < 40; ++r) write_key(a, r, oracle::random_levels(rng, 8, 2), r, rng);
    const AdcConfig adc = AdcConfig::calibrated(cfg);
    const QueryDrive q = encode_query(oracle::random_levels(rng, 8, 2), cfg);
    EventLog log;
    std::vector<int> sel = {3, 9, 17};
    exact_scores(a, q, sel, adc, 64, &log, 2);
    CHECK(log.count_of(EventKind::adc_conversion, 2) == 3);
}

TEST_CASE("exact_scores rejects empty selections and unoccupied rows") {
    ArrayConfig cfg = ArrayConfig::defaults(4, 4, 2, 2);
    CaimArray a(cfg);
    Rng rng(64);
    write_key(a, 0, {1, 0, -1, 2}, 0, rng);
    const AdcConfig adc = AdcConfig::calibrated(cfg);
    const QueryDrive q = encode_query({1, 1, 1, 1}, cfg);
    CHECK_THROWS_AS(exact_scores(a, q, {}, adc, 64), std::invalid_argument);
    CHECK_THROWS_AS(exact_scores(a, q, {1}, adc, 64), std::logic_error);
    CHECK_THROWS_AS(exact_scores(a, q, {0}, adc, 0), std::invalid_argument);
}

TEST_CASE("linearity: (score, current) batches fit the affine law with ~zero residual") {
    ArrayConfig cfg = ArrayConfig::defaults(128, 64, 2, 2);
    CaimArray a(cfg);
    Rng rng(65);
    for (int r = 0; r < 64; ++r) write_key(a, r, oracle::random_levels(rng, 128, 2), r, rng);
    const QueryDrive q = encode_query(oracle::random_levels(rng, 128, 2), cfg);

    // least-squares affine fit over the batch
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = 64;
    std::vector<double> xs, ys;
    for (int r = 0; r < n; ++r) {
        const double x = static_cast<double>(row_score_from_states(a, r, q));
        const double y = row_current(a, r, q);
        xs.push_back(x);
        ys.push_back(y);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / n;
    for (int r = 0; r < n; ++r) {
        const double fit = intercept + slope * xs[static_cast<std::size_t>(r)];
        REQUIRE(std::abs(fit - ys[static_cast<std::size_t>(r)]) / ys[static_cast<std::size_t>(r)] <
                1e-12);
    }
    CHECK(slope == Catch::Approx(-cfg.alpha).epsilon(1e-9));
    CHECK(intercept == Catch::Approx(cfg.i_base).epsilon(1e-12));
}

TEST_CASE("sensing energy is non-increasing in decoded score") {
    std::vector<MacResult> results;
    MacResult hi, lo, mid;
    const ArrayConfig cfg = ArrayConfig::defaults();
    hi.row = 0;
    hi.decoded_score = 400;
    hi.i_sl = cfg.current_of_score(400);
    lo.row = 1;
    lo.decoded_score = -400;
    lo.i_sl = cfg.current_of_score(-400);
    mid.row = 2;
    mid.decoded_score = 0;
    mid.i_sl = cfg.current_of_score(0);
    results = {hi, lo, mid};
    const EnergyOrderingReport rep = attention_energy_ordering_check(results, 1.0, 1e-9);
    CHECK(rep.pass);

    // equal scores cost the same
    std::vector<MacResult> eq = {mid, mid};
    CHECK(attention_energy_ordering_check(eq, 1.0, 1e-9).pass);

    // a fabricated inversion is caught and the pair reported
    MacResult bad = hi;
    bad.row = 3;
    bad.i_sl = cfg.current_of_score(-500);  // large current claimed for a large score
    std::vector<MacResult> broken = {bad, lo};
    const EnergyOrderingReport r2 = attention_energy_ordering_check(broken, 1.0, 1e-9);
    CHECK_FALSE(r2.pass);
    CHECK(r2.offending_a == 3);
    CHECK(r2.offending_b == 1);
    CHECK_THROWS_AS(attention_energy_ordering_check({hi}, 1.0, 1e-9), std::invalid_argument);
}

TEST_CASE("randomized batch keeps the energy ordering at sigma 0") {
    ArrayConfig cfg = ArrayConfig::defaults(16, 24, 2, 2);
    CaimArray a(cfg);
    Rng rng(66);
    for (int r = 0; r < 24; ++r) write_key(a, r, oracle::random_levels(rng, 16, 2), r, rng);
    const AdcConfig adc = AdcConfig::calibrated(cfg);
    const QueryDrive q = encode_query(oracle::random_levels(rng, 16, 2), cfg);
    std::vector<int> sel(24);
    for (int i = 0; i < 24; ++i) sel[static_cast<std::size_t>(i)] = i;
    const MacBatch batch = exact_scores(a, q, sel, adc, 64);
    CHECK(attention_energy_ordering_check(batch.results, cfg.device.vdd, adc.t_conv).pass);
}

TEST_CASE("decode errors grow with variation on matched trials") {
    Rng seed_rng(67);
    double mean_err[2] = {0.0, 0.0};
    const double sigmas[2] = {27e-3, 108e-3};
    for (int si = 0; si < 2; ++si) {
        double total = 0.0;
        int count = 0;
        for (int trial = 0; trial < 40; ++trial) {
            ArrayConfig cfg = ArrayConfig::defaults(128, 8, 2, 2);
            cfg.device.sigma_vth = sigmas[si];
            cfg.validate();
            CaimArray a(cfg);
            Rng rng(1000 + trial);
            std::vector<std::vector<level_t>> keys;
            for (int r = 0; r < 8; ++r) {
                keys.push_back(oracle::random_levels(rng, 128, 2));
                write_key(a, r, keys.back(), r, rng);
            }
            const std::vector<level_t> qv = oracle::random_levels(rng, 128, 2);
            const QueryDrive q = encode_query(qv, cfg);
            const AdcConfig adc = AdcConfig::calibrated(cfg);
            std::vector<int> sel = {0, 1, 2, 3, 4, 5, 6, 7};
            const MacBatch batch = exact_scores(a, q, sel, adc, 64);
            for (const MacResult& m : batch.results) {
                long want = 0;
                for (int i = 0; i < 128; ++i)
                    want += static_cast<long>(
                                keys[static_cast<std::size_t>(m.row)][static_cast<std::size_t>(i)]) *
                            qv[static_cast<std::size_t>(i)];
                total += std::abs(static_cast<double>(m.decoded_score - want));
                ++count;
            }
        }
        mean_err[si] = total / count;
    }
    CHECK(mean_err[0] > 0.0);
    CHECK(mean_err[1] > mean_err[0]);
}
