// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "unicaim/array.hpp"
#include "unicaim/charge.hpp"
#include "unicaim/cost.hpp"
#include "unicaim/mac.hpp"
#include "unicaim/pruning.hpp"

namespace unicaim {

using json = nlohmann::json;

/// Everything one simulation needs, loadable from a flat JSON file. Missing
/// sections fall back to the documented defaults; inconsistent couplings
/// (lambda vs. the capacitor divider, k_top vs. the race k) are rejected.
struct SimConfig {
    ArrayConfig array = ArrayConfig::defaults();
    ChargeParams charge = ChargeParams::from_array(ArrayConfig::defaults());
    CostParams cost;
    double i_dyn = 1e-6;
    int adc_bits = 10;
    double adc_t_conv = 1e-9;
    double adc_e_conv = 1e-12;
    int n_adcs = 64;
    PruneConfig prune;

    SimConfig() {
        prune.proxy = ProxyLaw::from_array(array);
        prune.lambda = charge.lambda;
        prune.normalize_proxy = false;
    }

    AdcConfig make_adc() const {
        return AdcConfig::calibrated(array, adc_bits, adc_t_conv, adc_e_conv);
    }

    void finalize() {
        array.validate();
        charge.validate(array.device.vdd);
        cost.validate();
        const double derived_lambda = array.c_acc / (array.c_sl + array.c_acc);
        if (std::abs(charge.lambda - derived_lambda) > 1e-12)
            throw std::runtime_error(
                "config: charge.lambda disagrees with c_acc/(c_sl+c_acc)");
        if (std::abs(prune.lambda - charge.lambda) > 1e-12)
            throw std::runtime_error("config: prune.lambda disagrees with the charge divider");
        prune.proxy = ProxyLaw::from_array(array);
        prune.validate();
        if (!(i_dyn > 0.0)) throw std::runtime_error("config: i_dyn must be > 0");
        if (n_adcs < 1) throw std::runtime_error("config: n_adcs must be >= 1");
        make_adc();  // throws if uncalibratable
    }
};

inline SimConfig config_from_json(const json& j) {
    SimConfig c;
    if (j.contains("device")) {
        const json& d = j.at("device");
        DeviceParams& p = c.array.device;
        if (d.contains("vth_levels")) p.vth_levels = d.at("vth_levels").get<std::vector<double>>();
        p.sigma_vth = d.value("sigma_vth", p.sigma_vth);
        p.gm = d.value("gm", p.gm);
        p.i_off = d.value("i_off", p.i_off);
        p.v_read = d.value("v_read", p.v_read);
        p.vdd = d.value("vdd", p.vdd);
        p.resample_on_program = d.value("resample_on_program", p.resample_on_program);
    }
    if (j.contains("array")) {
        const json& a = j.at("array");
        const int d = a.value("d", c.array.d);
        const int n_rows = a.value("n_rows", c.array.n_rows);
        const int rk = a.value("level_radius_key", c.array.level_radius_key);
        const int rq = a.value("level_radius_query", c.array.level_radius_query);
        const double c_sl = a.value("c_sl", c.array.c_sl);
        const double c_acc = a.value("c_acc", c.array.c_acc);
        const bool custom_device = j.contains("device");
        DeviceParams dev = custom_device
            ? c.array.device
            : DeviceParams::uniform_grid(2 * static_cast<std::size_t>(rk) + 1, 0.25, 0.1);
        if (!custom_device) {
            dev.v_read = 0.15;
            dev.sigma_vth = c.array.device.sigma_vth;
        }
        c.array.d = d;
        c.array.n_rows = n_rows;
        c.array.level_radius_key = rk;
        c.array.level_radius_query = rq;
        c.array.c_sl = c_sl;
        c.array.c_acc = c_acc;
        c.array.device = dev;
    }
    c.array.validate();
    c.charge = ChargeParams::from_array(c.array);
    if (j.contains("charge")) {
        const json& ch = j.at("charge");
        c.charge.lambda = ch.value("lambda", c.charge.lambda);
        c.charge.v_s = ch.value("v_s", c.charge.v_s);
        c.charge.score_dependent_discharge =
            ch.value("score_dependent_discharge", c.charge.score_dependent_discharge);
    }
    if (j.contains("race")) c.i_dyn = j.at("race").value("i_dyn", c.i_dyn);
    if (j.contains("adc")) {
        const json& a = j.at("adc");
        c.adc_bits = a.value("bits", c.adc_bits);
        c.adc_t_conv = a.value("t_conv", c.adc_t_conv);
        c.adc_e_conv = a.value("e_conv", c.adc_e_conv);
        c.n_adcs = a.value("n_adcs", c.n_adcs);
    }
    c.prune.lambda = c.charge.lambda;
    if (j.contains("prune")) {
        const json& p = j.at("prune");
        c.prune.h_heavy = p.value("h_heavy", c.prune.h_heavy);
        c.prune.m_reserved = p.value("m_reserved", c.prune.m_reserved);
        c.prune.k_top = p.value("k_top", c.prune.k_top);
        c.prune.lambda = p.value("lambda", c.prune.lambda);
        const std::string mode = p.value("accumulation_mode", std::string("ema"));
        if (mode == "ema")
            c.prune.accumulation_mode = AccumulationMode::ema;
        else if (mode == "sum")
            c.prune.accumulation_mode = AccumulationMode::sum;
        else
            throw std::runtime_error("config: unknown accumulation_mode '" + mode + "'");
        c.prune.softmax_accumulation = p.value("softmax_accumulation", false);
        c.prune.permissive_prefill = p.value("permissive_prefill", false);
    }
    if (j.contains("cost")) {
        const json& k = j.at("cost");
        CostParams& p = c.cost;
        p.e_precharge = k.value("e_precharge", p.e_precharge);
        p.e_write = k.value("e_write", p.e_write);
        p.e_adc = k.value("e_adc", p.e_adc);
        p.e_share = k.value("e_share", p.e_share);
        p.e_comparator = k.value("e_comparator", p.e_comparator);
        p.t_race = k.value("t_race", p.t_race);
        p.t_share = k.value("t_share", p.t_share);
        p.t_adc = k.value("t_adc", p.t_adc);
        p.t_write = k.value("t_write", p.t_write);
        p.devices_per_cell = k.value("devices_per_cell", p.devices_per_cell);
        p.devices_per_row_periphery =
            k.value("devices_per_row_periphery", p.devices_per_row_periphery);
    }
    c.finalize();
    return c;
}

inline json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file " + path);
    json j;
    is >> j;
    return j;
}

inline SimConfig load_config(const std::string& path) {
    return config_from_json(load_json(path));
}

/// Experiment grids; every output artifact is a pure function of this plus
/// the SimConfig.
struct ExperimentSpec {
    std::vector<std::uint64_t> seeds = {1};
    int steps = 100;
    int input_len = 1024;
    std::vector<int> input_lens = {1024, 2048, 4096};
    std::vector<int> output_lens = {64, 128, 256};
    std::vector<double> prune_ratios = {0.5, 0.8};
    std::vector<double> sigmas_mv = {0.0, 27.0, 54.0, 108.0};
    int trials = 200;
    double heavy_fraction = 0.1;
    bool verbose = false;
    std::string output_path;

    static ExperimentSpec from_json(const json& j) {
        ExperimentSpec s;
        if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        s.steps = j.value("steps", s.steps);
        s.input_len = j.value("input_len", s.input_len);
        if (j.contains("input_lens")) s.input_lens = j.at("input_lens").get<std::vector<int>>();
        if (j.contains("output_lens")) s.output_lens = j.at("output_lens").get<std::vector<int>>();
        if (j.contains("prune_ratios"))
            s.prune_ratios = j.at("prune_ratios").get<std::vector<double>>();
        if (j.contains("sigmas_mv")) s.sigmas_mv = j.at("sigmas_mv").get<std::vector<double>>();
        s.trials = j.value("trials", s.trials);
        s.heavy_fraction = j.value("heavy_fraction", s.heavy_fraction);
        s.verbose = j.value("verbose", s.verbose);
        s.output_path = j.value("output", s.output_path);
        return s;
    }
};

}  // namespace unicaim
