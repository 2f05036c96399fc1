// SPDX-License-Identifier: Apache-2.0
//

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "unicaim/unicaim.hpp"

namespace {

void write_output(const std::string& path, const std::string& contents) {
    if (path.empty() || path == "-") {
        std::cout << contents;
        return;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open output path " + path);
    os << contents;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UniCAIM behavioral simulator: static-dynamic KV-cache pruning on a "
                 "FeFET CAM/CIM array"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string output_path;
    std::vector<std::uint64_t> seeds;
    int steps = -1;
    int input_len = -1;
    int trials = -1;
    double sigma_mv = -1.0;
    bool verbose = false;

    app.add_option("--config,-c", config_path, "JSON configuration file");
    app.add_option("--output,-o", output_path, "output path ('-' for stdout)");
    app.add_option("--seeds", seeds, "trial seeds")->delimiter(',');
    app.add_option("--steps", steps, "decode steps per trial");
    app.add_option("--input-len", input_len, "prompt length");
    app.add_option("--trials", trials, "Monte-Carlo trials per grid point");
    app.add_option("--sigma-mv", sigma_mv, "override device sigma_vth, in millivolts");
    app.add_flag("--verbose,-v", verbose, "verbose trace records");

    auto* cmd_equiv = app.add_subcommand(
        "equivalence", "run the hardware pipeline against the golden model, exact match");
    auto* cmd_sweep = app.add_subcommand(
        "sweep", "area/energy/delay/AEDP over the sequence-length grid (CSV)");
    auto* cmd_compare =
        app.add_subcommand("compare", "AEDP ratios against the analytic baselines (CSV)");
    auto* cmd_variation =
        app.add_subcommand("variation", "top-k fidelity under device variation (CSV)");
    auto* cmd_trace = app.add_subcommand("trace", "per-step decode trace (JSON lines)");

    std::vector<int> input_lens, output_lens;
    std::vector<double> prune_ratios, sigmas_mv;
    cmd_sweep->add_option("--input-lens", input_lens, "input length grid")->delimiter(',');
    cmd_sweep->add_option("--output-lens", output_lens, "output length grid")->delimiter(',');
    cmd_compare->add_option("--prune-ratios", prune_ratios, "pruned fractions")->delimiter(',');
    cmd_variation->add_option("--sigmas-mv", sigmas_mv, "sigma grid in mV")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        unicaim::SimConfig cfg;
        unicaim::ExperimentSpec spec;
        bool seeds_configured = false;
        if (!config_path.empty()) {
            const unicaim::json j = unicaim::load_json(config_path);
            cfg = unicaim::config_from_json(j);
            if (j.contains("experiment")) {
                spec = unicaim::ExperimentSpec::from_json(j.at("experiment"));
                seeds_configured = j.at("experiment").contains("seeds");
            }
        } else {
            cfg.finalize();
        }
        if (sigma_mv >= 0.0) {
            cfg.array.device.sigma_vth = sigma_mv * 1e-3;
            cfg.array.validate();
        }

        if (!seeds.empty()) spec.seeds = seeds;
        if (steps > 0) spec.steps = steps;
        if (input_len > 0) spec.input_len = input_len;
        if (trials > 0) spec.trials = trials;
        if (!input_lens.empty()) spec.input_lens = input_lens;
        if (!output_lens.empty()) spec.output_lens = output_lens;
        if (!prune_ratios.empty()) spec.prune_ratios = prune_ratios;
        if (!sigmas_mv.empty()) spec.sigmas_mv = sigmas_mv;
        if (verbose) spec.verbose = true;
        if (!output_path.empty()) spec.output_path = output_path;
        output_path = spec.output_path;

        if (cmd_equiv->parsed()) {
            if (seeds.empty() && !seeds_configured) {
                // the reference acceptance run: 50 fixed seeds
                spec.seeds.clear();
                for (std::uint64_t s = 1; s <= 50; ++s) spec.seeds.push_back(s);
            }
            const unicaim::EquivalenceSummary sum = unicaim::run_equivalence(cfg, spec);
            std::printf("seeds: %d  steps: %ld\n", sum.seeds_run, sum.steps_total);
            std::printf("selected-set match rate: %.6f\n", sum.selected_match_rate());
            std::printf("eviction match rate:     %.6f\n", sum.evicted_match_rate());
            if (!sum.all_match) {
                std::printf("FAIL: %s\n", sum.first_mismatch.c_str());
                return 1;
            }
            std::printf("PASS: hardware and golden model agree on every step\n");
            return 0;
        }
        if (cmd_sweep->parsed()) {
            write_output(output_path, unicaim::run_sweep(cfg, spec));
            return 0;
        }
        if (cmd_compare->parsed()) {
            write_output(output_path, unicaim::run_compare(cfg, spec));
            return 0;
        }
        if (cmd_variation->parsed()) {
            write_output(output_path, unicaim::run_variation(cfg, spec));
            return 0;
        }
        if (cmd_trace->parsed()) {
            write_output(output_path, unicaim::run_trace(cfg, spec));
            return 0;
        }
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
