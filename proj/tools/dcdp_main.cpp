// SPDX-License-Identifier: Apache-2.0
// Experiment runner CLI on top of the dcdp C API.

#include <CLI11.hpp>
#include <dcdp/dcdp.h>

#include <cstdint>
#include <cstdio>
#include <string>

namespace {

int cmd_run(const std::string& config, const std::string& out_dir, int jobs, std::uint64_t seed,
            bool seed_set) {
    int failed = 0;
    dcdp_status rc = dcdp_run_experiment(config.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(),
                                         jobs, seed, seed_set ? 1 : 0, &failed);
    if (rc != DCDP_OK) {
        std::fprintf(stderr, "error: %s\n", dcdp_last_error());
        return rc == DCDP_ERR_INVALID_ARGUMENT ? 2 : 1;
    }
    if (failed > 0) {
        std::fprintf(stderr, "warning: %d cell(s) failed; see errors.log in the output directory\n",
                     failed);
        return 1;
    }
    return 0;
}

int cmd_table(const std::string& results, const std::string& csv_out) {
    char* text = nullptr;
    dcdp_status rc =
        dcdp_emit_table(results.c_str(), csv_out.empty() ? nullptr : csv_out.c_str(), &text);
    if (rc != DCDP_OK) {
        std::fprintf(stderr, "error: %s\n", dcdp_last_error());
        return rc == DCDP_ERR_INVALID_ARGUMENT ? 2 : 1;
    }
    std::fputs(text, stdout);
    dcdp_string_free(text);
    return 0;
}

int cmd_adjoint_check(const std::string& spec, int trials, std::uint64_t seed) {
    dcdp_operator* op = nullptr;
    if (dcdp_operator_parse(spec.c_str(), &op) != DCDP_OK) {
        std::fprintf(stderr, "error: %s\n", dcdp_last_error());
        return 2;
    }
    double max_rel = 0.0;
    dcdp_status rc = dcdp_operator_adjoint_check(op, trials, seed, &max_rel);
    if (rc != DCDP_OK) {
        std::fprintf(stderr, "error: %s\n", dcdp_last_error());
        dcdp_operator_destroy(op);
        return 1;
    }
    const bool pass = max_rel < 1e-10;
    std::printf("%s  operator='%s'  in_dim=%d  out_dim=%d  trials=%d  max_rel_err=%.3e\n",
                pass ? "PASS" : "FAIL", spec.c_str(), dcdp_operator_in_dim(op),
                dcdp_operator_out_dim(op), trials, max_rel);
    dcdp_operator_destroy(op);
    return pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dcdp: decoupled data-consistency / diffusion-purification experiment runner"};
    app.set_version_flag("--version", std::string(dcdp_version()));
    app.require_subcommand(1);

    std::string config, out_dir, results, csv_out, op_spec;
    int jobs = 0, trials = 20;
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto* run = app.add_subcommand("run", "run the experiment grid from a config file");
    run->add_option("config", config, "experiment config file")->required()->check(CLI::ExistingFile);
    run->add_option("--jobs", jobs, "parallel grid cells (default: config value)");
    run->add_option("--out", out_dir, "output directory override");
    run->add_option("--seed", seed, "master seed override")->each([&](const std::string&) {
        seed_set = true;
    });

    auto* table = app.add_subcommand("table", "aggregate a results.csv into mean +/- std");
    table->add_option("results", results, "results.csv produced by run")
        ->required()
        ->check(CLI::ExistingFile);
    table->add_option("--csv", csv_out, "also write the aggregation as CSV");

    auto* adj = app.add_subcommand("adjoint-check", "randomized adjoint test for an operator spec");
    adj->add_option("spec", op_spec, "operator spec, e.g. \"downsample h=32 w=32 c=1 factor=4\"")
        ->required();
    adj->add_option("--trials", trials, "random pairs to test (default 20)");
    adj->add_option("--seed", seed, "rng seed");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(config, out_dir, jobs, seed, seed_set);
    if (table->parsed()) return cmd_table(results, csv_out);
    if (adj->parsed()) return cmd_adjoint_check(op_spec, trials, seed);
    return 2;
}
