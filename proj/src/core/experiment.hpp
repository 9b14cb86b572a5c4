// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "latent.hpp"
#include "solver.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dcdp {

// Configuration errors carry the file position of the offending entry.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& path, int line, const std::string& msg)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + msg) {}
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TaskSpec {
    std::string name;
    std::string operator_spec;
    std::vector<double> sigmas{0.0};
    std::string truth_file; // empty: sample the truth from the prior
};

struct MethodSpec {
    enum class Type { Dcdp, DcdpLatentI, DcdpLatentII, Dps, FidelityOnly };
    std::string name;
    Type type = Type::Dcdp;
    // dcdp family
    int outer_iterations = 10;
    FidelityConfig fidelity;
    PurifyBackend backend = PurifyBackend::ddim(20);
    int t_start = 400;
    int t_end = 0;
    // dps
    double eta = 0.1;
    int dps_steps = 0; // 0 = schedule N
};

// Named hyperparameter presets for the shipped restoration tasks (learning
// rates are desk-scale; see the README table for the mapping).
bool apply_method_preset(const std::string& preset, MethodSpec& m);
std::vector<std::string> method_preset_names();

struct LatentSpec {
    int latent_dim = 0; // 0 = latent methods unavailable
    std::string codec_file; // flat tensor (rows = pixel dim, cols = latent dim)
    int codec_samples = 256; // PCA fit samples drawn from the prior
    std::uint64_t codec_seed = 1;
};

struct ExperimentConfig {
    // [experiment]
    std::string output_dir = "out";
    std::uint64_t master_seed = 0;
    int seeds = 1; // repetitions per cell
    int jobs = 1;
    double peak = 1.0;
    bool dump_tensors = false;
    bool dump_images = false;
    bool dump_traces = true;

    // [schedule]
    int n_steps = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;

    // [prior]
    std::string prior_type = "gmm"; // gmm | empirical
    std::string prior_file;
    std::string dataset_file;
    double bandwidth = 0.1;

    LatentSpec latent;
    std::vector<TaskSpec> tasks;
    std::vector<MethodSpec> methods;

    std::string source_path;

    static ExperimentConfig parse(const std::string& path);
};

struct RunOverrides {
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> master_seed;
    std::optional<int> jobs;
};

// Executes the task x sigma x method x seed grid. Writes results.csv, one
// trace CSV per cell, optional reconstruction dumps, and a resolved copy of
// the configuration. Per-cell failures land in errors.log without stopping
// the grid. Returns the number of failed cells.
int run_experiment(const ExperimentConfig& config, const RunOverrides& overrides = {});

// Aggregates a results.csv into mean +/- std per (task, method). Returns the
// aligned text table; optionally writes the same aggregation as CSV.
std::string emit_table(const std::string& results_csv, const std::string& csv_out = "");

} // namespace dcdp
