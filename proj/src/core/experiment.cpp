// SPDX-License-Identifier: Apache-2.0
#include "experiment.hpp"

#include "tensor_io.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace dcdp {

namespace {

// ---------------------------------------------------------------------------
// flat [section] / key = value parser
// ---------------------------------------------------------------------------

struct Entry {
    std::string key, value;
    int line = 0;
};

struct Section {
    std::string name;
    int line = 0;
    std::vector<Entry> entries;
};

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<Section> parse_sections(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::vector<Section> sections;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(path, lineno, "unterminated section header");
            sections.push_back({trim(line.substr(1, line.size() - 2)), lineno, {}});
            if (sections.back().name.empty()) throw ConfigError(path, lineno, "empty section name");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(path, lineno, "expected key = value");
        if (sections.empty()) throw ConfigError(path, lineno, "entry before any [section]");
        Entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
        if (e.key.empty()) throw ConfigError(path, lineno, "empty key");
        sections.back().entries.push_back(std::move(e));
    }
    return sections;
}

double parse_double(const std::string& path, const Entry& e) {
    try {
        std::size_t pos = 0;
        double v = std::stod(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(path, e.line, "field '" + e.key + "': not a number: '" + e.value + "'");
    }
}

long long parse_int(const std::string& path, const Entry& e) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(path, e.line, "field '" + e.key + "': not an integer: '" + e.value + "'");
    }
}

bool parse_bool(const std::string& path, const Entry& e) {
    if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
    if (e.value == "false" || e.value == "0" || e.value == "no") return false;
    throw ConfigError(path, e.line, "field '" + e.key + "': expected true/false");
}

std::vector<double> parse_double_list(const std::string& path, const Entry& e) {
    std::string s = e.value;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    std::vector<double> out;
    double v;
    while (in >> v) out.push_back(v);
    if (out.empty() || !in.eof())
        throw ConfigError(path, e.line, "field '" + e.key + "': expected a list of numbers");
    return out;
}

void require_file(const std::string& path, const Entry& e) {
    if (!fs::exists(e.value))
        throw ConfigError(path, e.line, "field '" + e.key + "': file not found: " + e.value);
}

PurifyBackend parse_backend(const std::string& path, const Entry& e, int steps) {
    if (e.value == "sde") return PurifyBackend::ancestral();
    if (e.value == "ddim") return PurifyBackend::ddim(steps);
    if (e.value == "tweedie") return PurifyBackend::tweedie();
    if (e.value == "flow-ode") return PurifyBackend::flow_ode(steps);
    throw ConfigError(path, e.line, "field 'backend': expected sde|ddim|tweedie|flow-ode");
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void atomic_write(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << content;
        if (!out) throw std::runtime_error("write failed: " + path.string());
    }
    fs::rename(tmp, path);
}

} // namespace

// ---------------------------------------------------------------------------
// presets
// ---------------------------------------------------------------------------

namespace {
struct Preset {
    const char* name;
    int k;
    int tau;
    double lr;
    int t_start;
};
// Desk-scale defaults (32x32 grayscale tasks, unit peak). K and the schedule
// start follow the shipped task presets; learning rates are retuned for the
// small operators. Total inner budget K * tau = 1000 for each.
constexpr Preset kPresets[] = {
    {"sr4", 10, 100, 2.0, 400},
    {"gaussian-deblur", 10, 100, 0.18, 400},
    {"motion-deblur", 20, 50, 0.18, 400},
    {"inpaint", 20, 50, 0.18, 700},
};
} // namespace

bool apply_method_preset(const std::string& preset, MethodSpec& m) {
    for (const Preset& p : kPresets) {
        if (preset == p.name) {
            m.outer_iterations = p.k;
            m.fidelity.tau = p.tau;
            m.fidelity.learning_rate = p.lr;
            m.fidelity.momentum = 0.9;
            m.backend = PurifyBackend::ddim(20);
            m.t_start = p.t_start;
            m.t_end = 0;
            return true;
        }
    }
    return false;
}

std::vector<std::string> method_preset_names() {
    std::vector<std::string> names;
    for (const Preset& p : kPresets) names.push_back(p.name);
    return names;
}

// ---------------------------------------------------------------------------
// config parsing
// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::parse(const std::string& path) {
    ExperimentConfig cfg;
    cfg.source_path = path;
    auto sections = parse_sections(path);

    for (const Section& sec : sections) {
        std::istringstream head(sec.name);
        std::string kind, label;
        head >> kind;
        std::getline(head, label);
        label = trim(label);

        if (kind == "experiment") {
            for (const Entry& e : sec.entries) {
                if (e.key == "output") cfg.output_dir = e.value;
                else if (e.key == "master_seed") cfg.master_seed = std::uint64_t(parse_int(path, e));
                else if (e.key == "seeds") cfg.seeds = int(parse_int(path, e));
                else if (e.key == "jobs") cfg.jobs = int(parse_int(path, e));
                else if (e.key == "peak") cfg.peak = parse_double(path, e);
                else if (e.key == "dump_tensors") cfg.dump_tensors = parse_bool(path, e);
                else if (e.key == "dump_images") cfg.dump_images = parse_bool(path, e);
                else if (e.key == "dump_traces") cfg.dump_traces = parse_bool(path, e);
                else throw ConfigError(path, e.line, "unknown [experiment] field '" + e.key + "'");
            }
        } else if (kind == "schedule") {
            for (const Entry& e : sec.entries) {
                if (e.key == "n_steps") cfg.n_steps = int(parse_int(path, e));
                else if (e.key == "beta_min") cfg.beta_min = parse_double(path, e);
                else if (e.key == "beta_max") cfg.beta_max = parse_double(path, e);
                else throw ConfigError(path, e.line, "unknown [schedule] field '" + e.key + "'");
            }
        } else if (kind == "prior") {
            for (const Entry& e : sec.entries) {
                if (e.key == "type") cfg.prior_type = e.value;
                else if (e.key == "file") { require_file(path, e); cfg.prior_file = e.value; }
                else if (e.key == "dataset") { require_file(path, e); cfg.dataset_file = e.value; }
                else if (e.key == "bandwidth") cfg.bandwidth = parse_double(path, e);
                else throw ConfigError(path, e.line, "unknown [prior] field '" + e.key + "'");
            }
        } else if (kind == "latent") {
            for (const Entry& e : sec.entries) {
                if (e.key == "r") cfg.latent.latent_dim = int(parse_int(path, e));
                else if (e.key == "codec_file") { require_file(path, e); cfg.latent.codec_file = e.value; }
                else if (e.key == "codec_samples") cfg.latent.codec_samples = int(parse_int(path, e));
                else if (e.key == "codec_seed") cfg.latent.codec_seed = std::uint64_t(parse_int(path, e));
                else throw ConfigError(path, e.line, "unknown [latent] field '" + e.key + "'");
            }
        } else if (kind == "task") {
            if (label.empty()) throw ConfigError(path, sec.line, "task section needs a name: [task <name>]");
            TaskSpec task;
            task.name = label;
            for (const Entry& e : sec.entries) {
                if (e.key == "operator") task.operator_spec = e.value;
                else if (e.key == "sigma_y") task.sigmas = parse_double_list(path, e);
                else if (e.key == "truth") { require_file(path, e); task.truth_file = e.value; }
                else throw ConfigError(path, e.line, "unknown [task] field '" + e.key + "'");
            }
            if (task.operator_spec.empty())
                throw ConfigError(path, sec.line, "task '" + task.name + "' is missing 'operator'");
            try {
                parse_operator(task.operator_spec);
            } catch (const std::exception& ex) {
                throw ConfigError(path, sec.line, "task '" + task.name + "': " + ex.what());
            }
            for (double s : task.sigmas)
                if (s < 0.0) throw ConfigError(path, sec.line, "task '" + task.name + "': negative sigma_y");
            cfg.tasks.push_back(std::move(task));
        } else if (kind == "method") {
            if (label.empty()) throw ConfigError(path, sec.line, "method section needs a name: [method <name>]");
            MethodSpec m;
            m.name = label;
            int backend_steps = 20;
            std::string backend_kind;
            int backend_line = 0;
            // preset applies first so explicit keys can override it
            for (const Entry& e : sec.entries)
                if (e.key == "preset" && !apply_method_preset(e.value, m))
                    throw ConfigError(path, e.line, "unknown preset '" + e.value + "'");
            for (const Entry& e : sec.entries) {
                if (e.key == "preset") continue;
                else if (e.key == "type") {
                    if (e.value == "dcdp") m.type = MethodSpec::Type::Dcdp;
                    else if (e.value == "dcdp-latent-i") m.type = MethodSpec::Type::DcdpLatentI;
                    else if (e.value == "dcdp-latent-ii") m.type = MethodSpec::Type::DcdpLatentII;
                    else if (e.value == "dps") m.type = MethodSpec::Type::Dps;
                    else if (e.value == "fidelity-only") m.type = MethodSpec::Type::FidelityOnly;
                    else throw ConfigError(path, e.line, "unknown method type '" + e.value + "'");
                } else if (e.key == "K") m.outer_iterations = int(parse_int(path, e));
                else if (e.key == "tau") m.fidelity.tau = int(parse_int(path, e));
                else if (e.key == "lr") m.fidelity.learning_rate = parse_double(path, e);
                else if (e.key == "momentum") m.fidelity.momentum = parse_double(path, e);
                else if (e.key == "stop_loss") m.fidelity.stop_loss = parse_double(path, e);
                else if (e.key == "backend") { backend_kind = e.value; backend_line = e.line; }
                else if (e.key == "backend_steps") backend_steps = int(parse_int(path, e));
                else if (e.key == "T_start") m.t_start = int(parse_int(path, e));
                else if (e.key == "T_end") m.t_end = int(parse_int(path, e));
                else if (e.key == "eta") m.eta = parse_double(path, e);
                else if (e.key == "dps_steps") m.dps_steps = int(parse_int(path, e));
                else throw ConfigError(path, e.line, "unknown [method] field '" + e.key + "'");
            }
            if (!backend_kind.empty())
                m.backend = parse_backend(path, Entry{"backend", backend_kind, backend_line}, backend_steps);
            else if (backend_steps != 20 && m.backend.kind == PurifyBackend::Kind::Ddim)
                m.backend = PurifyBackend::ddim(backend_steps);
            cfg.methods.push_back(std::move(m));
        } else {
            throw ConfigError(path, sec.line, "unknown section [" + sec.name + "]");
        }
    }

    // cross-field validation
    if (cfg.tasks.empty()) throw ConfigError("config " + path + ": no [task <name>] sections");
    if (cfg.methods.empty()) throw ConfigError("config " + path + ": no [method <name>] sections");
    if (cfg.seeds < 1) throw ConfigError("config " + path + ": seeds must be >= 1");
    if (cfg.jobs < 1) throw ConfigError("config " + path + ": jobs must be >= 1");
    if (cfg.prior_type == "gmm") {
        if (cfg.prior_file.empty()) throw ConfigError("config " + path + ": [prior] needs 'file' for type gmm");
    } else if (cfg.prior_type == "empirical") {
        if (cfg.dataset_file.empty())
            throw ConfigError("config " + path + ": [prior] needs 'dataset' for type empirical");
    } else {
        throw ConfigError("config " + path + ": [prior] type must be gmm or empirical");
    }
    bool any_latent = false;
    for (const MethodSpec& m : cfg.methods) {
        if (m.type == MethodSpec::Type::DcdpLatentI || m.type == MethodSpec::Type::DcdpLatentII)
            any_latent = true;
        if (m.type == MethodSpec::Type::Dps || m.type == MethodSpec::Type::FidelityOnly)
            continue; // no purification schedule
        if (m.t_start > cfg.n_steps || m.t_end > m.t_start || m.t_end < 0)
            throw ConfigError("config " + path + ": method '" + m.name +
                              "': need 0 <= T_end <= T_start <= schedule n_steps");
        // validates K / schedule compatibility
        purification_times(m.outer_iterations, m.t_start, m.t_end);
    }
    if (any_latent && cfg.latent.latent_dim < 1)
        throw ConfigError("config " + path + ": latent methods need [latent] r >= 1");
    return cfg;
}

// ---------------------------------------------------------------------------
// grid runner
// ---------------------------------------------------------------------------

namespace {

struct Cell {
    int task_idx, sigma_idx, method_idx, rep;
};

struct CellOutcome {
    bool ok = false;
    std::string error;
    MetricReport metrics;
    long long nfe_jacobian = 0;
};

std::vector<Vec> sample_dataset(const GaussianMixture& prior, int count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(prior.sample(rng));
    return out;
}

// Encode a pixel mixture through the codec. Isotropic components stay
// isotropic under an orthonormal codec (E Sigma E^T = v E E^T = v I), which
// keeps the latent model on the diagonal fast path.
GaussianMixture encode_prior(const GaussianMixture& prior, const LinearCodec& codec) {
    const Mat& e = codec.encode_matrix();
    const int r = codec.latent_dim();
    Vec w(prior.components());
    std::vector<Vec> means(prior.components());
    for (int i = 0; i < prior.components(); ++i) {
        w[i] = prior.weight(i);
        means[i] = e * prior.mean(i);
    }
    bool isotropic = codec.is_orthonormal() && prior.is_diagonal();
    for (int i = 0; isotropic && i < prior.components(); ++i) {
        const Vec& v = prior.diag_var(i);
        isotropic = (v.array() == v[0]).all();
    }
    if (isotropic) {
        std::vector<Vec> vars(prior.components());
        for (int i = 0; i < prior.components(); ++i)
            vars[i] = Vec::Constant(r, prior.diag_var(i)[0]);
        return GaussianMixture::diagonal(w, std::move(means), std::move(vars));
    }
    std::vector<Mat> covs(prior.components());
    for (int i = 0; i < prior.components(); ++i) {
        if (prior.is_diagonal())
            covs[i] = e * prior.diag_var(i).asDiagonal() * e.transpose();
        else
            covs[i] = e * prior.covariance(i) * e.transpose();
    }
    return GaussianMixture::full(w, std::move(means), std::move(covs));
}

std::string sanitize(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    return out;
}

std::string resolved_dump(const ExperimentConfig& c) {
    std::ostringstream o;
    o << "[experiment]\noutput = " << c.output_dir << "\nmaster_seed = " << c.master_seed
      << "\nseeds = " << c.seeds << "\njobs = " << c.jobs << "\npeak = " << fmt6(c.peak)
      << "\ndump_tensors = " << (c.dump_tensors ? "true" : "false")
      << "\ndump_images = " << (c.dump_images ? "true" : "false")
      << "\ndump_traces = " << (c.dump_traces ? "true" : "false") << "\n\n";
    o << "[schedule]\nn_steps = " << c.n_steps << "\nbeta_min = " << fmt6(c.beta_min)
      << "\nbeta_max = " << fmt6(c.beta_max) << "\n\n";
    o << "[prior]\ntype = " << c.prior_type << "\n";
    if (!c.prior_file.empty()) o << "file = " << c.prior_file << "\n";
    if (!c.dataset_file.empty()) o << "dataset = " << c.dataset_file << "\nbandwidth = " << fmt6(c.bandwidth) << "\n";
    o << "\n";
    if (c.latent.latent_dim > 0) {
        o << "[latent]\nr = " << c.latent.latent_dim << "\ncodec_samples = " << c.latent.codec_samples
          << "\ncodec_seed = " << c.latent.codec_seed << "\n";
        if (!c.latent.codec_file.empty()) o << "codec_file = " << c.latent.codec_file << "\n";
        o << "\n";
    }
    for (const TaskSpec& t : c.tasks) {
        o << "[task " << t.name << "]\noperator = " << t.operator_spec << "\nsigma_y =";
        for (double s : t.sigmas) o << " " << fmt6(s);
        o << "\n";
        if (!t.truth_file.empty()) o << "truth = " << t.truth_file << "\n";
        o << "\n";
    }
    for (const MethodSpec& m : c.methods) {
        o << "[method " << m.name << "]\n";
        switch (m.type) {
            case MethodSpec::Type::Dcdp: o << "type = dcdp\n"; break;
            case MethodSpec::Type::DcdpLatentI: o << "type = dcdp-latent-i\n"; break;
            case MethodSpec::Type::DcdpLatentII: o << "type = dcdp-latent-ii\n"; break;
            case MethodSpec::Type::Dps: o << "type = dps\n"; break;
            case MethodSpec::Type::FidelityOnly: o << "type = fidelity-only\n"; break;
        }
        if (m.type == MethodSpec::Type::Dps) {
            o << "eta = " << fmt6(m.eta) << "\ndps_steps = " << m.dps_steps << "\n\n";
            continue;
        }
        o << "tau = " << m.fidelity.tau << "\nlr = " << fmt6(m.fidelity.learning_rate)
          << "\nmomentum = " << fmt6(m.fidelity.momentum) << "\n";
        if (m.fidelity.stop_loss) o << "stop_loss = " << fmt6(*m.fidelity.stop_loss) << "\n";
        if (m.type != MethodSpec::Type::FidelityOnly) {
            o << "K = " << m.outer_iterations << "\nT_start = " << m.t_start << "\nT_end = " << m.t_end
              << "\nbackend = ";
            switch (m.backend.kind) {
                case PurifyBackend::Kind::AncestralSde: o << "sde"; break;
                case PurifyBackend::Kind::Ddim: o << "ddim\nbackend_steps = " << m.backend.n_steps; break;
                case PurifyBackend::Kind::Tweedie: o << "tweedie"; break;
                case PurifyBackend::Kind::FlowOde: o << "flow-ode\nbackend_steps = " << m.backend.n_steps; break;
            }
            o << "\n";
        }
        o << "\n";
    }
    return o.str();
}

} // namespace

int run_experiment(const ExperimentConfig& config, const RunOverrides& overrides) {
    ExperimentConfig cfg = config;
    if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
    if (overrides.master_seed) cfg.master_seed = *overrides.master_seed;
    if (overrides.jobs) cfg.jobs = *overrides.jobs;

    fs::create_directories(cfg.output_dir);
    if (cfg.dump_traces) fs::create_directories(fs::path(cfg.output_dir) / "traces");
    if (cfg.dump_tensors || cfg.dump_images)
        fs::create_directories(fs::path(cfg.output_dir) / "recons");

    // shared immutable state
    auto schedule = std::make_shared<const NoiseSchedule>(
        NoiseSchedule::vp_linear(cfg.n_steps, cfg.beta_min, cfg.beta_max));
    GaussianMixture prior = [&] {
        if (cfg.prior_type == "gmm") return load_gmm(cfg.prior_file);
        ImageShape shape;
        Vec flat = read_tensor(cfg.dataset_file, &shape);
        std::vector<Vec> rows;
        for (int i = 0; i < shape.height; ++i)
            rows.push_back(flat.segment(Eigen::Index(i) * shape.width, shape.width));
        return empirical_prior(rows, cfg.bandwidth);
    }();
    GmmScoreModel pixel_model(prior, schedule);

    std::vector<std::unique_ptr<LinearOperator>> operators;
    for (const TaskSpec& t : cfg.tasks) {
        operators.push_back(parse_operator(t.operator_spec));
        if (operators.back()->in_shape().size() != prior.dim())
            throw ConfigError("task '" + t.name + "': operator input size " +
                              std::to_string(operators.back()->in_shape().size()) +
                              " does not match prior dimension " + std::to_string(prior.dim()));
    }

    std::optional<LinearCodec> codec;
    std::optional<GmmScoreModel> latent_model;
    bool any_latent = std::any_of(cfg.methods.begin(), cfg.methods.end(), [](const MethodSpec& m) {
        return m.type == MethodSpec::Type::DcdpLatentI || m.type == MethodSpec::Type::DcdpLatentII;
    });
    if (any_latent) {
        if (!cfg.latent.codec_file.empty()) {
            codec = load_codec(cfg.latent.codec_file);
        } else {
            codec = LinearCodec::pca(
                sample_dataset(prior, std::max(cfg.latent.codec_samples, cfg.latent.latent_dim),
                               cfg.latent.codec_seed),
                cfg.latent.latent_dim);
        }
        latent_model.emplace(encode_prior(prior, *codec), schedule);
    }

    // grid enumeration (row order == results.csv order)
    std::vector<Cell> cells;
    for (int ti = 0; ti < int(cfg.tasks.size()); ++ti)
        for (int si = 0; si < int(cfg.tasks[ti].sigmas.size()); ++si)
            for (int mi = 0; mi < int(cfg.methods.size()); ++mi)
                for (int rep = 0; rep < cfg.seeds; ++rep)
                    cells.push_back({ti, si, mi, rep});

    std::vector<CellOutcome> outcomes(cells.size());
    std::atomic<std::size_t> next{0};

    auto run_cell = [&](std::size_t index) {
        const Cell& cell = cells[index];
        const TaskSpec& task = cfg.tasks[cell.task_idx];
        const MethodSpec& method = cfg.methods[cell.method_idx];
        const LinearOperator& op = *operators[cell.task_idx];
        const double sigma = task.sigmas[cell.sigma_idx];
        CellOutcome& out = outcomes[index];
        try {
            // data stream is shared by all methods on the same (task, sigma, rep)
            const std::string data_id =
                task.name + "/" + fmt6(sigma) + "/" + std::to_string(cell.rep);
            const std::uint64_t data_seed = mix_seed(cfg.master_seed, hash_string(data_id));
            const std::uint64_t solver_seed = mix_seed(data_seed, hash_string(method.name));

            Vec truth;
            if (!task.truth_file.empty()) {
                truth = read_tensor(task.truth_file);
                if (truth.size() != op.in_shape().size())
                    throw std::runtime_error("truth tensor does not match operator input shape");
            } else {
                Rng truth_rng(data_seed);
                truth = prior.sample(truth_rng);
            }
            Measurement y = measure(op, truth, sigma, mix_seed(data_seed, 1));

            SolveResult result;
            switch (method.type) {
                case MethodSpec::Type::Dcdp: {
                    SolverConfig sc;
                    sc.outer_iterations = method.outer_iterations;
                    sc.fidelity = method.fidelity;
                    sc.backend = method.backend;
                    sc.purify_times =
                        purification_times(method.outer_iterations, method.t_start, method.t_end);
                    sc.seed = solver_seed;
                    sc.record_iterates = false;
                    result = dcdp_solve(op, y, pixel_model, *schedule, sc, &truth);
                    break;
                }
                case MethodSpec::Type::DcdpLatentI:
                case MethodSpec::Type::DcdpLatentII: {
                    SolverConfig sc;
                    sc.outer_iterations = method.outer_iterations;
                    sc.fidelity = method.fidelity;
                    sc.backend = method.backend;
                    sc.purify_times =
                        purification_times(method.outer_iterations, method.t_start, method.t_end);
                    sc.seed = solver_seed;
                    sc.latent_approach = method.type == MethodSpec::Type::DcdpLatentI
                                             ? LatentApproach::LatentDC
                                             : LatentApproach::PixelDC;
                    sc.record_iterates = false;
                    result = dcdp_solve_latent(op, y, *latent_model, *schedule, *codec, sc, &truth);
                    break;
                }
                case MethodSpec::Type::Dps: {
                    DpsConfig dc;
                    dc.n_steps = method.dps_steps;
                    dc.eta = method.eta;
                    dc.seed = solver_seed;
                    result = dps_solve(op, y, pixel_model, *schedule, dc, &truth);
                    break;
                }
                case MethodSpec::Type::FidelityOnly: {
                    auto t0 = std::chrono::steady_clock::now();
                    IterationRecord rec;
                    rec.k = 1;
                    Vec x = data_fidelity(op, y.y, Vec::Zero(op.in_shape().size()), method.fidelity,
                                          &rec.fidelity_trace);
                    result.wall_time = std::chrono::duration<double>(
                                           std::chrono::steady_clock::now() - t0).count();
                    rec.fidelity_loss_final =
                        rec.fidelity_trace.empty() ? 0.0 : rec.fidelity_trace.back();
                    rec.error_vs_reference = mean_squared_error(x, truth);
                    result.trace.push_back(std::move(rec));
                    result.reconstruction = std::move(x);
                    break;
                }
            }

            out.metrics = compute_metrics(result.reconstruction, truth, op.in_shape(), cfg.peak,
                                          result.nfe.score, result.wall_time);
            out.nfe_jacobian = result.nfe.jacobian;
            out.ok = true;

            const std::string stem = sanitize(task.name) + "__" + sanitize(method.name) +
                                     "__sigma" + sanitize(fmt6(sigma)) + "__r" +
                                     std::to_string(cell.rep);
            if (cfg.dump_traces) {
                std::ostringstream tr;
                tr << "iter,T_k,fidelity_loss_final,mse_vs_truth,psnr,nfe_cumulative\n";
                for (const IterationRecord& r : result.trace) {
                    double it_psnr = r.error_vs_reference > 0.0
                                         ? 10.0 * std::log10(cfg.peak * cfg.peak / r.error_vs_reference)
                                         : std::numeric_limits<double>::infinity();
                    tr << r.k << "," << r.t_level << "," << fmt6(r.fidelity_loss_final) << ","
                       << fmt6(r.error_vs_reference) << "," << fmt6(it_psnr) << ","
                       << r.nfe_cumulative << "\n";
                }
                atomic_write(fs::path(cfg.output_dir) / "traces" / (stem + ".csv"), tr.str());
                std::ostringstream ftr;
                ftr << "outer_iter,inner_step,loss\n";
                for (const IterationRecord& r : result.trace)
                    for (std::size_t step = 0; step < r.fidelity_trace.size(); ++step)
                        ftr << r.k << "," << step << "," << fmt6(r.fidelity_trace[step]) << "\n";
                atomic_write(fs::path(cfg.output_dir) / "traces" / (stem + "__fidelity.csv"),
                             ftr.str());
            }
            if (cfg.dump_tensors)
                write_tensor((fs::path(cfg.output_dir) / "recons" / (stem + ".txt")).string(),
                             result.reconstruction, op.in_shape());
            if (cfg.dump_images && (op.in_shape().channels == 1 || op.in_shape().channels == 3))
                write_image((fs::path(cfg.output_dir) / "recons" / (stem + ".pgm")).string(),
                            result.reconstruction, op.in_shape(), cfg.peak);
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = e.what();
        }
    };

    const int workers = std::max(1, std::min<int>(cfg.jobs, int(cells.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1))
                    run_cell(i);
            });
        for (std::thread& t : pool) t.join();
    }

    // results.csv (wall_time intentionally last: reruns are byte-identical
    // after stripping that column)
    std::ostringstream csv;
    csv << "task,method,sigma_y,seed,psnr,ssim,mse,nfe_score,nfe_jacobian,wall_time\n";
    std::ostringstream errors;
    int failed = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const Cell& cell = cells[i];
        const CellOutcome& out = outcomes[i];
        csv << cfg.tasks[cell.task_idx].name << "," << cfg.methods[cell.method_idx].name << ","
            << fmt6(cfg.tasks[cell.task_idx].sigmas[cell.sigma_idx]) << "," << cell.rep << ",";
        if (out.ok) {
            csv << fmt6(out.metrics.psnr) << "," << fmt6(out.metrics.ssim) << ","
                << fmt6(out.metrics.mse) << "," << out.metrics.nfe << "," << out.nfe_jacobian << ","
                << fmt6(out.metrics.wall_time) << "\n";
        } else {
            csv << ",,,0,0," << fmt6(out.metrics.wall_time) << "\n";
            errors << cfg.tasks[cell.task_idx].name << "/" << cfg.methods[cell.method_idx].name
                   << "/sigma=" << fmt6(cfg.tasks[cell.task_idx].sigmas[cell.sigma_idx]) << "/r"
                   << cell.rep << ": " << out.error << "\n";
            ++failed;
        }
    }
    atomic_write(fs::path(cfg.output_dir) / "results.csv", csv.str());
    if (failed > 0) atomic_write(fs::path(cfg.output_dir) / "errors.log", errors.str());
    atomic_write(fs::path(cfg.output_dir) / "config_resolved.txt", resolved_dump(cfg));
    return failed;
}

// ---------------------------------------------------------------------------
// table aggregation
// ---------------------------------------------------------------------------

namespace {
struct Agg {
    std::vector<double> psnr, ssim, mse, nfe;
};
double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / double(v.size());
}
double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}
} // namespace

std::string emit_table(const std::string& results_csv, const std::string& csv_out) {
    std::ifstream in(results_csv);
    if (!in) throw std::runtime_error("emit_table: cannot open " + results_csv);
    std::string header;
    std::getline(in, header);

    std::vector<std::pair<std::string, std::string>> order; // (task, method) first-seen
    std::map<std::pair<std::string, std::string>, Agg> groups;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() < 10) throw std::runtime_error("emit_table: malformed row: " + line);
        if (f[4].empty()) continue; // failed cell
        auto key = std::make_pair(f[0], f[1]);
        if (!groups.count(key)) order.push_back(key);
        Agg& a = groups[key];
        a.psnr.push_back(std::stod(f[4]));
        a.ssim.push_back(std::stod(f[5]));
        a.mse.push_back(std::stod(f[6]));
        a.nfe.push_back(std::stod(f[7]));
    }

    std::ostringstream txt, agg_csv;
    txt << std::left << std::setw(18) << "task" << std::setw(18) << "method" << std::setw(6) << "n"
        << std::setw(26) << "psnr" << std::setw(28) << "ssim" << std::setw(30) << "mse"
        << "nfe\n";
    agg_csv << "task,method,n,psnr_mean,psnr_std,ssim_mean,ssim_std,mse_mean,mse_std,nfe_mean\n";
    for (const auto& key : order) {
        const Agg& a = groups[key];
        std::ostringstream p, s, m;
        p << fmt6(mean_of(a.psnr)) << " +/- " << fmt6(std_of(a.psnr));
        s << fmt6(mean_of(a.ssim)) << " +/- " << fmt6(std_of(a.ssim));
        m << fmt6(mean_of(a.mse)) << " +/- " << fmt6(std_of(a.mse));
        txt << std::left << std::setw(18) << key.first << std::setw(18) << key.second << std::setw(6)
            << a.psnr.size() << std::setw(26) << p.str() << std::setw(28) << s.str() << std::setw(30)
            << m.str() << fmt6(mean_of(a.nfe)) << "\n";
        agg_csv << key.first << "," << key.second << "," << a.psnr.size() << ","
                << fmt6(mean_of(a.psnr)) << "," << fmt6(std_of(a.psnr)) << "," << fmt6(mean_of(a.ssim))
                << "," << fmt6(std_of(a.ssim)) << "," << fmt6(mean_of(a.mse)) << ","
                << fmt6(std_of(a.mse)) << "," << fmt6(mean_of(a.nfe)) << "\n";
    }
    if (!csv_out.empty()) atomic_write(csv_out, agg_csv.str());
    return txt.str();
}

} // namespace dcdp
