// Command-line front end: estimate, simulate, stability, diagnose,
// identifiability. Exit codes are listed in exit_code_for().

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "backshift/backshift.hpp"
#include "backshift/io.hpp"

namespace fs = std::filesystem;
using namespace backshift;

namespace {

constexpr int exit_usage = 64;

int exit_code_for(ErrorCode code)
{
    switch (code) {
    case ErrorCode::ParseError: return 2;
    case ErrorCode::NeedMultipleEnvironments: return 3;
    case ErrorCode::ModelAssumptionsViolated: return 4;
    case ErrorCode::StabilityFailed: return 5;
    case ErrorCode::IoError: return 6;
    case ErrorCode::InsufficientData: return 7;
    default: return 1;
    }
}

struct CommonOptions {
    std::string input;
    std::string output_dir = ".";
    std::string mode = "cov";
    std::optional<Eigen::Index> window_len;
    std::optional<Eigen::Index> window_stride;
    double tol = 1e-8;
    int max_iter = 500;
};

void add_input_options(CLI::App* cmd, CommonOptions& opts)
{
    cmd->add_option("--input", opts.input, "CSV with an 'env' column and one column per variable")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--output-dir", opts.output_dir, "Directory for result files");
    cmd->add_option("--mode", opts.mode, "Scatter matrices: covariance or Gram")
        ->check(CLI::IsMember({"cov", "gram"}));
    cmd->add_option("--window-len", opts.window_len,
                    "Treat the input as a time series and group rows into windows of this length");
    cmd->add_option("--window-stride", opts.window_stride, "Offset between consecutive windows (default: window length)");
    cmd->add_option("--tol", opts.tol, "Relative loss change at which the diagonalizer stops");
    cmd->add_option("--max-iter", opts.max_iter, "Iteration limit of the diagonalizer");
}

EstimatorConfig estimator_config(const CommonOptions& opts)
{
    EstimatorConfig config;
    config.mode = opts.mode == "gram" ? ScatterMode::gram : ScatterMode::covariance;
    config.diagonalizer.tol = opts.tol;
    config.diagonalizer.max_iter = opts.max_iter;
    return config;
}

MultiEnvDataset load_dataset(const CommonOptions& opts)
{
    if (!opts.window_len) {
        return ingest_csv(opts.input);
    }
    // A series: every column except an optional 'env' column is a variable.
    const auto table = read_csv_file(opts.input);
    const auto numeric = numeric_columns(table, "env");
    return window_group(numeric.values, *opts.window_len, opts.window_stride.value_or(*opts.window_len), numeric.names);
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag)
{
    if (flag) {
        return *flag;
    }
    if (const char* env = std::getenv("BACKSHIFT_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            fail(ErrorCode::ParseError, std::string("BACKSHIFT_SEED is not an unsigned integer: '") + env + "'");
        }
    }
    return 0;
}

OutputFormat parse_format(const std::string& name)
{
    if (name == "json") {
        return OutputFormat::json;
    }
    if (name == "dot") {
        return OutputFormat::dot;
    }
    return OutputFormat::csv;
}

Baseline parse_baseline(const std::string& value)
{
    return value == "min" ? Baseline::min_zero() : Baseline::env(value);
}

void print_warnings(const ConnectivityEstimate& est)
{
    for (const auto& w : est.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
}

int run_estimate(const CommonOptions& opts, double threshold, const std::string& baseline,
                 const std::vector<std::string>& formats)
{
    const auto dataset = load_dataset(opts);
    const auto config = estimator_config(opts);
    const auto scatter = build_scatter_set(dataset, config.mode);

    ResultBundle bundle;
    bundle.estimate = estimate_from_scatter(scatter, config);
    bundle.variable_names = dataset.variable_names();
    bundle.threshold = threshold;
    if (!bundle.estimate.empty) {
        bundle.profile = intervention_variances(bundle.estimate, scatter, parse_baseline(baseline));
        bundle.diagnostics = diagnose(bundle.estimate, scatter);
    }
    print_warnings(bundle.estimate);
    for (const auto& f : formats) {
        std::cout << emit_results(bundle, parse_format(f), opts.output_dir).string() << '\n';
    }
    return bundle.estimate.assumptions_violated ? exit_code_for(ErrorCode::ModelAssumptionsViolated) : 0;
}

int run_diagnose(const CommonOptions& opts)
{
    const auto dataset = load_dataset(opts);
    const auto config = estimator_config(opts);
    const auto scatter = build_scatter_set(dataset, config.mode);
    ResultBundle bundle;
    bundle.estimate = estimate_from_scatter(scatter, config);
    bundle.variable_names = dataset.variable_names();
    print_warnings(bundle.estimate);
    if (bundle.estimate.empty) {
        fail(bundle.estimate.assumptions_violated ? ErrorCode::ModelAssumptionsViolated
                                                  : ErrorCode::EstimateUnavailable,
             "no connectivity estimate to diagnose");
    }
    const auto report = diagnose(bundle.estimate, scatter);
    bundle.diagnostics = report;

    auto json = estimate_to_json(bundle);
    auto residuals = nlohmann::json::array();
    for (const auto& r : report.residuals) {
        residuals.push_back(matrix_to_json(r));
    }
    json["diagnostics"]["residuals"] = std::move(residuals);
    json["diagnostics"]["mode"] = opts.mode;
    const auto path = fs::path(opts.output_dir) / "diagnostics.json";
    write_text(path, json.dump(2) + "\n");
    std::cout << path.string() << '\n';
    return 0;
}

int run_stability(const CommonOptions& opts, StabilityConfig config, const std::vector<std::string>& formats)
{
    const auto dataset = load_dataset(opts);
    const auto result = stability_select(dataset, config, estimator_config(opts));
    for (const auto& f : formats) {
        fs::path path;
        if (f == "dot") {
            path = fs::path(opts.output_dir) / "stability.dot";
            write_text(path, edges_to_dot(result.selected, dataset.variable_names(), "stability"));
        } else if (f == "json") {
            path = fs::path(opts.output_dir) / "stability.json";
            write_text(path, stability_to_json(result, dataset.variable_names(), config).dump(2) + "\n");
        } else {
            // Rows are targets, columns sources, matching the B orientation.
            path = fs::path(opts.output_dir) / "stability_frequencies.csv";
            write_text(path, labelled_table_to_csv("target", dataset.variable_names(), dataset.variable_names(),
                                                   result.frequencies));
        }
        std::cout << path.string() << '\n';
    }
    return 0;
}

int run_identifiability(const CommonOptions& opts, bool eta_input)
{
    Matrix eta;
    std::vector<std::string> names;
    if (eta_input) {
        const auto table = read_csv_file(opts.input);
        auto numeric = numeric_columns(table, "env");
        eta = std::move(numeric.values);
        names = std::move(numeric.names);
    } else {
        const auto dataset = load_dataset(opts);
        const auto config = estimator_config(opts);
        const auto scatter = build_scatter_set(dataset, config.mode);
        const auto est = estimate_from_scatter(scatter, config);
        print_warnings(est);
        if (est.empty) {
            fail(est.assumptions_violated ? ErrorCode::ModelAssumptionsViolated : ErrorCode::EstimateUnavailable,
                 "no connectivity estimate to derive intervention variances from");
        }
        eta = intervention_variances(est, scatter).delta_variances;
        names = dataset.variable_names();
    }
    const auto report = check_identifiability(eta);
    nlohmann::json out;
    out["identifiable"] = report.identifiable;
    auto pairs = nlohmann::json::array();
    for (const auto& [k, l] : report.violating_pairs) {
        pairs.push_back({names.at(static_cast<std::size_t>(k)), names.at(static_cast<std::size_t>(l))});
    }
    out["violating_pairs"] = std::move(pairs);
    out["eta"] = matrix_to_json(eta);
    const auto path = fs::path(opts.output_dir) / "identifiability.json";
    write_text(path, out.dump(2) + "\n");
    std::cout << path.string() << '\n';
    std::cout << (report.identifiable ? "identifiable" : "not identifiable") << '\n';
    return 0;
}

struct SimulateOptions {
    std::string output_dir = ".";
    std::optional<std::uint64_t> seed;
    int envs = 10;
    Eigen::Index n = 10000;
    double m_i = 1.0;
    bool hidden = false;
    bool beta_per_observation = false;
};

int run_simulate(const SimulateOptions& opts)
{
    const auto seed = resolve_seed(opts.seed);
    const auto model = reference_network(opts.hidden, derive_seed(seed, 0xA11CE));
    InterventionSpec spec;
    spec.m_I = opts.m_i;
    spec.beta_per_observation = opts.beta_per_observation;
    const auto sim = simulate_detailed(model, spec, std::vector<Eigen::Index>(static_cast<std::size_t>(opts.envs), opts.n),
                                       seed);
    const auto data_path = fs::path(opts.output_dir) / "data.csv";
    write_text(data_path, dataset_to_csv(sim.dataset));

    nlohmann::json truth;
    truth["variables"] = sim.dataset.variable_names();
    truth["orientation"] = orientation_note;
    truth["B"] = matrix_to_json(model.B);
    truth["edges"] = edges_to_json(threshold_edges(model.B, 0.0), sim.dataset.variable_names());
    truth["hidden"] = model.hidden;
    truth["gamma"] = std::vector<double>(model.gamma.data(), model.gamma.data() + model.gamma.size());
    truth["m_I"] = opts.m_i;
    truth["beta"] = matrix_to_json(sim.beta);
    truth["seed"] = seed;
    const auto truth_path = fs::path(opts.output_dir) / "truth.json";
    write_text(truth_path, truth.dump(2) + "\n");
    std::cout << data_path.string() << '\n' << truth_path.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"backshift: cyclic causal discovery from unknown shift interventions"};
    app.require_subcommand(1);

    CommonOptions common;
    double threshold = 0.25;
    std::string baseline = "min";
    std::vector<std::string> formats;
    std::optional<std::uint64_t> seed;
    StabilityConfig stab;
    bool eta_input = false;
    SimulateOptions sim;

    auto* est_cmd = app.add_subcommand("estimate", "Estimate the connectivity matrix and intervention variances");
    add_input_options(est_cmd, common);
    est_cmd->add_option("--threshold", threshold, "Report edges with |B_hat| above this value")
        ->check(CLI::NonNegativeNumber);
    est_cmd->add_option("--baseline", baseline, "'min' or an environment label used as zero intervention variance");
    est_cmd->add_option("--format", formats, "Output formats (repeatable)")
        ->check(CLI::IsMember({"json", "dot", "csv"}));

    auto* diag_cmd = app.add_subcommand("diagnose", "Report per-environment mechanism violations");
    add_input_options(diag_cmd, common);

    auto* stab_cmd = app.add_subcommand("stability", "Stability selection over stratified subsamples");
    add_input_options(stab_cmd, common);
    stab_cmd->add_option("--seed", seed, "Seed (falls back to BACKSHIFT_SEED, then 0)");
    stab_cmd->add_option("--subsamples", stab.n_subsamples, "Number of subsample fits")->check(CLI::PositiveNumber);
    stab_cmd->add_option("--ev", stab.ev_bound, "Tolerated expected number of false selections E(V)")
        ->check(CLI::PositiveNumber);
    stab_cmd->add_option("--pi-thr", stab.pi_thr, "Selection-frequency threshold in (0.5, 1]");
    stab_cmd->add_option("--fraction", stab.subsample_fraction, "Fraction of rows kept per environment");
    stab_cmd->add_option("--format", formats, "Output formats (repeatable)")
        ->check(CLI::IsMember({"json", "dot", "csv"}));

    auto* ident_cmd = app.add_subcommand("identifiability", "Check the uniqueness condition on intervention variances");
    add_input_options(ident_cmd, common);
    ident_cmd->add_flag("--eta", eta_input, "Input rows are intervention-variance differences, one per environment");

    auto* sim_cmd = app.add_subcommand("simulate", "Simulate the reference network under shift interventions");
    sim_cmd->add_option("--output-dir", sim.output_dir, "Directory for data.csv and truth.json");
    sim_cmd->add_option("--seed", sim.seed, "Seed (falls back to BACKSHIFT_SEED, then 0)");
    sim_cmd->add_option("--envs", sim.envs, "Number of environments")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--n", sim.n, "Observations per environment")->check(CLI::Range(2, 100000000));
    sim_cmd->add_option("--m-i", sim.m_i, "Mean of the exponential intervention-strength draw (0: no interventions)")
        ->check(CLI::NonNegativeNumber);
    sim_cmd->add_flag("--hidden", sim.hidden, "Confound all variables through one hidden Laplace variable");
    sim_cmd->add_flag("--beta-per-observation", sim.beta_per_observation,
                      "Redraw intervention strengths for every observation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_usage;
    }

    try {
        if (*est_cmd) {
            if (formats.empty()) {
                formats = {"json"};
            }
            return run_estimate(common, threshold, baseline, formats);
        }
        if (*diag_cmd) {
            return run_diagnose(common);
        }
        if (*stab_cmd) {
            if (formats.empty()) {
                formats = {"json"};
            }
            stab.seed = resolve_seed(seed);
            return run_stability(common, stab, formats);
        }
        if (*ident_cmd) {
            return run_identifiability(common, eta_input);
        }
        if (*sim_cmd) {
            return run_simulate(sim);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return exit_usage;
}
