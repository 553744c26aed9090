#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "backshift/pipeline.hpp"
#include "backshift/stability.hpp"

namespace backshift {

// ---------------------------------------------------------------------------
// Number formatting (locale independent)

inline std::string format_double(double value)
{
    char buffer[64];
    const auto res = std::to_chars(buffer, buffer + sizeof(buffer), value, std::chars_format::general, 17);
    return std::string(buffer, res.ptr);
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// Header plus raw cells of a comma-separated file. Blank lines are skipped;
/// `line_numbers` keeps the 1-based source line of every row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        s = s.substr(1, s.size() - 2);
    }
    return s;
}

inline std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return cells;
}

inline double parse_number(const std::string& cell, std::size_t line, const std::string& column)
{
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (first != last && *first == '+') {
        ++first;
    }
    const auto res = std::from_chars(first, last, value);
    if (cell.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(value)) {
        fail(ErrorCode::ParseError,
             "line " + std::to_string(line) + ": column '" + column + "' holds non-numeric value '" + cell + "'");
    }
    return value;
}

} // namespace detail

inline CsvTable read_csv(std::istream& in)
{
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) {
            continue;
        }
        auto cells = detail::split_csv_line(line);
        if (!have_header) {
            table.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != table.header.size()) {
            fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                            std::to_string(table.header.size()) + " fields, found " +
                                            std::to_string(cells.size()));
        }
        table.rows.push_back(std::move(cells));
        table.line_numbers.push_back(line_no);
    }
    if (!have_header) {
        fail(ErrorCode::ParseError, "file is empty; a header row is required");
    }
    return table;
}

inline CsvTable read_csv_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
    }
    return read_csv(in);
}

/// Numeric columns of a table (every column except `skip_column`, if given),
/// in header order.
struct NumericTable {
    std::vector<std::string> names;
    std::optional<std::size_t> skipped_index;
    Matrix values;
};

inline NumericTable numeric_columns(const CsvTable& table, std::string_view skip_column = {})
{
    NumericTable out;
    std::vector<std::size_t> columns;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (!skip_column.empty() && table.header[c] == skip_column) {
            out.skipped_index = c;
        } else {
            columns.push_back(c);
            out.names.push_back(table.header[c]);
        }
    }
    out.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (std::size_t k = 0; k < columns.size(); ++k) {
            out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
                detail::parse_number(table.rows[r][columns[k]], table.line_numbers[r], table.header[columns[k]]);
        }
    }
    return out;
}

/// Groups the rows of an `env`-labelled table into environments in order of
/// first appearance. Variable names come from the remaining header cells.
inline MultiEnvDataset dataset_from_table(const CsvTable& table)
{
    const auto numeric = numeric_columns(table, "env");
    if (!numeric.skipped_index) {
        fail(ErrorCode::ParseError, "header has no 'env' column");
    }
    if (numeric.names.empty()) {
        fail(ErrorCode::ParseError, "header has no variable columns");
    }
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<Eigen::Index>> members;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& label = table.rows[r][*numeric.skipped_index];
        if (label.empty()) {
            fail(ErrorCode::ParseError, "line " + std::to_string(table.line_numbers[r]) + ": empty env label");
        }
        auto [it, inserted] = members.try_emplace(label);
        if (inserted) {
            order.push_back(label);
        }
        it->second.push_back(static_cast<Eigen::Index>(r));
    }
    std::vector<Environment> envs;
    for (const auto& label : order) {
        const auto& rows = members.at(label);
        Matrix data(static_cast<Eigen::Index>(rows.size()), numeric.values.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            data.row(static_cast<Eigen::Index>(i)) = numeric.values.row(rows[i]);
        }
        envs.push_back({label, std::move(data)});
    }
    if (envs.empty()) {
        fail(ErrorCode::ParseError, "file has no data rows");
    }
    return MultiEnvDataset(std::move(envs), numeric.names);
}

inline MultiEnvDataset ingest_csv(const std::filesystem::path& path)
{
    return dataset_from_table(read_csv_file(path));
}

/// Writes a dataset in the ingestion format: `env` first, then the variables.
inline std::string dataset_to_csv(const MultiEnvDataset& dataset)
{
    std::ostringstream out;
    out << "env";
    for (const auto& name : dataset.variable_names()) {
        out << ',' << name;
    }
    out << '\n';
    for (const auto& env : dataset.environments()) {
        for (Eigen::Index r = 0; r < env.data.rows(); ++r) {
            out << env.label;
            for (Eigen::Index k = 0; k < env.data.cols(); ++k) {
                out << ',' << format_double(env.data(r, k));
            }
            out << '\n';
        }
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Result emission

enum class OutputFormat { json, dot, csv };

inline nlohmann::json matrix_to_json(const Matrix& m)
{
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& rows)
{
    if (!rows.is_array()) {
        fail(ErrorCode::ParseError, "matrix must be an array of rows");
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto m = n == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows.front().size());
    Matrix out(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m) {
            fail(ErrorCode::ParseError, "ragged matrix row " + std::to_string(i));
        }
        for (Eigen::Index j = 0; j < m; ++j) {
            out(i, j) = row[static_cast<std::size_t>(j)].get<double>();
        }
    }
    return out;
}

inline nlohmann::json edges_to_json(const std::vector<Edge>& edges, const std::vector<std::string>& names)
{
    auto out = nlohmann::json::array();
    for (const auto& e : edges) {
        out.push_back({{"from", names.at(static_cast<std::size_t>(e.from))},
                       {"to", names.at(static_cast<std::size_t>(e.to))},
                       {"weight", e.weight}});
    }
    return out;
}

/// Everything one estimation run produces, gathered for the writers.
struct ResultBundle {
    ConnectivityEstimate estimate;
    std::vector<std::string> variable_names;
    double threshold = 0.25;
    std::optional<InterventionProfile> profile;
    std::optional<DiagnosticsReport> diagnostics;
};

inline constexpr std::string_view orientation_note = "entry [i][j] is the edge j -> i";

inline nlohmann::json estimate_to_json(const ResultBundle& bundle)
{
    const auto& est = bundle.estimate;
    nlohmann::json out;
    out["variables"] = bundle.variable_names;
    out["orientation"] = orientation_note;
    out["B_hat"] = matrix_to_json(est.B_hat);
    out["empty"] = est.empty;
    out["converged"] = est.converged;
    out["assumptions_violated"] = est.assumptions_violated;
    out["identifiable_setting"] = est.identifiable_setting;
    out["iterations"] = est.iterations;
    out["final_loss"] = std::isfinite(est.final_loss) ? nlohmann::json(est.final_loss) : nlohmann::json(nullptr);
    out["warnings"] = est.warnings;
    out["threshold"] = bundle.threshold;
    out["edges"] = est.empty ? nlohmann::json::array()
                             : edges_to_json(threshold_edges(est.B_hat, bundle.threshold), bundle.variable_names);
    if (bundle.profile) {
        const auto& prof = *bundle.profile;
        nlohmann::json iv;
        iv["baseline"] = prof.baseline.environment ? *prof.baseline.environment : std::string("min");
        iv["environments"] = prof.labels;
        iv["delta_variances"] = matrix_to_json(prof.delta_variances);
        iv["absolute_variances"] = matrix_to_json(prof.absolute_variances);
        out["intervention_variances"] = std::move(iv);
    }
    if (bundle.diagnostics) {
        auto top = nlohmann::json::array();
        const auto& diag = *bundle.diagnostics;
        for (std::size_t j = 0; j < diag.top_violation.size(); ++j) {
            const auto& v = diag.top_violation[j];
            top.push_back({{"environment", diag.labels.at(j)},
                           {"k", bundle.variable_names.at(static_cast<std::size_t>(v.k))},
                           {"l", bundle.variable_names.at(static_cast<std::size_t>(v.l))},
                           {"magnitude", v.magnitude}});
        }
        out["diagnostics"] = {{"top_violation", std::move(top)}};
    }
    return out;
}

inline std::string dot_quote(const std::string& s)
{
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') {
            out += '\\';
        }
        out += c;
    }
    return out + '"';
}

/// DOT digraph of the thresholded edges, labelled with their coefficients.
inline std::string edges_to_dot(const std::vector<Edge>& edges, const std::vector<std::string>& names,
                                std::string_view graph_name = "backshift")
{
    std::ostringstream out;
    out << "digraph " << graph_name << " {\n";
    for (const auto& name : names) {
        out << "  " << dot_quote(name) << ";\n";
    }
    for (const auto& e : edges) {
        out << "  " << dot_quote(names.at(static_cast<std::size_t>(e.from))) << " -> "
            << dot_quote(names.at(static_cast<std::size_t>(e.to))) << " [label=\"" << format_double(e.weight)
            << "\"];\n";
    }
    out << "}\n";
    return out.str();
}

inline std::string estimate_to_dot(const ResultBundle& bundle)
{
    const auto edges = bundle.estimate.empty ? std::vector<Edge>{}
                                             : threshold_edges(bundle.estimate.B_hat, bundle.threshold);
    return edges_to_dot(edges, bundle.variable_names);
}

/// CSV with a leading label column; `corner` names that column.
inline std::string labelled_table_to_csv(std::string_view corner, const std::vector<std::string>& row_labels,
                                         const std::vector<std::string>& column_names, const Matrix& values)
{
    std::ostringstream out;
    out << corner;
    for (const auto& name : column_names) {
        out << ',' << name;
    }
    out << '\n';
    for (Eigen::Index j = 0; j < values.rows(); ++j) {
        out << row_labels.at(static_cast<std::size_t>(j));
        for (Eigen::Index k = 0; k < values.cols(); ++k) {
            out << ',' << format_double(values(j, k));
        }
        out << '\n';
    }
    return out.str();
}

/// |J| x p table of absolute intervention variances, one row per environment.
inline std::string variances_to_csv(const InterventionProfile* profile, const std::vector<std::string>& names)
{
    if (profile == nullptr) {
        return labelled_table_to_csv("env", {}, names, Matrix(0, static_cast<Eigen::Index>(names.size())));
    }
    return labelled_table_to_csv("env", profile->labels, names, profile->absolute_variances);
}

inline nlohmann::json stability_to_json(const StabilityResult& result, const std::vector<std::string>& names,
                                        const StabilityConfig& config)
{
    nlohmann::json out;
    out["variables"] = names;
    out["orientation"] = orientation_note;
    out["frequencies"] = matrix_to_json(result.frequencies);
    out["selected"] = edges_to_json(result.selected, names);
    out["q"] = result.q_used;
    out["runs"] = result.runs;
    out["failed_runs"] = result.failed_runs;
    out["ev_bound"] = config.ev_bound;
    out["pi_thr"] = config.pi_thr;
    out["subsample_fraction"] = config.subsample_fraction;
    out["seed"] = config.seed;
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& content)
{
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
    }
    out << content;
    out.flush();
    if (!out) {
        fail(ErrorCode::IoError, "failed writing '" + path.string() + "'");
    }
}

inline std::string_view default_filename(OutputFormat format)
{
    switch (format) {
    case OutputFormat::json: return "estimate.json";
    case OutputFormat::dot: return "graph.dot";
    case OutputFormat::csv: return "intervention_variances.csv";
    }
    return "estimate.out";
}

/// Writes one output file for `format` into `dir` and returns its path.
inline std::filesystem::path emit_results(const ResultBundle& bundle, OutputFormat format,
                                          const std::filesystem::path& dir)
{
    const auto path = dir / default_filename(format);
    switch (format) {
    case OutputFormat::json: write_text(path, estimate_to_json(bundle).dump(2) + "\n"); break;
    case OutputFormat::dot: write_text(path, estimate_to_dot(bundle)); break;
    case OutputFormat::csv:
        write_text(path, variances_to_csv(bundle.profile ? &*bundle.profile : nullptr, bundle.variable_names));
        break;
    }
    return path;
}

} // namespace backshift
