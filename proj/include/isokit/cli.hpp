#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "isokit/errors.hpp"
#include "isokit/schedules.hpp"

namespace isokit::cli {

inline constexpr const char* toolkit_version = "isokit 1.0.0";

// Subcommand names, one per experiment.
const std::vector<std::string>& experiment_ids();

struct ConfigIssue {
    int line{0};  // 0 when the problem is not tied to a line (e.g. a missing key)
    std::string message;
};

class ConfigParseError : public ConfigError {
public:
    explicit ConfigParseError(std::vector<ConfigIssue> issues);
    const std::vector<ConfigIssue>& issues() const { return issues_; }

private:
    std::vector<ConfigIssue> issues_;
};

struct ModelSection {
    std::optional<int> N;
    std::optional<double> omega_S;
    std::optional<double> omega_f;
    std::optional<double> beta;
    std::optional<double> g0;
    std::optional<double> g_i;
    std::optional<double> mu;
    std::optional<double> Lambda;
    std::optional<double> eps_i;
    std::optional<double> eps_f;
    std::optional<double> T_c;
    std::optional<double> T_h;
    std::vector<double> eps;
};

struct ScheduleSection {
    std::optional<double> alpha;
    std::optional<double> tau_iso_weak;
    std::vector<double> k;
    std::vector<double> tau_on_weak;
    std::vector<double> tau_ratio;
    std::vector<schedules::SwitchOrder> scaling;
};

struct SweepSection {
    std::vector<double> Lambda;
    std::vector<double> tau_tot;
    std::vector<double> tau_tot_weak;
    std::vector<double> sigma;
    std::vector<double> gamma;
    std::vector<double> theta;
    std::optional<int> realizations;
    std::optional<std::uint64_t> seed;
    std::optional<double> R;
    std::optional<double> horizon;
    std::optional<double> dt;
    std::optional<int> series_stride;
};

struct ExperimentConfig {
    std::string experiment;
    ModelSection model;
    ScheduleSection schedule;
    SweepSection sweep;
    std::string output_path;
    // Every accepted "section.key" with its raw value, in input order, for metadata.
    std::vector<std::pair<std::string, std::string>> entries;
};

// Line-oriented `key = value` text with `[section]` headers and `#` comments.
// `experiment = <id>` may appear before the first section; `expected` (the subcommand)
// takes precedence and a conflicting id is an error. All problems are collected and
// thrown together as ConfigParseError.
ExperimentConfig parse_config(const std::string& text, const std::string& expected = "");

using Cell = std::variant<double, long long, std::string>;

struct CsvTable {
    std::string name;  // file name inside the output directory
    std::vector<std::string> header;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row);
};

// Doubles are written with %.17g so they reparse to the same value.
std::string format_cell(const Cell& cell);
std::string render_csv(const CsvTable& table, const std::vector<std::string>& metadata);

struct RunOptions {
    std::string out_dir;
    int threads{1};
};

struct RunReport {
    std::vector<std::string> files;
    std::map<std::string, double> summary;
};

// Tables and summary of one experiment, without touching the file system.
struct ExperimentOutput {
    std::vector<CsvTable> tables;
    std::map<std::string, double> summary;
};

ExperimentOutput compute_experiment(const ExperimentConfig& config, int threads);

// Runs the experiment and writes one CSV per table plus manifest.json. Nothing is
// left behind when any step fails.
RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options);

std::vector<std::string> metadata_lines(const ExperimentConfig& config);

}  // namespace isokit::cli
