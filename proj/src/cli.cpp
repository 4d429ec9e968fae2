#include "isokit/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

#include "isokit/analytics.hpp"
#include "isokit/gaussian.hpp"
#include "isokit/machines.hpp"
#include "isokit/numerics.hpp"
#include "isokit/resonant.hpp"

namespace isokit::cli {

using schedules::SwitchOrder;

const std::vector<std::string>& experiment_ids() {
    static const std::vector<std::string> ids = {
        "cl-thermalize", "cl-covariance", "cl-protocol", "rl-protocol",     "rl-decay",
        "rl-fast",       "rl-noise",      "rl-cutoff",   "rl-carnot",       "analytics-times",
        "machines-emp"};
    return ids;
}

namespace {

std::string join_issues(const std::vector<ConfigIssue>& issues) {
    std::string out;
    for (std::size_t i = 0; i < issues.size(); ++i) {
        if (i) out += '\n';
        out += issues[i].line > 0 ? "line " + std::to_string(issues[i].line) + ": " : "config: ";
        out += issues[i].message;
    }
    return out;
}

}  // namespace

ConfigParseError::ConfigParseError(std::vector<ConfigIssue> issues)
    : ConfigError(join_issues(issues)), issues_(std::move(issues)) {}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

std::optional<double> to_double(const std::string& s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

std::optional<long long> to_integer(const std::string& s) {
    long long v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<SwitchOrder> to_order(const std::string& s) {
    if (s == "quadratic") return SwitchOrder::quadratic;
    if (s == "linear") return SwitchOrder::linear;
    if (s == "first") return SwitchOrder::first;
    if (s == "second") return SwitchOrder::second;
    return std::nullopt;
}

const char* order_name(SwitchOrder order) {
    switch (order) {
        case SwitchOrder::first: return "first";
        case SwitchOrder::second: return "second";
        case SwitchOrder::linear: return "linear";
        case SwitchOrder::quadratic: return "quadratic";
    }
    return "unknown";
}

using Range = std::function<bool(double)>;

Range positive() {
    return [](double v) { return v > 0.0; };
}
Range at_least(double lo) {
    return [lo](double v) { return v >= lo; };
}
Range nonnegative() {
    return [](double v) { return v >= 0.0; };
}
Range open_unit() {
    return [](double v) { return v > 0.0 && v < 1.0; };
}
Range any_value() {
    return [](double) { return true; };
}

// Applies a raw value to the config; returns an error message or "".
using Setter = std::function<std::string(ExperimentConfig&, const std::string&)>;

template <class Section>
Setter scalar_in(Section ExperimentConfig::*section, std::optional<double> Section::*field,
                 Range ok, std::string range_text) {
    return [=](ExperimentConfig& c, const std::string& raw) -> std::string {
        const auto v = to_double(raw);
        if (!v) return "expected a number, got '" + raw + "'";
        if (!ok(*v)) return "value " + raw + " out of range (" + range_text + ")";
        (c.*section).*field = *v;
        return "";
    };
}

template <class Section>
Setter list_in(Section ExperimentConfig::*section, std::vector<double> Section::*field, Range ok,
               std::string range_text, std::size_t exact_size = 0) {
    return [=](ExperimentConfig& c, const std::string& raw) -> std::string {
        std::vector<double> values;
        for (const auto& item : split_list(raw)) {
            const auto v = to_double(item);
            if (!v) return "expected a comma-separated list of numbers, got '" + raw + "'";
            if (!ok(*v)) return "list entry " + item + " out of range (" + range_text + ")";
            values.push_back(*v);
        }
        if (exact_size && values.size() != exact_size) {
            return "expected exactly " + std::to_string(exact_size) + " values";
        }
        (c.*section).*field = std::move(values);
        return "";
    };
}

template <class Section, class Int>
Setter integer_in(Section ExperimentConfig::*section, std::optional<Int> Section::*field,
                  long long lo, long long hi) {
    return [=](ExperimentConfig& c, const std::string& raw) -> std::string {
        const auto v = to_integer(raw);
        if (!v) return "expected an integer, got '" + raw + "'";
        if (*v < lo || *v > hi) {
            return "value " + raw + " out of range [" + std::to_string(lo) + ", " +
                   std::to_string(hi) + "]";
        }
        (c.*section).*field = static_cast<Int>(*v);
        return "";
    };
}

Setter seed_setter() {
    return [](ExperimentConfig& c, const std::string& raw) -> std::string {
        std::uint64_t v = 0;
        const auto r = std::from_chars(raw.data(), raw.data() + raw.size(), v);
        if (raw.empty() || r.ec != std::errc() || r.ptr != raw.data() + raw.size()) {
            return "expected an unsigned 64-bit integer, got '" + raw + "'";
        }
        c.sweep.seed = v;
        return "";
    };
}

Setter scaling_setter() {
    return [](ExperimentConfig& c, const std::string& raw) -> std::string {
        std::vector<SwitchOrder> values;
        for (const auto& item : split_list(raw)) {
            const auto o = to_order(item);
            if (!o) return "unknown scaling '" + item + "' (quadratic, linear, first, second)";
            values.push_back(*o);
        }
        c.schedule.scaling = std::move(values);
        return "";
    };
}

Setter path_setter() {
    return [](ExperimentConfig& c, const std::string& raw) -> std::string {
        if (raw.empty()) return "empty output path";
        c.output_path = raw;
        return "";
    };
}

const std::map<std::string, Setter>& key_table() {
    using E = ExperimentConfig;
    static const std::map<std::string, Setter> table = {
        {"model.N", integer_in(&E::model, &ModelSection::N, 1, 5000)},
        {"model.omega_S", scalar_in(&E::model, &ModelSection::omega_S, positive(), "> 0")},
        {"model.omega_f", scalar_in(&E::model, &ModelSection::omega_f, positive(), "> 0")},
        {"model.beta", scalar_in(&E::model, &ModelSection::beta, positive(), "> 0")},
        {"model.g0", scalar_in(&E::model, &ModelSection::g0, positive(), "> 0")},
        {"model.g_i", scalar_in(&E::model, &ModelSection::g_i, nonnegative(), ">= 0")},
        {"model.mu", scalar_in(&E::model, &ModelSection::mu, any_value(), "any")},
        {"model.Lambda", scalar_in(&E::model, &ModelSection::Lambda, positive(), "> 0")},
        {"model.eps_i", scalar_in(&E::model, &ModelSection::eps_i, any_value(), "any")},
        {"model.eps_f", scalar_in(&E::model, &ModelSection::eps_f, any_value(), "any")},
        {"model.T_c", scalar_in(&E::model, &ModelSection::T_c, positive(), "> 0")},
        {"model.T_h", scalar_in(&E::model, &ModelSection::T_h, positive(), "> 0")},
        {"model.eps", list_in(&E::model, &ModelSection::eps, positive(), "> 0", 4)},
        {"schedule.alpha",
         scalar_in(&E::schedule, &ScheduleSection::alpha, at_least(1.0), ">= 1")},
        {"schedule.tau_iso_weak",
         scalar_in(&E::schedule, &ScheduleSection::tau_iso_weak, positive(), "> 0")},
        {"schedule.k", list_in(&E::schedule, &ScheduleSection::k, at_least(1.0), ">= 1")},
        {"schedule.tau_on_weak",
         list_in(&E::schedule, &ScheduleSection::tau_on_weak, positive(), "> 0")},
        {"schedule.tau_ratio",
         list_in(&E::schedule, &ScheduleSection::tau_ratio, positive(), "> 0")},
        {"schedule.scaling", scaling_setter()},
        {"sweep.Lambda", list_in(&E::sweep, &SweepSection::Lambda, positive(), "> 0")},
        {"sweep.tau_tot", list_in(&E::sweep, &SweepSection::tau_tot, positive(), "> 0")},
        {"sweep.tau_tot_weak",
         list_in(&E::sweep, &SweepSection::tau_tot_weak, positive(), "> 0")},
        {"sweep.sigma",
         list_in(&E::sweep, &SweepSection::sigma,
                      [](double v) { return v >= 0.0 && v < 0.3; }, "[0, 0.3)")},
        {"sweep.gamma", list_in(&E::sweep, &SweepSection::gamma, at_least(1.0), ">= 1")},
        {"sweep.theta", list_in(&E::sweep, &SweepSection::theta, open_unit(), "(0, 1)")},
        {"sweep.realizations", integer_in(&E::sweep, &SweepSection::realizations, 1, 1000000)},
        {"sweep.seed", seed_setter()},
        {"sweep.R", scalar_in(&E::sweep, &SweepSection::R, [](double v) { return v > 1.0; },
                                   "> 1")},
        {"sweep.horizon", scalar_in(&E::sweep, &SweepSection::horizon, positive(), "> 0")},
        {"sweep.dt", scalar_in(&E::sweep, &SweepSection::dt, positive(), "> 0")},
        {"sweep.series_stride",
         integer_in(&E::sweep, &SweepSection::series_stride, 1, 1000000)},
        {"output.path", path_setter()},
    };
    return table;
}

struct Schema {
    std::vector<std::string> required;
    std::vector<std::string> optional;
};

const std::map<std::string, Schema>& schemas() {
    static const std::map<std::string, Schema> s = {
        {"cl-thermalize",
         {{"model.N", "model.omega_S", "model.beta", "model.g0", "schedule.k"},
          {"sweep.horizon", "sweep.series_stride", "output.path"}}},
        {"cl-covariance",
         {{"model.N", "model.omega_S", "model.beta", "model.g0", "schedule.k"}, {"output.path"}}},
        {"cl-protocol",
         {{"model.N", "model.omega_S", "model.omega_f", "model.beta", "model.g0", "schedule.k",
           "schedule.tau_on_weak", "schedule.tau_iso_weak"},
          {"model.g_i", "schedule.alpha", "schedule.scaling", "sweep.dt", "output.path"}}},
        {"rl-protocol",
         {{"model.beta", "model.Lambda", "model.g0", "model.eps_i", "model.eps_f", "schedule.k",
           "schedule.tau_on_weak", "schedule.tau_iso_weak", "schedule.scaling"},
          {"model.mu", "sweep.dt", "output.path"}}},
        {"rl-decay",
         {{"model.beta", "model.Lambda", "model.g0", "model.eps_i", "model.eps_f",
           "schedule.tau_on_weak", "sweep.tau_tot"},
          {"model.mu", "sweep.dt", "output.path"}}},
        {"rl-fast",
         {{"model.beta", "model.Lambda", "model.g0", "model.eps_i", "model.eps_f", "schedule.k",
           "schedule.tau_ratio", "schedule.scaling", "sweep.tau_tot_weak"},
          {"model.mu", "sweep.dt", "output.path"}}},
        {"rl-noise",
         {{"model.beta", "model.Lambda", "model.g0", "model.eps_i", "model.eps_f", "schedule.k",
           "schedule.tau_on_weak", "schedule.tau_iso_weak", "sweep.sigma", "sweep.realizations",
           "sweep.seed"},
          {"model.mu", "schedule.scaling", "sweep.dt", "output.path"}}},
        {"rl-cutoff",
         {{"model.beta", "model.g0", "model.eps_i", "model.eps_f", "schedule.k",
           "schedule.tau_on_weak", "schedule.tau_iso_weak", "sweep.Lambda"},
          {"model.mu", "schedule.scaling", "sweep.dt", "output.path"}}},
        {"rl-carnot",
         {{"model.eps", "model.T_c", "model.T_h", "model.g0", "model.Lambda", "schedule.k",
           "schedule.tau_on_weak", "schedule.tau_iso_weak", "schedule.scaling"},
          {"sweep.dt", "output.path"}}},
        {"analytics-times",
         {{"schedule.alpha", "schedule.k", "schedule.tau_on_weak", "schedule.tau_ratio"},
          {"output.path"}}},
        {"machines-emp", {{"sweep.gamma", "sweep.theta", "sweep.R"}, {"output.path"}}},
    };
    return s;
}

// Cross-field checks that cannot be expressed per key.
void check_consistency(const ExperimentConfig& c, int end_line, std::vector<ConfigIssue>& issues) {
    auto single = [&](const char* key, std::size_t size) {
        if (size > 1) issues.push_back({end_line, std::string(key) + " must hold a single value"});
    };
    const std::string& e = c.experiment;
    if (e == "rl-fast") {
        single("schedule.k", c.schedule.k.size());
        single("schedule.tau_ratio", c.schedule.tau_ratio.size());
    }
    if (e == "rl-noise") {
        single("schedule.k", c.schedule.k.size());
        single("schedule.tau_on_weak", c.schedule.tau_on_weak.size());
        single("schedule.scaling", c.schedule.scaling.size());
    }
    if (e == "rl-cutoff") {
        single("schedule.tau_on_weak", c.schedule.tau_on_weak.size());
        single("schedule.scaling", c.schedule.scaling.size());
    }
    if (e == "rl-carnot") single("schedule.tau_on_weak", c.schedule.tau_on_weak.size());
    if (e == "analytics-times") single("schedule.tau_on_weak", c.schedule.tau_on_weak.size());
    if (e == "cl-protocol") single("schedule.scaling", c.schedule.scaling.size());
    if (e == "rl-carnot" && c.model.T_c && c.model.T_h && !(*c.model.T_h > *c.model.T_c)) {
        issues.push_back({end_line, "model.T_h must exceed model.T_c"});
    }
    if (e == "rl-decay" && c.sweep.tau_tot.size() < 3) {
        issues.push_back({end_line, "sweep.tau_tot needs at least 3 values for the decay fit"});
    }
    if (e == "cl-thermalize" && c.schedule.k.size() < 3) {
        issues.push_back({end_line, "schedule.k needs at least 3 values for the exponent fit"});
    }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& expected) {
    static const std::set<std::string> sections = {"model", "schedule", "sweep", "output"};
    std::vector<ConfigIssue> issues;
    ExperimentConfig config;
    config.experiment = expected;

    struct Pending {
        int line;
        std::string key;
        std::string value;
    };
    std::vector<Pending> pending;
    std::map<std::string, int> seen;
    std::string section;
    int line_no = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                issues.push_back({line_no, "malformed section header '" + line + "'"});
                continue;
            }
            section = trim(line.substr(1, line.size() - 2));
            if (!sections.count(section)) {
                issues.push_back({line_no, "unknown section [" + section + "]"});
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            issues.push_back({line_no, "expected 'key = value', got '" + line + "'"});
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            issues.push_back({line_no, "missing key before '='"});
            continue;
        }
        if (section.empty()) {
            if (key != "experiment") {
                issues.push_back({line_no, "key '" + key + "' outside any section"});
                continue;
            }
            if (std::find(experiment_ids().begin(), experiment_ids().end(), value) ==
                experiment_ids().end()) {
                issues.push_back({line_no, "unknown experiment '" + value + "'"});
            } else if (!expected.empty() && value != expected) {
                issues.push_back({line_no, "config is for '" + value + "' but the command is '" +
                                               expected + "'"});
            } else {
                config.experiment = value;
            }
            continue;
        }
        if (!sections.count(section)) continue;
        const std::string full = section + "." + key;
        if (const auto it = seen.find(full); it != seen.end()) {
            issues.push_back({line_no, "duplicate key " + full + " (first set on line " +
                                           std::to_string(it->second) + ")"});
            continue;
        }
        seen[full] = line_no;
        pending.push_back({line_no, full, value});
    }
    const int end_line = line_no + 1;

    if (config.experiment.empty()) {
        issues.push_back({0, "no experiment given (set 'experiment = <id>' or use a subcommand)"});
        throw ConfigParseError(std::move(issues));
    }
    const auto schema_it = schemas().find(config.experiment);
    if (schema_it == schemas().end()) {
        issues.push_back({0, "unknown experiment '" + config.experiment + "'"});
        throw ConfigParseError(std::move(issues));
    }
    const Schema& schema = schema_it->second;
    auto allowed = [&](const std::string& key) {
        return std::find(schema.required.begin(), schema.required.end(), key) !=
                   schema.required.end() ||
               std::find(schema.optional.begin(), schema.optional.end(), key) !=
                   schema.optional.end();
    };
    for (const auto& p : pending) {
        if (!allowed(p.key)) {
            issues.push_back({p.line, "unknown key " + p.key + " for " + config.experiment});
            continue;
        }
        const std::string err = key_table().at(p.key)(config, p.value);
        if (!err.empty()) {
            issues.push_back({p.line, p.key + ": " + err});
            continue;
        }
        config.entries.emplace_back(p.key, p.value);
    }
    for (const auto& key : schema.required) {
        if (!seen.count(key)) issues.push_back({end_line, "missing required key " + key});
    }
    check_consistency(config, end_line, issues);
    if (!issues.empty()) throw ConfigParseError(std::move(issues));
    return config;
}

void CsvTable::add(std::vector<Cell> row) {
    if (row.size() != header.size()) throw NumericError("CsvTable: row width does not match header");
    rows.push_back(std::move(row));
}

std::string format_cell(const Cell& cell) {
    if (const auto* d = std::get_if<double>(&cell)) {
        if (std::isnan(*d)) return "nan";
        if (std::isinf(*d)) return *d > 0 ? "inf" : "-inf";
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", *d);
        return buf;
    }
    if (const auto* i = std::get_if<long long>(&cell)) return std::to_string(*i);
    return std::get<std::string>(cell);
}

std::string render_csv(const CsvTable& table, const std::vector<std::string>& metadata) {
    std::string out;
    for (const auto& m : metadata) out += "# " + m + "\n";
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) out += ',';
        out += table.header[i];
    }
    out += '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_cell(row[i]);
        }
        out += '\n';
    }
    return out;
}

std::vector<std::string> metadata_lines(const ExperimentConfig& config) {
    std::vector<std::string> lines;
    lines.push_back(std::string("toolkit = ") + toolkit_version);
    lines.push_back("experiment = " + config.experiment);
    lines.push_back("seed = " + (config.sweep.seed ? std::to_string(*config.sweep.seed)
                                                   : std::string("none")));
    for (const auto& [key, value] : config.entries) {
        if (key == "sweep.seed" || key == "output.path") continue;
        lines.push_back(key + " = " + value);
    }
    return lines;
}

namespace {

using gaussian::CLParams;
using resonant::Bath;

double get(const std::optional<double>& v, double fallback) { return v ? *v : fallback; }

resonant::SolverOptions solver_options(const ExperimentConfig& c) {
    resonant::SolverOptions o;
    if (c.sweep.dt) o.dt = *c.sweep.dt;
    return o;
}

Bath rl_bath(const ExperimentConfig& c, double Lambda) {
    return Bath{*c.model.beta, get(c.model.mu, 0.0), Lambda};
}

SwitchOrder single_scaling(const ExperimentConfig& c) {
    return c.schedule.scaling.empty() ? SwitchOrder::quadratic : c.schedule.scaling.front();
}

long long flag(bool b) { return b ? 1 : 0; }

ExperimentOutput run_cl_thermalize(const ExperimentConfig& c, int threads) {
    const CLParams params = CLParams::make(*c.model.N, *c.model.omega_S, *c.model.beta);
    const double g0 = *c.model.g0;
    gaussian::ThermalizationOptions opts;
    if (c.sweep.horizon) opts.horizon = *c.sweep.horizon;
    const auto& ks = c.schedule.k;
    std::vector<gaussian::ThermalizationResult> results(ks.size());
    numerics::parallel_for(ks.size(), threads, [&](std::size_t i) {
        results[i] = gaussian::thermalization_experiment(params, g0, ks[i], opts);
    });

    ExperimentOutput out;
    CsvTable series{"thermalize_series.csv", {"k", "t", "rel_entropy", "delta_V", "delta_V_avg"}, {}};
    CsvTable fits{"thermalize_fits.csv",
                  {"k", "g", "tau_S", "g0sq_tau_S", "r_squared_S", "unreliable_S", "tau_V",
                   "g0sq_tau_V", "r_squared_V", "unreliable_V"},
                  {}};
    const std::size_t stride = c.sweep.series_stride ? *c.sweep.series_stride : 10;
    std::vector<double> tau_S, tau_V;
    for (const auto& r : results) {
        for (std::size_t j = 0; j < r.t.size(); j += stride) {
            series.add({r.k, r.t[j], r.rel_entropy[j], r.delta_V[j], r.delta_V_avg[j]});
        }
        fits.add({r.k, r.k * g0, r.fit_S.tau, g0 * g0 * r.fit_S.tau, r.fit_S.r_squared,
                  flag(r.fit_S.unreliable), r.fit_V.tau, g0 * g0 * r.fit_V.tau,
                  r.fit_V.r_squared, flag(r.fit_V.unreliable)});
        tau_S.push_back(r.fit_S.tau);
        tau_V.push_back(r.fit_V.tau);
    }
    CsvTable exps{"thermalize_exponents.csv", {"channel", "nu", "g0sq_tau_eq", "r_squared"}, {}};
    const auto fs = numerics::loglog_fit(ks, tau_S);
    const auto fv = numerics::loglog_fit(ks, tau_V);
    exps.add({std::string("S"), -fs.slope, g0 * g0 * std::exp(fs.intercept), fs.r_squared});
    exps.add({std::string("V"), -fv.slope, g0 * g0 * std::exp(fv.intercept), fv.r_squared});
    out.summary = {{"nu_S", -fs.slope},
                   {"g0sq_tau_S", g0 * g0 * std::exp(fs.intercept)},
                   {"nu_V", -fv.slope},
                   {"g0sq_tau_V", g0 * g0 * std::exp(fv.intercept)}};
    out.tables = {std::move(exps), std::move(fits), std::move(series)};
    return out;
}

ExperimentOutput run_cl_covariance(const ExperimentConfig& c, int threads) {
    const CLParams params = CLParams::make(*c.model.N, *c.model.omega_S, *c.model.beta);
    const auto& ks = c.schedule.k;
    std::vector<gaussian::KMCovariance> hs(ks.size()), vv(ks.size());
    numerics::parallel_for(ks.size(), threads, [&](std::size_t i) {
        const double g = ks[i] * *c.model.g0;
        hs[i] = gaussian::km_covariance(params, gaussian::CovTarget::H_S, g, *c.model.omega_S);
        vv[i] = gaussian::km_covariance(params, gaussian::CovTarget::V, g, *c.model.omega_S);
    });
    CsvTable t{"covariance.csv",
               {"k", "g", "cov_H_S", "warning_H_S", "cov_V", "warning_V"},
               {}};
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        t.add({ks[i], ks[i] * *c.model.g0, hs[i].value, flag(hs[i].precision_warning), vv[i].value,
               flag(vv[i].precision_warning)});
        lo = std::min(lo, hs[i].value);
        hi = std::max(hi, hs[i].value);
    }
    ExperimentOutput out;
    out.summary = {{"cov_H_S_relative_spread", (hi - lo) / std::abs(hi)}};
    out.tables.push_back(std::move(t));
    return out;
}

ExperimentOutput run_cl_protocol(const ExperimentConfig& c, int threads) {
    const CLParams params = CLParams::make(*c.model.N, *c.model.omega_S, *c.model.beta);
    const double alpha = get(c.schedule.alpha, 1.0);
    const double g_i = get(c.model.g_i, 1e-4);
    const SwitchOrder order = single_scaling(c);
    const auto drive = schedules::PiecewiseLinear::linear(*c.model.omega_S, *c.model.omega_f, 0.0, 1.0);
    gaussian::EvolveOptions eo;
    if (c.sweep.dt) eo.dt = *c.sweep.dt;

    struct Job {
        double ton_w;
        double k;
    };
    std::vector<Job> jobs;
    for (double ton_w : c.schedule.tau_on_weak) {
        for (double k : c.schedule.k) jobs.push_back({ton_w, k});
    }
    std::vector<gaussian::ProtocolResult> res(jobs.size());
    std::vector<schedules::StageTimes> times(jobs.size());
    numerics::parallel_for(jobs.size(), threads, [&](std::size_t i) {
        times[i] = schedules::allocate_times(jobs[i].k, alpha, jobs[i].ton_w,
                                             *c.schedule.tau_iso_weak, order);
        const auto sch = schedules::ProtocolSchedule::make(g_i, *c.model.g0, jobs[i].k, alpha,
                                                           times[i].tau_on, times[i].tau_iso, drive);
        res[i] = gaussian::run_protocol(params, sch, eo);
        res[i].trajectory = {};
    });
    CsvTable t{"cl_protocol.csv",
               {"tau_on_weak", "k", "tau_on", "tau_iso", "tau_tot", "W", "W_energy_balance",
                "delta_F", "W_diss"},
               {}};
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        t.add({jobs[i].ton_w, jobs[i].k, times[i].tau_on, times[i].tau_iso, times[i].tau_tot,
               res[i].W, res[i].W_energy_balance, res[i].delta_F, res[i].W_diss});
    }
    ExperimentOutput out;
    out.tables.push_back(std::move(t));
    return out;
}

ExperimentOutput run_rl_protocol(const ExperimentConfig& c, int threads) {
    const Bath bath = rl_bath(c, *c.model.Lambda);
    const auto so = solver_options(c);
    struct Job {
        SwitchOrder order;
        double ton_w;
        double k;
    };
    std::vector<Job> jobs;
    for (auto order : c.schedule.scaling) {
        for (double ton_w : c.schedule.tau_on_weak) {
            for (double k : c.schedule.k) jobs.push_back({order, ton_w, k});
        }
    }
    std::vector<schedules::ProtocolSchedule> sch(jobs.size());
    std::vector<resonant::ProtocolOutcome> res(jobs.size());
    numerics::parallel_for(jobs.size(), threads, [&](std::size_t i) {
        sch[i] = resonant::isotherm_schedule({*c.model.eps_i, *c.model.eps_f, *c.model.g0, jobs[i].k,
                                              jobs[i].ton_w, *c.schedule.tau_iso_weak,
                                              jobs[i].order});
        res[i] = resonant::run_protocol_rl(resonant::params_from_schedule(sch[i], bath), so);
        res[i].solution.trajectory = {};
    });
    CsvTable t{"rl_protocol.csv",
               {"scaling", "tau_on_weak", "k", "tau_on", "tau_iso", "tau_tot", "W", "delta_F",
                "W_diss", "W_diss_over_k", "within_validity_window"},
               {}};
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        t.add({std::string(order_name(jobs[i].order)), jobs[i].ton_w, jobs[i].k, sch[i].tau_on,
               sch[i].tau_iso, sch[i].total_time(), res[i].W, res[i].delta_F, res[i].W_diss,
               res[i].W_diss / jobs[i].k, flag(res[i].solution.within_validity_window)});
    }
    ExperimentOutput out;
    out.tables.push_back(std::move(t));
    return out;
}

ExperimentOutput run_rl_decay(const ExperimentConfig& c, int threads) {
    const Bath bath = rl_bath(c, *c.model.Lambda);
    const auto so = solver_options(c);
    CsvTable pts{"decay_points.csv",
                 {"mode", "tau_on_weak", "tau_tot", "k", "tau_on", "tau_iso", "W_diss"},
                 {}};
    CsvTable fits{"decay_fits.csv", {"mode", "tau_on_weak", "nu", "r_squared", "unreliable"}, {}};
    ExperimentOutput out;
    auto emit = [&](const char* mode, double ton_w, const resonant::DecaySweep& sw) {
        for (const auto& p : sw.points) {
            pts.add({std::string(mode), ton_w, p.tau_tot, p.k, p.tau_on, p.tau_iso, p.W_diss});
        }
        fits.add({std::string(mode), ton_w, sw.nu, sw.r_squared, flag(sw.unreliable)});
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const auto base = resonant::decay_sweep(bath, *c.model.eps_i, *c.model.eps_f, *c.model.g0, 1.0,
                                            c.sweep.tau_tot, resonant::SweepMode::baseline, so,
                                            threads);
    emit("baseline", nan, base);
    out.summary["nu_baseline"] = base.nu;
    for (double ton_w : c.schedule.tau_on_weak) {
        const auto sw = resonant::decay_sweep(bath, *c.model.eps_i, *c.model.eps_f, *c.model.g0,
                                              ton_w, c.sweep.tau_tot, resonant::SweepMode::optimal,
                                              so, threads);
        emit("optimal", ton_w, sw);
    }
    out.tables = {std::move(fits), std::move(pts)};
    return out;
}

ExperimentOutput run_rl_fast(const ExperimentConfig& c, int threads) {
    const Bath bath = rl_bath(c, *c.model.Lambda);
    const auto so = solver_options(c);
    const double k = c.schedule.k.front();
    const double ratio = c.schedule.tau_ratio.front();
    struct Job {
        SwitchOrder order;
        double k;
        double tot_w;
    };
    std::vector<Job> jobs;
    for (double tot_w : c.sweep.tau_tot_weak) {
        jobs.push_back({SwitchOrder::quadratic, 1.0, tot_w});
        for (auto order : c.schedule.scaling) jobs.push_back({order, k, tot_w});
    }
    std::vector<schedules::ProtocolSchedule> sch(jobs.size());
    std::vector<double> wd(jobs.size());
    numerics::parallel_for(jobs.size(), threads, [&](std::size_t i) {
        const double ton_w = jobs[i].tot_w / (2.0 + ratio);
        sch[i] = resonant::isotherm_schedule({*c.model.eps_i, *c.model.eps_f, *c.model.g0,
                                              jobs[i].k, ton_w, ratio * ton_w, jobs[i].order});
        wd[i] = resonant::run_protocol_rl(resonant::params_from_schedule(sch[i], bath), so).W_diss;
    });
    CsvTable t{"fast_curves.csv",
               {"curve", "k", "scaling", "tau_tot_weak", "tau_on_weak", "tau_tot", "W_diss"},
               {}};
    CsvTable cmp{"fast_compare.csv",
                 {"scaling", "tau_tot_weak", "tau_tot_k1", "tau_tot_k", "W_diss_k1", "W_diss_k",
                  "relative_mismatch", "speedup"},
                 {}};
    const std::size_t per = 1 + c.schedule.scaling.size();
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const std::string curve = jobs[i].k == 1.0 ? std::string("reference")
                                                   : std::string(order_name(jobs[i].order));
        t.add({curve, jobs[i].k, std::string(order_name(jobs[i].order)), jobs[i].tot_w,
               jobs[i].tot_w / (2.0 + ratio), sch[i].total_time(), wd[i]});
        if (i % per != 0) {
            const std::size_t r = i - i % per;
            cmp.add({std::string(order_name(jobs[i].order)), jobs[i].tot_w, sch[r].total_time(),
                     sch[i].total_time(), wd[r], wd[i], std::abs(wd[i] - wd[r]) / wd[r],
                     sch[r].total_time() / sch[i].total_time()});
        }
    }
    ExperimentOutput out;
    out.tables = {std::move(t), std::move(cmp)};
    return out;
}

ExperimentOutput run_rl_noise(const ExperimentConfig& c, int threads) {
    const Bath bath = rl_bath(c, *c.model.Lambda);
    const auto so = solver_options(c);
    const auto sch = resonant::isotherm_schedule(
        {*c.model.eps_i, *c.model.eps_f, *c.model.g0, c.schedule.k.front(),
         c.schedule.tau_on_weak.front(), *c.schedule.tau_iso_weak, single_scaling(c)});
    const auto ref = resonant::isotherm_schedule(
        {*c.model.eps_i, *c.model.eps_f, *c.model.g0, 1.0, c.schedule.tau_on_weak.front(),
         *c.schedule.tau_iso_weak, SwitchOrder::quadratic});
    const double ref_wd = resonant::run_protocol_rl(resonant::params_from_schedule(ref, bath), so).W_diss;
    CsvTable sum{"noise_summary.csv",
                 {"sigma", "realizations", "mean", "variance", "stddev", "relative_stddev",
                  "noiseless", "reference_k1", "tau_tot", "tau_tot_k1", "rejected"},
                 {}};
    CsvTable all{"noise_realizations.csv",
                 {"sigma", "index", "tau_on", "tau_iso", "tau_off", "W_diss"},
                 {}};
    for (double sigma : c.sweep.sigma) {
        const auto r = resonant::noisy_protocol_mc(bath, sch, sigma, *c.sweep.realizations,
                                                   *c.sweep.seed, so, threads);
        sum.add({sigma, static_cast<long long>(*c.sweep.realizations), r.mean, r.variance, r.stddev,
                 r.stddev / r.mean, r.noiseless, ref_wd, sch.total_time(), ref.total_time(),
                 static_cast<long long>(r.rejected)});
        for (std::size_t i = 0; i < r.W_diss.size(); ++i) {
            all.add({sigma, static_cast<long long>(i), r.durations[i][0], r.durations[i][1],
                     r.durations[i][2], r.W_diss[i]});
        }
    }
    ExperimentOutput out;
    out.tables = {std::move(sum), std::move(all)};
    return out;
}

ExperimentOutput run_rl_cutoff(const ExperimentConfig& c, int threads) {
    const auto so = solver_options(c);
    CsvTable t{"cutoff.csv", {"k", "Lambda", "W", "W_diss"}, {}};
    CsvTable s{"cutoff_spread.csv", {"k", "relative_spread"}, {}};
    ExperimentOutput out;
    double worst = 0.0;
    for (double k : c.schedule.k) {
        const auto sch = resonant::isotherm_schedule(
            {*c.model.eps_i, *c.model.eps_f, *c.model.g0, k, c.schedule.tau_on_weak.front(),
             *c.schedule.tau_iso_weak, single_scaling(c)});
        const auto r = resonant::cutoff_convergence(rl_bath(c, c.sweep.Lambda.front()), sch,
                                                    c.sweep.Lambda, so, threads);
        for (std::size_t i = 0; i < r.Lambda.size(); ++i) t.add({k, r.Lambda[i], r.W[i], r.W_diss[i]});
        s.add({k, r.relative_spread});
        worst = std::max(worst, r.relative_spread);
    }
    out.summary["max_relative_spread"] = worst;
    out.tables = {std::move(t), std::move(s)};
    return out;
}

ExperimentOutput run_rl_carnot(const ExperimentConfig& c, int threads) {
    struct Job {
        SwitchOrder order;
        double k;
    };
    std::vector<Job> jobs;
    for (auto order : c.schedule.scaling) {
        for (double k : c.schedule.k) jobs.push_back({order, k});
    }
    std::vector<resonant::CycleResult> eng(jobs.size());
    std::vector<resonant::FridgeResult> fr(jobs.size());
    const double beta_c = 1.0 / *c.model.T_c, beta_h = 1.0 / *c.model.T_h;
    numerics::parallel_for(jobs.size(), threads, [&](std::size_t i) {
        resonant::CycleConfig cc;
        std::copy(c.model.eps.begin(), c.model.eps.end(), cc.eps.begin());
        cc.beta_c = beta_c;
        cc.beta_h = beta_h;
        cc.g0 = *c.model.g0;
        cc.k = jobs[i].k;
        cc.tau_on_weak = c.schedule.tau_on_weak.front();
        cc.tau_iso_weak = *c.schedule.tau_iso_weak;
        cc.scaling = jobs[i].order;
        cc.Lambda = *c.model.Lambda;
        cc.solver = solver_options(c);
        eng[i] = resonant::carnot_cycle(cc);
        fr[i] = resonant::refrigerator_cycle(cc);
    });
    CsvTable t{"carnot.csv",
               {"cycle", "scaling", "k", "efficiency", "power", "carnot_bound", "Q_h", "Q_c",
                "W", "tau_c", "tau_h", "cycles", "operating_mode_ok"},
               {}};
    CsvTable strokes{"carnot_strokes.csv",
                     {"cycle", "scaling", "k", "stroke", "eps_start", "eps_end", "n_start", "n_end",
                      "W", "Q", "duration"},
                     {}};
    const double eta_C = resonant::carnot_efficiency(beta_c, beta_h);
    const double cop_C = resonant::carnot_cop(beta_c, beta_h);
    const auto& e = c.model.eps;
    const std::array<std::pair<double, double>, 4> eng_eps{
        {{e[0], e[1]}, {e[1], e[2]}, {e[2], e[3]}, {e[3], e[0]}}};
    const std::array<std::pair<double, double>, 4> fr_eps{
        {{e[0], e[3]}, {e[3], e[2]}, {e[2], e[1]}, {e[1], e[0]}}};
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const std::string sc = order_name(jobs[i].order);
        const auto& a = eng[i];
        t.add({std::string("engine"), sc, jobs[i].k, a.eta, a.P, eta_C, a.Q_h, a.Q_c, a.W_total,
               a.tau_c, a.tau_h, static_cast<long long>(a.cycles), flag(a.engine)});
        const auto& f = fr[i];
        t.add({std::string("refrigerator"), sc, jobs[i].k, f.COP, f.cooling_power, cop_C, f.Q_h,
               f.Q_c, f.W_in, f.tau_c, f.tau_h, static_cast<long long>(f.cycles),
               flag(f.refrigerator)});
        for (int s = 0; s < 4; ++s) {
            const auto& se = a.strokes[s];
            strokes.add({std::string("engine"), sc, jobs[i].k, static_cast<long long>(s + 1),
                         eng_eps[s].first, eng_eps[s].second, se.n_start, se.n_end, se.W, se.Q,
                         se.duration});
        }
        for (int s = 0; s < 4; ++s) {
            const auto& se = f.strokes[s];
            strokes.add({std::string("refrigerator"), sc, jobs[i].k, static_cast<long long>(s + 1),
                         fr_eps[s].first, fr_eps[s].second, se.n_start, se.n_end, se.W, se.Q,
                         se.duration});
        }
    }
    ExperimentOutput out;
    out.summary = {{"carnot_efficiency", eta_C}, {"carnot_cop", cop_C}};
    out.tables = {std::move(t), std::move(strokes)};
    return out;
}

ExperimentOutput run_analytics_times(const ExperimentConfig& c, int) {
    const double alpha = *c.schedule.alpha;
    const double ton_w = c.schedule.tau_on_weak.front();
    CsvTable t{"times.csv", {"tau_ratio", "k", "tau_tot_first", "tau_tot_second"}, {}};
    CsvTable opt{"times_optimum.csv",
                 {"tau_ratio", "order", "k_grid", "tau_tot_grid", "k_closed_form",
                  "tau_tot_closed_form"},
                 {}};
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (double ratio : c.schedule.tau_ratio) {
        const double tiso_w = ratio * ton_w;
        std::array<double, 2> best{std::numeric_limits<double>::infinity(),
                                   std::numeric_limits<double>::infinity()};
        std::array<double, 2> best_k{1.0, 1.0};
        for (double k : c.schedule.k) {
            const double t1 = analytics::total_time(alpha, k, ton_w, tiso_w, SwitchOrder::first,
                                                    analytics::CostMethod::exact);
            const double t2 = analytics::total_time(alpha, k, ton_w, tiso_w, SwitchOrder::second,
                                                    analytics::CostMethod::exact);
            t.add({ratio, k, t1, t2});
            if (t1 < best[0]) best[0] = t1, best_k[0] = k;
            if (t2 < best[1]) best[1] = t2, best_k[1] = k;
        }
        const bool first_closed = alpha > 1.0;
        opt.add({ratio, std::string("first"), best_k[0], best[0],
                 first_closed ? analytics::optimal_k(alpha, ton_w, tiso_w, SwitchOrder::first) : nan,
                 first_closed ? analytics::min_total_time(alpha, ton_w, tiso_w, SwitchOrder::first)
                              : nan});
        opt.add({ratio, std::string("second"), best_k[1], best[1],
                 analytics::optimal_k(alpha, ton_w, tiso_w, SwitchOrder::second),
                 analytics::min_total_time(alpha, ton_w, tiso_w, SwitchOrder::second)});
    }
    ExperimentOutput out;
    out.tables = {std::move(t), std::move(opt)};
    return out;
}

ExperimentOutput run_machines_emp(const ExperimentConfig& c, int) {
    CsvTable emp{"emp.csv", {"gamma", "theta", "emp", "curzon_ahlborn", "carnot"}, {}};
    CsvTable cop{"cop.csv", {"gamma", "theta", "R", "cop_at_max_cooling", "carnot_cop"}, {}};
    for (double g : c.sweep.gamma) {
        for (double th : c.sweep.theta) {
            emp.add({g, th, machines::emp(g, th), machines::curzon_ahlborn_efficiency(th),
                     machines::carnot_efficiency(th)});
            cop.add({g, th, *c.sweep.R, machines::cop_at_max_cooling(g, th, *c.sweep.R),
                     machines::carnot_cop(th)});
        }
    }
    ExperimentOutput out;
    out.tables = {std::move(emp), std::move(cop)};
    return out;
}

}  // namespace

ExperimentOutput compute_experiment(const ExperimentConfig& config, int threads) {
    if (threads < 1) throw ConfigError("threads must be >= 1");
    using Runner = ExperimentOutput (*)(const ExperimentConfig&, int);
    static const std::map<std::string, Runner> runners = {
        {"cl-thermalize", run_cl_thermalize}, {"cl-covariance", run_cl_covariance},
        {"cl-protocol", run_cl_protocol},     {"rl-protocol", run_rl_protocol},
        {"rl-decay", run_rl_decay},           {"rl-fast", run_rl_fast},
        {"rl-noise", run_rl_noise},           {"rl-cutoff", run_rl_cutoff},
        {"rl-carnot", run_rl_carnot},         {"analytics-times", run_analytics_times},
        {"machines-emp", run_machines_emp},
    };
    const auto it = runners.find(config.experiment);
    if (it == runners.end()) throw ConfigError("unknown experiment '" + config.experiment + "'");
    return it->second(config, threads);
}

RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    namespace fs = std::filesystem;
    const std::string dir = !options.out_dir.empty() ? options.out_dir
                            : !config.output_path.empty() ? config.output_path
                                                          : std::string("out");
    ExperimentOutput output = compute_experiment(config, options.threads);
    const auto meta = metadata_lines(config);

    RunReport report;
    report.summary = output.summary;
    std::vector<fs::path> written;
    auto cleanup = [&] {
        std::error_code ec;
        for (const auto& p : written) fs::remove(p, ec);
    };
    auto write_file = [&](const fs::path& path, const std::string& text) {
        written.push_back(path);
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + path.string() + " for writing");
        f << text;
        f.close();
        if (!f) throw IoError("failed writing " + path.string());
    };
    try {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
        nlohmann::ordered_json manifest;
        manifest["toolkit"] = toolkit_version;
        manifest["experiment"] = config.experiment;
        manifest["seed"] = config.sweep.seed ? nlohmann::ordered_json(*config.sweep.seed)
                                             : nlohmann::ordered_json(nullptr);
        nlohmann::ordered_json params = nlohmann::ordered_json::object();
        for (const auto& [key, value] : config.entries) {
            if (key != "output.path") params[key] = value;
        }
        manifest["parameters"] = params;
        manifest["files"] = nlohmann::ordered_json::array();
        for (const auto& table : output.tables) {
            const fs::path p = fs::path(dir) / table.name;
            write_file(p, render_csv(table, meta));
            report.files.push_back(p.string());
            manifest["files"].push_back({{"name", table.name}, {"rows", table.rows.size()}});
        }
        nlohmann::ordered_json summary = nlohmann::ordered_json::object();
        for (const auto& [key, value] : output.summary) {
            summary[key] = format_cell(value);
        }
        manifest["summary"] = summary;
        manifest["status"] = "ok";
        const fs::path mp = fs::path(dir) / "manifest.json";
        write_file(mp, manifest.dump(2) + "\n");
        report.files.push_back(mp.string());
    } catch (...) {
        cleanup();
        throw;
    }
    return report;
}

}  // namespace isokit::cli
