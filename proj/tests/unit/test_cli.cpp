#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "isokit/cli.hpp"
#include "isokit/numerics.hpp"

using namespace isokit;
using namespace isokit::cli;
namespace fs = std::filesystem;

namespace {

const char* rl_text = R"(# resonant level
experiment = rl-protocol

[model]
beta = 1.0   # inverse temperature
Lambda = 100
g0 = 0.3
eps_i = 1
eps_f = 2

[schedule]
k = 1,2,4,8
tau_on_weak = 25
tau_iso_weak = 500
scaling = quadratic, linear
)";

std::string noise_text(const std::string& sigma) {
    return "[model]\nbeta = 1\nLambda = 100\ng0 = 0.3\neps_i = 1\neps_f = 2\n"
           "[schedule]\nk = 2\ntau_on_weak = 1\ntau_iso_weak = 8\n"
           "[sweep]\nsigma = " + sigma + "\nrealizations = 6\nseed = 11\n";
}

std::vector<ConfigIssue> issues_of(const std::string& text, const std::string& expected) {
    try {
        parse_config(text, expected);
    } catch (const ConfigParseError& e) {
        return e.issues();
    }
    return {};
}

bool mentions(const std::vector<ConfigIssue>& issues, int line, const std::string& needle) {
    for (const auto& i : issues) {
        if (i.line == line && i.message.find(needle) != std::string::npos) return true;
    }
    return false;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("isokit_test_cli_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("parse_config reads sections, comments and lists") {
    const ExperimentConfig c = parse_config(rl_text, "rl-protocol");
    CHECK(c.experiment == "rl-protocol");
    CHECK(*c.model.beta == 1.0);
    CHECK(*c.model.g0 == 0.3);
    REQUIRE(c.schedule.k.size() == 4);
    CHECK(c.schedule.k == std::vector<double>{1, 2, 4, 8});
    REQUIRE(c.schedule.scaling.size() == 2);
    CHECK(c.schedule.scaling[0] == schedules::SwitchOrder::quadratic);
    CHECK(c.schedule.scaling[1] == schedules::SwitchOrder::linear);
    CHECK(!c.model.mu.has_value());
    CHECK(c.entries.front().first == "model.beta");
    CHECK(c.entries.front().second == "1.0");
}

TEST_CASE("parse_config takes the experiment from the file when no command is given") {
    CHECK(parse_config(rl_text).experiment == "rl-protocol");
}

TEST_CASE("misspelled key is reported with its line number") {
    std::string text = rl_text;
    text.replace(text.find("tau_iso_weak"), 12, "tau_iso_wek");
    const auto issues = issues_of(text, "rl-protocol");
    CHECK(mentions(issues, 14, "unknown key schedule.tau_iso_wek"));
    CHECK(mentions(issues, 16, "missing required key schedule.tau_iso_weak"));
}

TEST_CASE("every problem is collected in one pass") {
    const std::string text =
        "experiment = rl-protocol\n"
        "[model]\n"
        "beta = -1\n"
        "Lambda = abc\n"
        "g0 = 0.3\n"
        "eps_i = 1\n"
        "eps_i = 2\n"
        "[schedul]\n"
        "k = 1\n"
        "[schedule]\n"
        "k = 1, 0.5\n"
        "no equals sign\n";
    const auto issues = issues_of(text, "");
    CHECK(mentions(issues, 3, "out of range"));
    CHECK(mentions(issues, 4, "expected a number"));
    CHECK(mentions(issues, 7, "duplicate key model.eps_i"));
    CHECK(mentions(issues, 8, "unknown section"));
    CHECK(mentions(issues, 11, "out of range"));
    CHECK(mentions(issues, 12, "expected 'key = value'"));
    CHECK(mentions(issues, 13, "missing required key model.eps_f"));
    CHECK(mentions(issues, 13, "missing required key schedule.tau_iso_weak"));
    CHECK(issues.size() >= 9);
}

TEST_CASE("experiment mismatch and keys foreign to the experiment are rejected") {
    CHECK(mentions(issues_of(rl_text, "rl-noise"), 2, "but the command is 'rl-noise'"));
    std::string text = rl_text;
    text += "[sweep]\nsigma = 0.1\n";
    CHECK(mentions(issues_of(text, "rl-protocol"), 17, "unknown key sweep.sigma"));
    CHECK(mentions(issues_of("[model]\nbeta = 1\n", ""), 0, "no experiment"));
}

TEST_CASE("single-valued keys and cross-field checks") {
    const auto issues = issues_of(noise_text("0.1") + "[schedule]\n", "rl-noise");
    CHECK(issues.empty());
    std::string multi = noise_text("0.1");
    multi.replace(multi.find("k = 2"), 5, "k = 2, 4");
    CHECK(mentions(issues_of(multi, "rl-noise"), 15, "schedule.k must hold a single value"));
    CHECK(mentions(issues_of(noise_text("0.3"), "rl-noise"), 12, "out of range"));
}

TEST_CASE("ConfigParseError is a config error with exit code 2") {
    try {
        parse_config("[model]\nfoo = 1\n", "rl-protocol");
        FAIL("expected a throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
        CHECK(exit_code(e.kind()) == 2);
        CHECK(std::string(e.what()).find("line 2:") != std::string::npos);
    }
}

TEST_CASE("CSV doubles round-trip exactly") {
    for (std::uint64_t i = 0; i < 2000; ++i) {
        const double u = numerics::rng_uniform(7, i);
        const double v = std::ldexp(u - 0.5, static_cast<int>(i % 600) - 300);
        const std::string s = format_cell(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
    CHECK(format_cell(0.1) == "0.10000000000000001");
    CHECK(format_cell(3LL) == "3");
    CHECK(format_cell(std::string("engine")) == "engine");
}

TEST_CASE("render_csv writes metadata, header and rows") {
    CsvTable t{"x.csv", {"a", "b"}, {}};
    t.add({1.5, std::string("q")});
    CHECK_THROWS_AS(t.add({1.0}), NumericError);
    CHECK(render_csv(t, {"toolkit = v"}) == "# toolkit = v\na,b\n1.5,q\n");
}

TEST_CASE("metadata carries toolkit version, seed and parameters") {
    const auto c = parse_config(noise_text("0"), "rl-noise");
    const auto m = metadata_lines(c);
    CHECK(m[0] == std::string("toolkit = ") + toolkit_version);
    CHECK(m[1] == "experiment = rl-noise");
    CHECK(m[2] == "seed = 11");
    CHECK(std::find(m.begin(), m.end(), "model.g0 = 0.3") != m.end());
}

TEST_CASE("rl-noise with sigma = 0 gives zero variance") {
    const auto c = parse_config(noise_text("0"), "rl-noise");
    const auto out = compute_experiment(c, 1);
    const CsvTable& s = out.tables.at(0);
    REQUIRE(s.rows.size() == 1);
    const auto col = std::find(s.header.begin(), s.header.end(), "variance") - s.header.begin();
    CHECK(std::get<double>(s.rows[0][col]) == 0.0);
    const auto mean = std::get<double>(s.rows[0][2]);
    const auto noiseless = std::get<double>(s.rows[0][6]);
    CHECK(mean == doctest::Approx(noiseless).epsilon(1e-12));
}

TEST_CASE("same seed gives identical bytes across reruns and thread counts") {
    const auto c = parse_config(noise_text("0, 0.05"), "rl-noise");
    const fs::path a = fresh_dir("a"), b = fresh_dir("b"), d = fresh_dir("d");
    const auto ra = run_experiment(c, {a.string(), 1});
    run_experiment(c, {b.string(), 1});
    run_experiment(c, {d.string(), 3});
    REQUIRE(ra.files.size() == 3);
    for (const auto& f : {"noise_summary.csv", "noise_realizations.csv", "manifest.json"}) {
        const std::string ref = slurp(a / f);
        CHECK(!ref.empty());
        CHECK(ref == slurp(b / f));
        CHECK(ref == slurp(d / f));
    }
    const std::string summary = slurp(a / "noise_summary.csv");
    CHECK(summary.rfind("# toolkit = ", 0) == 0);
    CHECK(summary.find("# seed = 11\n") != std::string::npos);

    ExperimentConfig other = c;
    other.sweep.seed = 12;
    const fs::path e = fresh_dir("e");
    run_experiment(other, {e.string(), 1});
    CHECK(slurp(e / "noise_realizations.csv") != slurp(a / "noise_realizations.csv"));
    for (const auto& p : {a, b, d, e}) fs::remove_all(p);
}

TEST_CASE("partial outputs are removed when writing fails") {
    const auto c = parse_config(noise_text("0"), "rl-noise");
    const fs::path dir = fresh_dir("partial");
    fs::create_directories(dir / "noise_realizations.csv");
    CHECK_THROWS_AS(run_experiment(c, {dir.string(), 1}), IoError);
    CHECK(!fs::exists(dir / "noise_summary.csv"));
    CHECK(!fs::exists(dir / "manifest.json"));
    fs::remove_all(dir);
}

TEST_CASE("machines-emp and analytics-times tables") {
    const auto m = compute_experiment(
        parse_config("[sweep]\ngamma = 1, 2\ntheta = 0.25, 0.5\nR = 2\n", "machines-emp"), 1);
    REQUIRE(m.tables.size() == 2);
    CHECK(m.tables[0].rows.size() == 4);
    CHECK(std::get<double>(m.tables[0].rows[0][3]) == doctest::Approx(0.5));

    const auto t = compute_experiment(
        parse_config("[schedule]\nalpha = 1\ntau_on_weak = 1\ntau_ratio = 20\nk = 1, 2, 3\n",
                     "analytics-times"),
        1);
    REQUIRE(t.tables[0].rows.size() == 3);
    // alpha = 1: tau_tot(k) = 2 (k-1)^2/k + 20/k^2 at first order
    CHECK(std::get<double>(t.tables[0].rows[1][2]) == doctest::Approx(2.0 * 0.5 + 5.0).epsilon(1e-9));
}

TEST_CASE("every shipped config parses") {
    int count = 0;
    for (const auto& entry : fs::directory_iterator(ISOKIT_CONFIG_DIR)) {
        if (entry.path().extension() != ".cfg") continue;
        const std::string text = slurp(entry.path());
        CAPTURE(entry.path().string());
        CHECK_NOTHROW(parse_config(text));
        ++count;
    }
    CHECK(count >= 11);
}

TEST_CASE("command line exit codes and seed override") {
    const fs::path dir = fresh_dir("exe");
    fs::create_directories(dir);
    const fs::path bad = dir / "bad.cfg";
    std::ofstream(bad) << "[sweep]\ngama = 1\ntheta = 0.5\nR = 2\n";
    const fs::path good = dir / "noise.cfg";
    std::ofstream(good) << noise_text("0.05");
    auto run = [&](const std::string& args) {
        const std::string cmd = std::string(ISOKIT_CLI) + " " + args + " > " +
                                (dir / "log.txt").string() + " 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };
    CHECK(run("machines-emp --config " + bad.string() + " --out " + (dir / "o1").string()) == 2);
    CHECK(slurp(dir / "log.txt").find("bad.cfg:2: unknown key sweep.gama") != std::string::npos);
    CHECK(!fs::exists(dir / "o1" / "emp.csv"));
    CHECK(run("rl-noise --config " + (dir / "missing.cfg").string()) == 8);
    CHECK(run("no-such-command") == 2);

    REQUIRE(run("rl-noise --config " + good.string() + " --out " + (dir / "s1").string() +
                " --seed 99") == 0);
    REQUIRE(run("rl-noise --config " + good.string() + " --out " + (dir / "s2").string() +
                " --seed 99 --threads 2") == 0);
    const std::string s1 = slurp(dir / "s1" / "noise_realizations.csv");
    CHECK(s1.find("# seed = 99\n") != std::string::npos);
    CHECK(s1 == slurp(dir / "s2" / "noise_realizations.csv"));
    fs::remove_all(dir);
}

TEST_CASE("cl-protocol over k = 1..5 emits five rows") {
    const auto c = parse_config(
        "[model]\nN = 30\nomega_S = 1\nomega_f = 1.5\nbeta = 1.2\ng0 = 0.1\n"
        "[schedule]\nk = 1, 2, 3, 4, 5\ntau_on_weak = 1\ntau_iso_weak = 5\n",
        "cl-protocol");
    const auto out = compute_experiment(c, 1);
    const CsvTable& t = out.tables.at(0);
    REQUIRE(t.rows.size() == 5);
    for (std::size_t r = 0; r < 5; ++r) {
        CHECK(std::get<double>(t.rows[r][1]) == static_cast<double>(r + 1));
        CHECK(std::get<double>(t.rows[r][8]) >= -1e-6);
    }
}
