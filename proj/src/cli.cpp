#include "stratadj/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stratadj/csv.hpp"
#include "stratadj/error.hpp"
#include "stratadj/estimators.hpp"
#include "stratadj/oracle_suite.hpp"
#include "stratadj/simulation.hpp"

namespace stratadj {

namespace {

using nlohmann::json;

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
    std::vector<Method> out;
    for (const auto& n : names) out.push_back(parse_method(n));
    if (out.empty()) throw Error(ErrorKind::InvalidInput, "at least one method is required");
    return out;
}

std::uint64_t parse_seed(const std::string& text, const std::string& source) {
    std::uint64_t v = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || text.empty()) {
        throw Error(ErrorKind::InvalidInput, source + ": '" + text + "' is not an unsigned 64-bit integer");
    }
    return v;
}

void write_json_file(const std::string& path, const json& doc) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::InvalidInput, "cannot write '" + path + "'");
    f << doc.dump(2) << '\n';
}

json number_or_null(const std::optional<double>& v) { return v ? json(round_sig6(*v)) : json(nullptr); }

std::string fixed6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string padded(const std::string& s, std::size_t width) {
    return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
    std::string input;
    std::vector<std::string> methods{"unadj", "ols", "ols_int"};
    double alpha = 0.05;
    std::string format = "table";
    std::string df_divisor = "arm";
    std::string out_path;
};

struct MethodOutcome {
    Method method{};
    std::optional<EstimateReport> report;
    std::string reason;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
    const auto methods = parse_methods(a.methods);
    const DfDivisor divisor = parse_df_divisor(a.df_divisor);
    if (!(a.alpha > 0.0 && a.alpha < 1.0)) throw Error(ErrorKind::InvalidAlpha, "alpha must lie in (0,1)");
    const ObservedDataset data = load_dataset(a.input);
    const auto& design = data.design();

    std::vector<MethodOutcome> outcomes;
    for (Method m : methods) {
        MethodOutcome o{m, std::nullopt, {}};
        try {
            check_applicable(m, design, data.num_covariates());
            o.report = estimate(m, data, a.alpha, divisor);
            if (!o.report->var_hat) o.reason = o.report->note;
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::InvalidAlpha) throw;
            o.reason = e.what();
        }
        outcomes.push_back(std::move(o));
    }

    json doc;
    doc["input"] = a.input;
    doc["alpha"] = a.alpha;
    doc["N"] = design.total_units();
    doc["B"] = design.num_strata();
    doc["K"] = data.num_covariates();
    auto& results = doc["results"] = json::array();
    for (const auto& o : outcomes) {
        json r;
        r["method"] = std::string(to_string(o.method));
        r["tau_hat"] = o.report ? json(round_sig6(o.report->tau_hat)) : json(nullptr);
        r["se"] = o.report ? number_or_null(o.report->se) : json(nullptr);
        r["ci"] = o.report && o.report->ci
                      ? json::array({round_sig6(o.report->ci->first), round_sig6(o.report->ci->second)})
                      : json(nullptr);
        auto& strata = r["strata"] = json::array();
        if (o.report) {
            for (int i = 0; i < design.num_strata(); ++i) {
                const auto& s = design.stratum(i);
                strata.push_back({{"label", data.labels()[static_cast<std::size_t>(i)]},
                                  {"n", s.n},
                                  {"n1", s.n1},
                                  {"weight", round_sig6(design.weight(i))},
                                  {"tau_hat", round_sig6(o.report->per_stratum[static_cast<std::size_t>(i)])}});
            }
        }
        r["reason"] = o.reason.empty() ? json(nullptr) : json(o.reason);
        results.push_back(std::move(r));
    }
    if (!a.out_path.empty()) write_json_file(a.out_path, doc);

    if (a.format == "json") {
        out << doc.dump(2) << '\n';
        return kExitOk;
    }
    out << "input " << a.input << "\n";
    out << "N " << design.total_units() << "  B " << design.num_strata() << "  K " << data.num_covariates()
        << "  alpha " << a.alpha << "\n\n";
    out << padded("method", 9) << padded("tau_hat", 12) << padded("se", 12) << padded("ci_lo", 12) << "ci_hi\n";
    for (const auto& o : outcomes) {
        out << padded(std::string(to_string(o.method)), 9);
        if (!o.report) {
            out << "n/a (" << o.reason << ")\n";
            continue;
        }
        out << padded(fixed6(o.report->tau_hat), 12);
        if (o.report->ci) {
            out << padded(fixed6(*o.report->se), 12) << padded(fixed6(o.report->ci->first), 12)
                << fixed6(o.report->ci->second) << '\n';
        } else {
            out << "n/a (" << o.reason << ")\n";
        }
    }
    out << "\nper-stratum estimates\n";
    out << padded("stratum", 12) << padded("n", 6) << padded("n1", 6) << padded("weight", 10);
    for (const auto& o : outcomes) {
        if (o.report) out << padded(std::string(to_string(o.method)), 12);
    }
    out << '\n';
    for (int i = 0; i < design.num_strata(); ++i) {
        const auto& s = design.stratum(i);
        char w[32];
        std::snprintf(w, sizeof w, "%.4f", design.weight(i));
        out << padded(data.labels()[static_cast<std::size_t>(i)], 12) << padded(std::to_string(s.n), 6)
            << padded(std::to_string(s.n1), 6) << padded(w, 10);
        for (const auto& o : outcomes) {
            if (o.report) out << padded(fixed6(o.report->per_stratum[static_cast<std::size_t>(i)]), 12);
        }
        out << '\n';
    }
    return kExitOk;
}

// ---- simulate --------------------------------------------------------------

struct SimulateArgs {
    std::string config_path;
    std::optional<int> scenario;
    std::optional<int> B;
    std::optional<int> size;
    std::optional<int> K;
    std::optional<double> rho;
    std::optional<int> reps;
    std::optional<int> boot_reps;
    std::optional<double> alpha;
    std::optional<double> snr;
    std::vector<std::string> methods;
    std::optional<std::string> df_divisor;
    std::optional<std::string> seed;
    int workers = 1;
    std::string format = "table";
    std::string out_path;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    ScenarioConfig c;
    bool seed_from_config = false;
    if (!a.config_path.empty()) {
        std::ifstream f(a.config_path);
        if (!f) throw Error(ErrorKind::InvalidInput, "cannot open config '" + a.config_path + "'");
        json j;
        try {
            j = json::parse(f);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::ParseError, "config '" + a.config_path + "': " + e.what());
        }
        c = config_from_json(j);
        seed_from_config = j.contains("seed");
    }
    if (a.scenario) {
        if (*a.scenario < 0 || *a.scenario > 4) throw Error(ErrorKind::InvalidInput, "--scenario must be 0-4");
        c.scenario = static_cast<Scenario>(*a.scenario);
    }
    if (a.B) c.B = *a.B;
    if (a.size) c.size = *a.size;
    if (a.K) c.K = *a.K;
    if (a.rho) c.rho = *a.rho;
    if (a.reps) c.reps = *a.reps;
    if (a.boot_reps) c.boot_reps = *a.boot_reps;
    if (a.alpha) c.alpha = *a.alpha;
    if (a.snr) c.snr = *a.snr;
    if (!a.methods.empty()) c.methods = parse_methods(a.methods);
    if (a.df_divisor) c.df_divisor = parse_df_divisor(*a.df_divisor);
    if (a.seed) {
        c.master_seed = parse_seed(*a.seed, "--seed");
    } else if (!seed_from_config) {
        if (const char* env = std::getenv("STRATADJ_SEED")) c.master_seed = parse_seed(env, "STRATADJ_SEED");
    }
    c.workers = a.workers;

    const MetricsTable table = run_monte_carlo(c);
    const json doc = metrics_to_json(table);
    if (!a.out_path.empty()) write_json_file(a.out_path, doc);
    if (a.format == "json") {
        out << doc.dump(2) << '\n';
    } else {
        out << "config " << config_to_json(table.config).dump() << '\n';
        out << format_metrics_table(table);
    }
    return kExitOk;
}

// ---- oracle-check ----------------------------------------------------------

struct OracleArgs {
    std::string scale = "small";
    int workers = 1;
    std::string format = "table";
    std::string out_path;
    bool corrupt = false;
};

int cmd_oracle_check(const OracleArgs& a, std::ostream& out) {
    SuiteOptions opts;
    opts.scale = a.scale == "large" ? SuiteScale::large : SuiteScale::small;
    opts.workers = a.workers;
    opts.corrupt_fixture = a.corrupt;
    const auto results = run_identity_suite(opts);

    json doc;
    auto& rows = doc["identities"] = json::array();
    int passed = 0;
    for (const auto& r : results) {
        rows.push_back({{"identity", r.identity},
                        {"fixture", r.fixture},
                        {"error", round_sig6(r.error)},
                        {"tolerance", r.tolerance},
                        {"pass", r.pass}});
        passed += r.pass;
    }
    doc["passed"] = passed;
    doc["total"] = results.size();
    doc["scale"] = a.scale;
    if (!a.out_path.empty()) write_json_file(a.out_path, doc);
    if (a.format == "json") {
        out << doc.dump(2) << '\n';
    } else {
        out << format_identity_table(results);
    }
    return passed == static_cast<int>(results.size()) ? kExitOk : kExitVerificationFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Randomization-based estimation for stratified randomized experiments", "stratadj"};
    app.require_subcommand(1);
    const auto formats = CLI::IsMember({"table", "json"});
    const auto divisors = CLI::IsMember({"arm", "stratum"});

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "Estimate the average treatment effect from a CSV file");
    analyze->add_option("input", an.input, "CSV with header stratum,z,y,x1,...,xK")->required();
    analyze->add_option("--methods", an.methods, "Comma-separated subset of unadj,ols,ols_int")->delimiter(',');
    analyze->add_option("--alpha", an.alpha, "Confidence intervals have level 1 - alpha");
    analyze->add_option("--format", an.format, "Output format")->check(formats);
    analyze->add_option("--df-divisor", an.df_divisor, "Residual df base for ols_int")->check(divisors);
    analyze->add_option("--out", an.out_path, "Also write the JSON report here");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run the Monte Carlo study");
    simulate->add_option("--config", sim.config_path, "JSON scenario config");
    simulate->add_option("--scenario", sim.scenario, "1-4, or 0 for custom");
    simulate->add_option("--B", sim.B, "Number of small strata (scenarios 1 and 4)");
    simulate->add_option("--size", sim.size, "Large-stratum size (scenarios 2 and 3)");
    simulate->add_option("--K", sim.K, "Covariate count (custom scenario)");
    simulate->add_option("--rho", sim.rho, "Covariate correlation");
    simulate->add_option("--reps", sim.reps, "Replications");
    simulate->add_option("--boot-reps", sim.boot_reps, "Bootstrap replications for metric SEs");
    simulate->add_option("--alpha", sim.alpha, "Confidence intervals have level 1 - alpha");
    simulate->add_option("--snr", sim.snr, "Signal-to-noise ratio");
    simulate->add_option("--methods", sim.methods, "Comma-separated subset of unadj,ols,ols_int")->delimiter(',');
    simulate->add_option("--df-divisor", sim.df_divisor, "Residual df base for ols_int")->check(divisors);
    simulate->add_option("--seed", sim.seed, "Master seed (falls back to STRATADJ_SEED)");
    simulate->add_option("--workers", sim.workers, "Worker threads; results do not depend on it")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--format", sim.format, "Output format")->check(formats);
    simulate->add_option("--out", sim.out_path, "Also write the JSON metrics here");

    OracleArgs orc;
    auto* oracle = app.add_subcommand("oracle-check", "Verify the exact identities on built-in populations");
    oracle->add_option("--scale", orc.scale, "small or large fixture set")->check(CLI::IsMember({"small", "large"}));
    oracle->add_option("--workers", orc.workers, "Worker threads; results do not depend on it")
        ->check(CLI::PositiveNumber);
    oracle->add_option("--format", orc.format, "Output format")->check(formats);
    oracle->add_option("--out", orc.out_path, "Also write the JSON results here");
    oracle->add_flag("--corrupt-fixture", orc.corrupt)->group("");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInputError;
    }

    try {
        if (*analyze) return cmd_analyze(an, out);
        if (*simulate) return cmd_simulate(sim, out);
        return cmd_oracle_check(orc, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputError;
    }
}

}  // namespace stratadj
